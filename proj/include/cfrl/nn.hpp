#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cfrl/rng.hpp"

// Dense MLP core used by every learner in the repo: hand-rolled forward /
// reverse-mode gradients / Adam, double precision in memory, float32 on disk.
namespace cfrl::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation : uint8_t {
    Relu = 0,
    Tanh = 1,
    Identity = 2,
    Sigmoid = 3,
};

struct Layer {
    MatrixXd weight; // out x in
    VectorXd bias;   // out
    Activation act = Activation::Identity;
};

// Weights of one trainable function approximator. Layers compose
// (in_{k+1} == out_k); hidden activations are Relu or Tanh, the output
// activation is Identity, Sigmoid or Tanh.
struct ParamSet {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }
    bool shape_matches(const ParamSet& other) const;
    bool all_finite() const;
};

// Gradient of a loss w.r.t. a ParamSet; same shapes as the tracked params.
using GradSet = ParamSet;

// Weight init: W_ij ~ Uniform(-s, s) with s = sqrt(3 / fan_in) (LeCun
// uniform), biases zero. Deterministic given seed.
ParamSet init_params(const std::vector<int>& layer_sizes,
                     Activation hidden_act,
                     Activation output_act,
                     uint64_t seed);

ParamSet zeros_like(const ParamSet& p);

VectorXd forward(const ParamSet& p, const VectorXd& x);

// Post-activation outputs of every layer; [0] is the input itself. The
// success-classifier latent tap reads entry layers.size()-1 of this.
std::vector<VectorXd> forward_all(const ParamSet& p, const VectorXd& x);

// Reverse-mode gradients of the forward map. upstream is dLoss/dOutput.
// Returns parameter gradients; input_grad (optional) receives dLoss/dInput.
GradSet backward(const ParamSet& p, const VectorXd& x, const VectorXd& upstream,
                 VectorXd* input_grad = nullptr);

// Batched variants (columns are samples); used on the training paths.
struct BatchTrace {
    std::vector<MatrixXd> activations; // [0] = input batch
    std::vector<MatrixXd> pre;         // pre-activation per layer
};
MatrixXd forward_batch(const ParamSet& p, const MatrixXd& x, BatchTrace* trace = nullptr);
GradSet backward_batch(const ParamSet& p, const BatchTrace& trace, const MatrixXd& upstream,
                       MatrixXd* input_grad = nullptr);

struct AdamConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct OptimizerState {
    ParamSet first_moment;
    ParamSet second_moment;
    int64_t step_count = 0;
    AdamConfig config;

    static OptimizerState create(const ParamSet& tracked, const AdamConfig& cfg);
};

// Bias-corrected Adam update, in place. Throws on non-finite gradients so the
// caller can decide to skip the batch.
void adam_step(ParamSet& p, const GradSet& g, OptimizerState& st);

void polyak_update(ParamSet& target, const ParamSet& online, double rate);

// Accumulate: dst += scale * src (shape-checked).
void axpy(GradSet& dst, const GradSet& src, double scale = 1.0);
void scale_grads(GradSet& g, double scale);

// Model file format: magic "CFRLMDL1", little-endian layer count u32, then
// per layer (in u32, out u32, activation u8), then row-major float32 weights
// and biases in layer order.
void save_model(const ParamSet& p, const std::string& path);
ParamSet load_model(const std::string& path);

} // namespace cfrl::nn
