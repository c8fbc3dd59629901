#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cfrl/nn.hpp"
#include "cfrl/pose.hpp"
#include "cfrl/rng.hpp"
#include "cfrl/sim.hpp"

// Counterfactual prediction learning: multi-horizon GVF questions over the
// relative-pose cumulant, trained offline by TD with discriminator-based
// density-ratio importance resampling.
namespace cfrl::gvf {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXf;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec6f = Eigen::Matrix<float, 6, 1>;
using Vec7f = Eigen::Matrix<float, 7, 1>;

// A GVF question tuple: counterfactual policy tau(a_t | a_{t-1}) =
// N(a_{t-1}, diag(tau_sigma)), horizon mixture gammas, cumulant scale lambda.
struct GvfQuestion {
    VectorXd tau_sigma;                            // per-joint variances, > 0
    std::vector<double> gammas = {0.0, 0.5, 0.9, 0.95};
    double lambda = 1.0;

    int horizon_count() const { return static_cast<int>(gammas.size()); }
    void validate() const; // throws std::invalid_argument
};

// One logged interaction step; float32 storage, training math in double.
struct Obs32 {
    VectorXf image;
    VectorXf joint_pos;
    VectorXf joint_torque;
};

struct Transition {
    Obs32 obs;
    VectorXf a_prev; // zero action on the first step of an episode
    VectorXf action;
    Vec6f cumulant_next;
    float continuation_next = 1.0f; // 0 at episode end
    bool terminal = false;
    Vec7f pose_gt = Vec7f::Zero(); // relative pose at t+1 (quat wxyz + translation)
    Obs32 obs_next;
};

Obs32 to_obs32(const sim::Observation& obs);

// --- cumulant ----------------------------------------------------------------

// *T_c = (T_*)^-1 T_c.
Pose relative_pose(const Pose& t_star, const Pose& t_c);

// c = -lambda [ *t_c ; theta * u ], 6-dimensional.
Vec6 cumulant(const Pose& rel, double lambda);

// --- counterfactual policy tau -------------------------------------------------

double tau_logpdf(const GvfQuestion& q, const VectorXd& a, const VectorXd& a_prev);
VectorXd tau_sample(const GvfQuestion& q, const VectorXd& a_prev, Rng& rng);

// --- density-ratio model -------------------------------------------------------

struct RatioTrainConfig {
    std::vector<int> hidden = {64, 64};
    double step_size = 1e-3;
    int batch_size = 256;
    int steps = 3000;
    size_t min_transitions = 1000;
    bool include_image = false; // action-space question; image off by default
    double clamp_epsilon = 1e-4;
};

// Discriminator g(a, s) trained to separate tau-resampled actions (label 1)
// from logged actions (label 0); rho = g / (1 - g) after clamping g to
// [eps, 1-eps].
struct RatioModel {
    nn::ParamSet discriminator; // sigmoid output
    VectorXd input_mean, input_std;
    bool include_image = false;
    bool degenerate = false; // identical actions everywhere; rho == 1
    double clamp_epsilon = 1e-4;
    double final_loss = 0.0;

    double g(const Transition& t, const VectorXd& action) const;
    double log_ratio(const Transition& t, const VectorXd& action) const;
    double ratio(const Transition& t) const; // at the logged action
};

RatioModel train_ratio_model(const std::vector<Transition>& data, const GvfQuestion& q,
                             const RatioTrainConfig& cfg, uint64_t seed);

// Sampling weights proportional to clamped rho over the buffer (or its first
// `count` entries); all-zero weights fall back to uniform with a warning.
struct ResampleTable {
    std::vector<double> cdf; // inclusive prefix sums
    size_t sample(Rng& rng) const;
};
ResampleTable build_resample_table(const std::vector<Transition>& buffer, const RatioModel& rm,
                                   size_t count = 0);

// With-replacement batch of buffer indices, probability proportional to rho.
std::vector<size_t> importance_resample(const std::vector<Transition>& buffer,
                                        const RatioModel& rm, size_t batch_size, Rng& rng);

// --- TD learning ---------------------------------------------------------------

struct GvfTrainConfig {
    std::vector<int> hidden = {128, 64};
    double step_size = 1e-3;
    int batch_size = 256;
    int td_steps = 8000;
    double polyak_rate = 0.005;
    bool include_image = true;
    bool include_joint_pos = true;
    bool include_action = true;
    bool use_importance_resampling = true;
    RatioTrainConfig ratio;
};

// Input layout and normalization shared by training and online prediction.
struct InputCodec {
    bool include_image = true;
    bool include_joint_pos = true;
    bool include_action = true;
    int image_pixels = 0;
    int n_joints = 0;
    int action_dim = 0;
    VectorXd proprio_mean, proprio_std; // over (joint_pos, action) dims only

    int input_dim() const;
    VectorXd encode(const Obs32& obs, const VectorXd& action) const;
    VectorXd encode(const sim::Observation& obs, const VectorXd& action) const;
};
InputCodec fit_codec(const std::vector<Transition>& data, const GvfTrainConfig& cfg);

// Trained predictor: psi laid out as horizon blocks of 6 cumulant dims,
// block order following question.gammas.
struct GvfPredictor {
    nn::ParamSet net;
    GvfQuestion question;
    InputCodec codec;

    VectorXd predict(const Obs32& obs, const VectorXd& action) const;
    VectorXd predict(const sim::Observation& obs, const VectorXd& action) const;

    // Model file plus a JSON sidecar (question + codec) at path + ".json".
    void save(const std::string& path) const;
    static GvfPredictor load(const std::string& path);
};

class GvfLearner {
public:
    GvfLearner(const GvfQuestion& q, const GvfTrainConfig& cfg, const InputCodec& codec,
               uint64_t seed);

    // One TD step on a batch of buffer indices: block-k target is
    // c_{t+1} + gamma_k * continuation * psi_target(obs_next, a') with
    // a' ~ tau(.|a_t). Returns the batch loss; skips the update (returning
    // NaN-free last loss) if a non-finite target shows up.
    double td_update(const std::vector<Transition>& data, const std::vector<size_t>& batch,
                     Rng& rng);

    const nn::ParamSet& net() const { return net_; }
    GvfPredictor freeze() const;

private:
    GvfQuestion question_;
    GvfTrainConfig cfg_;
    InputCodec codec_;
    nn::ParamSet net_;
    nn::ParamSet target_net_;
    nn::OptimizerState opt_;
    double last_loss_ = 0.0;
};

// --- Monte-Carlo oracle ----------------------------------------------------------

// Resettable model of a small environment for direct rollout of the GVF
// definition; used by tests and the acceptance suite.
class RolloutModel {
public:
    virtual ~RolloutModel() = default;
    virtual int action_dim() const = 0;
    virtual int cumulant_dim() const = 0;
    virtual void reset_start() = 0;
    // Advances one step; returns (cumulant c_{t+1}, continuation in {0,1}).
    virtual std::pair<VectorXd, double> step(const VectorXd& action) = 0;
};

// Empirical mean over n_rollouts of sum_k (prod gamma) c following tau from
// the snapshot with the given first action. Returns horizon-block layout
// (gammas.size() x cumulant_dim, flattened block-major).
VectorXd monte_carlo_gvf_oracle(RolloutModel& model, const GvfQuestion& q,
                                const VectorXd& first_action, int n_rollouts, int max_horizon,
                                Rng& rng);

} // namespace cfrl::gvf
