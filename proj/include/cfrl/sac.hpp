#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "cfrl/nn.hpp"
#include "cfrl/rng.hpp"
#include "cfrl/sim.hpp"

// Soft actor-critic over the composed state [feature block, joint pos,
// joint torques]: squashed-Gaussian actor, clipped double critics,
// temperature tracking a target entropy.
namespace cfrl::sac {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXf;

struct SacConfig {
    std::vector<int> actor_hidden = {64, 64};
    std::vector<int> critic_hidden = {64, 64};
    double actor_lr = 3e-4;
    double critic_lr = 5e-4;
    double alpha_lr = 3e-4;
    double discount = 0.9;
    double polyak_rate = 0.005;
    int batch_size = 128;
    int64_t replay_capacity = 100000;
    int warmup_steps = 1500;  // uniform random actions, no updates
    int update_every = 1;
    double initial_alpha = 0.1;
    double target_entropy_per_dim = -1.0; // target entropy = value * action_dim
    double reward_scale = 1.0;
    double log_std_min = -5.0;
    double log_std_max = 2.0;

    void validate() const;
};

struct RunningStat {
    VectorXd mean;
    VectorXd m2;
    int64_t count = 0;

    void init(int dim);
    void update(const VectorXd& x); // Welford
    VectorXd stddev() const;        // floored at 1e-3
};

// Agent state layout: [feature (raw), joint_pos, joint_torque?]. Running
// stats normalize the proprio block only; the feature block stays raw so
// corr-reward and the representation share scale.
struct StateCodec {
    int feature_dim = 0;
    int n_joints = 0;
    bool include_torque = true;
    RunningStat proprio;

    void init();
    int proprio_dim() const { return include_torque ? 2 * n_joints : n_joints; }
    int state_dim() const { return feature_dim + proprio_dim(); }

    void observe(const sim::Observation& obs); // feed the running stats
    VectorXd raw_state(const VectorXd& feature, const sim::Observation& obs) const;
    VectorXd normalize(const VectorXd& raw_state) const;
};

struct ReplayBuffer {
    int64_t capacity = 0;
    std::vector<VectorXf> state, next_state, action;
    std::vector<float> reward;
    std::vector<uint8_t> done;
    int64_t count = 0; // total pushed
    int64_t size() const { return std::min(count, capacity); }

    void init(int64_t cap);
    void push(const VectorXd& s, const VectorXd& a, double r, const VectorXd& s_next, bool d);
};

struct SacModels {
    nn::ParamSet actor; // outputs [mean (n); raw log-std (n)]
    nn::ParamSet critic1, critic2;
    nn::ParamSet target1, target2;
    nn::OptimizerState actor_opt, critic1_opt, critic2_opt;
    double log_alpha = 0.0;
    double alpha_m = 0.0, alpha_v = 0.0; // scalar Adam state for log_alpha
    int64_t alpha_steps = 0;
    int action_dim = 0;
    double action_scale = 1.0; // joint velocity limit
    SacConfig cfg;
    ReplayBuffer replay;

    double alpha() const { return std::exp(log_alpha); }
};

SacModels make_sac(int state_dim, int action_dim, double action_scale, const SacConfig& cfg,
                   uint64_t seed);

struct ActorSample {
    VectorXd action;
    double log_prob = 0.0;
};

// Tanh-squashed Gaussian sample scaled to the velocity limit; log-prob
// includes the squash correction. Deterministic mode returns tanh(mean).
ActorSample actor_sample(const SacModels& m, const VectorXd& state, Rng& rng,
                         bool deterministic = false);

// Exact log density of the policy at an arbitrary in-bounds action.
double actor_log_prob(const SacModels& m, const VectorXd& state, const VectorXd& action);

struct SacLosses {
    double critic = 0.0;
    double actor = 0.0;
    double alpha = 0.0;
    double mean_entropy = 0.0;
};

// One gradient step on a replay batch: clipped double-Q target with entropy
// term, reparameterized actor step, temperature tracking the target entropy,
// Polyak target refresh. Skips (with a warning) on non-finite losses.
SacLosses sac_update(SacModels& m, const StateCodec& codec, Rng& rng);

// Actor checkpoint + sidecar (state layout, scales, stats) at path + ".json".
struct PolicyArtifact {
    nn::ParamSet actor;
    StateCodec codec;
    double action_scale = 1.0;
    int action_dim = 0;
    std::string repr_mode;
    std::string reward_mode;

    void save(const std::string& path) const;
    static PolicyArtifact load(const std::string& path);
};

} // namespace cfrl::sac
