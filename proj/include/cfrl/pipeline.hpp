#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cfrl/config.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/gvf.hpp"
#include "cfrl/rewards.hpp"
#include "cfrl/sac.hpp"
#include "cfrl/sim.hpp"

// Workflow orchestration: teach -> collect -> offline GVF/classifier training
// -> online policy training -> evaluation matrix and scale sweep.
namespace cfrl::pipeline {

// FNV-1a 64-bit over file bytes; hex string. Used for artifact provenance.
uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(uint64_t h);

struct Manifest {
    std::string stage;
    uint64_t seed = 0;
    nlohmann::json config_snapshot;
    std::map<std::string, std::string> inputs;  // path -> hash
    std::map<std::string, std::string> outputs; // path -> hash

    void add_input(const std::string& path);
    void add_output(const std::string& path);
    void write(const std::string& path) const;
};

// T* for one scene placement: slot pose composed with the taught tip offset
// (tip at depth_ratio * slot_depth inside the slot, aligned) plus Gaussian
// teaching noise simulating a rough human demonstration.
Pose teach_reference(const Pose& slot_pose, const sim::SceneConfig& scene,
                     const config::TeachConfig& cfg, Rng& rng);

struct CollectStats {
    size_t transitions = 0;
    int episodes = 0;
    int skipped = 0;
};
CollectStats collect_offline(const config::Config& cfg, uint64_t seed,
                             const std::string& out_path);

struct GvfTrainResult {
    gvf::GvfPredictor predictor;
    double final_td_loss = 0.0;
    double ratio_final_loss = 0.0;
    double gamma0_holdout_mse = 0.0; // gamma=0 block vs stored c_{t+1}
    double cumulant_variance = 0.0;  // per-dim mean variance on the holdout
};
GvfTrainResult train_gvf_offline(std::vector<gvf::Transition>& data, const config::Config& cfg,
                                 uint64_t seed, std::ostream* log = nullptr);

// Synthetic classifier data: positives are IK placements at sampled success
// poses, negatives mix random configurations and near-miss placements.
void generate_classifier_images(const config::Config& cfg, uint64_t seed, int n_pos, int n_neg,
                                std::vector<Eigen::VectorXf>& pos,
                                std::vector<Eigen::VectorXf>& neg);

struct RegressorResult {
    nn::ParamSet net; // image -> (x, y, yaw) of the taught relative pose
    double holdout_translation_rmse = 0.0;
    double holdout_yaw_rmse = 0.0;
};
RegressorResult train_pose_regressor(const std::vector<gvf::Transition>& data,
                                     const config::RegressorConfig& rc, uint64_t seed);

enum class ReprMode { Counterfactual, ClassifierLatent, PoseRegression, RawPixels };
const char* repr_mode_name(ReprMode m);
ReprMode parse_repr_mode(const std::string& name); // throws on unknown

// Loaded artifacts needed by a given representation / reward combination.
struct Artifacts {
    std::optional<gvf::GvfPredictor> gvf;
    std::optional<rewards::SuccessClassifier> classifier;
    std::optional<nn::ParamSet> regressor;
};

struct EpisodeMetric {
    int episode = 0;
    int steps = 0;
    double reward_sum = 0.0;
    bool success = false;             // simulator geometric check
    double success_rate_last_100 = 0.0;
    nlohmann::json to_json() const;
};

struct TrainPolicyResult {
    sac::PolicyArtifact policy;
    std::vector<EpisodeMetric> metrics;
    double final_success_rate = 0.0; // last-100 at the final episode
    double best_success_rate = 0.0;  // max rolling value once >= 100 episodes
};

TrainPolicyResult train_policy_online(const config::Config& cfg, ReprMode repr,
                                      rewards::RewardMode reward_mode, bool include_force,
                                      const Artifacts& art, uint64_t seed,
                                      std::ostream* metrics_out = nullptr,
                                      std::ostream* log = nullptr);

struct EvalReport {
    std::vector<uint8_t> outcomes; // per-trial, simulator geometric success
    double success_rate_last_100 = 0.0;
    int episodes = 0;
    double wall_clock_s = 0.0;
    std::string repr_mode;
    std::string reward_mode;
    double scale_ratio = 1.0;
    nlohmann::json to_json() const;
};

// Deterministic-mode actor over randomized resets; success comes from the
// simulator geometry, not the learned classifier.
EvalReport evaluate(const config::Config& cfg, const sac::PolicyArtifact& policy,
                    const Artifacts& art, int n_trials, double scale_ratio, uint64_t seed);

// 100-trial sweep across scale ratios; scales with non-positive clearance are
// reported as 0% with a geometry warning.
std::vector<EvalReport> scale_generalization_eval(const config::Config& cfg,
                                                  const sac::PolicyArtifact& policy,
                                                  const Artifacts& art,
                                                  const std::vector<double>& scales,
                                                  uint64_t seed);

} // namespace cfrl::pipeline
