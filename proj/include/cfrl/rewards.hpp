#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "cfrl/nn.hpp"
#include "cfrl/pose.hpp"
#include "cfrl/sim.hpp"

// Terminal success classification (two independently trained classifiers,
// conjunctive), the corr-reward, and the baseline rewards.
namespace cfrl::rewards {

using Eigen::VectorXd;
using Eigen::VectorXf;

enum class RewardMode { Sparse, Corr, Oracle, ViceVariant };

const char* reward_mode_name(RewardMode m);
RewardMode parse_reward_mode(const std::string& name); // throws on unknown

struct OracleRewardConfig {
    double approach_scale = 2.0; // -alpha * distance to the insertion goal
    double align_bonus = 0.5;    // when laterally aligned within tolerance
    double depth_scale = 5.0;    // +beta * insertion depth
};

struct RewardConfig {
    double r_success = 10.0; // must stay > 1 so success dominates the corr term
    RewardMode mode = RewardMode::Corr;
    double classifier_threshold = 0.9; // applied to BOTH classifiers conjunctively
    OracleRewardConfig oracle;

    void validate() const; // throws std::invalid_argument
};

struct ClassifierTrainConfig {
    std::vector<int> hidden = {64, 8}; // last hidden = the 8-wide latent tap
    double step_size = 1e-3;
    int batch_size = 64;
    int steps = 3000;
    double holdout_fraction = 0.2;
    size_t min_images_per_class = 100;
};

// Two sigmoid-output image classifiers trained on disjoint bootstrap
// resamples with different seeds; the latent tap is the second-last layer
// (width 8) of the first one.
struct SuccessClassifier {
    nn::ParamSet first;
    nn::ParamSet second;
    double pixel_mean = 0.0;
    double pixel_std = 1.0;
    double holdout_accuracy_first = 0.0;
    double holdout_accuracy_second = 0.0;

    double prob_first(const VectorXf& image) const;
    double prob_second(const VectorXf& image) const;

    void save(const std::string& path_prefix) const; // .a, .b, .json
    static SuccessClassifier load(const std::string& path_prefix);
};

SuccessClassifier train_success_classifier(const std::vector<VectorXf>& positive_images,
                                           const std::vector<VectorXf>& negative_images,
                                           const ClassifierTrainConfig& cfg, uint64_t seed);

struct TerminalReward {
    double reward = 0.0; // 0 or r_success
    bool success = false;
};

// Success iff BOTH classifier probabilities exceed the threshold. Uses only
// the image part of the observation.
TerminalReward terminal_reward(const SuccessClassifier& sc, const sim::Observation& obs,
                               const RewardConfig& cfg);

// Eq.-style corr reward: r_success on success, exp(-||psi||_2) otherwise.
double corr_reward(const VectorXd& psi, bool success, const RewardConfig& cfg);

// Stage-dense reward from ground-truth geometry (simulation only). `rel` is
// the slot-frame peg pose. Strictly increasing along a straight path to the
// insertion goal; adds r_success when the geometric check passes.
double oracle_reward(const Pose& rel, const sim::SceneConfig& scene, const RewardConfig& cfg);

// Dense classifier-probability reward: mean log-probability of the two
// classifiers, maximal (0) when both are certain of success.
double vice_variant_reward(const SuccessClassifier& sc, const sim::Observation& obs);

// 8-dim activation vector at the tapped layer of the first classifier.
VectorXd classifier_latent(const SuccessClassifier& sc, const sim::Observation& obs);

} // namespace cfrl::rewards
