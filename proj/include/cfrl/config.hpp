#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "cfrl/gvf.hpp"
#include "cfrl/rewards.hpp"
#include "cfrl/sac.hpp"
#include "cfrl/sim.hpp"

// Configuration tree for the whole pipeline. Strict parsing: unknown keys are
// rejected, every violation is reported at once with its JSON path.
namespace cfrl::config {

struct CollectConfig {
    int episodes = 400;
    int steps_per_episode = 100;
    double near_fraction = 0.5; // mix of near-T* vs uniform-workspace targets
    double near_radius = 0.05;
    double pbvs_gain = 2.0;
    double pbvs_noise = 0.4; // rad/s
};

struct TeachConfig {
    double depth_ratio = 0.85;        // taught tip depth, fraction of slot depth
    double noise_translation = 0.008; // sigma, m
    double noise_rotation = 0.02;     // sigma, rad
};

struct OnlineConfig {
    int episodes = 350;
    std::string repr_mode = "counterfactual";
    bool include_force = true;
    int eval_trials = 100;
    // Raw-pixel representation is much wider; these overrides keep its
    // per-step cost comparable.
    std::vector<int> pixel_hidden = {32};
    int pixel_batch_size = 64;
    int pixel_update_every = 4;
};

struct RegressorConfig {
    std::vector<int> hidden = {128, 64};
    double step_size = 1e-3;
    int batch_size = 128;
    int steps = 4000;
    double holdout_fraction = 0.1;
};

struct ClassifierDataConfig {
    int positives = 1200;
    int negatives = 1600;
    double near_miss_fraction = 0.5; // hard negatives around the slot
};

struct Config {
    uint64_t seed = 1;
    std::string out_dir = "runs";

    sim::ArmConfig arm;
    sim::SceneConfig scene;

    double tau_sigma_scale = 0.1; // stddev = scale * velocity limit, per joint
    std::vector<double> gammas = {0.0, 0.5, 0.9, 0.95};
    double lambda = 1.0;
    gvf::GvfTrainConfig gvf_train;

    rewards::RewardConfig reward;
    rewards::ClassifierTrainConfig classifier;
    ClassifierDataConfig classifier_data;

    sac::SacConfig sac;

    CollectConfig collect;
    TeachConfig teach;
    OnlineConfig online;
    RegressorConfig regressor;

    gvf::GvfQuestion question() const;
    nlohmann::json to_json() const;
};

struct ParseResult {
    Config config;
    std::vector<std::string> errors;
    bool ok() const { return errors.empty(); }
};

// Parses and cross-validates; never throws on content problems (they land in
// `errors`), only on unreadable input.
ParseResult parse_config_text(const std::string& text);
ParseResult parse_config_json(const nlohmann::json& j);

Config default_config();

} // namespace cfrl::config
