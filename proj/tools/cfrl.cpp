#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cfrl/config.hpp"
#include "cfrl/dataset.hpp"
#include "cfrl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace cfrl;
using Eigen::VectorXd;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitMissingArtifact = 3;

struct ExitError : std::runtime_error {
    int code;
    ExitError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

config::Config load_config(const std::string& path, uint64_t seed_override, bool seed_set,
                           const std::string& out_override) {
    std::ifstream is(path);
    if (!is) throw ExitError(kExitBadConfig, "config: cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    auto result = config::parse_config_text(ss.str());
    if (!result.ok()) {
        std::string joined;
        for (const auto& e : result.errors) {
            if (!joined.empty()) joined += "; ";
            joined += e;
        }
        throw ExitError(kExitBadConfig, "config: " + joined);
    }
    if (seed_set) result.config.seed = seed_override;
    if (!out_override.empty()) result.config.out_dir = out_override;
    return result.config;
}

std::string require_file(const std::string& path) {
    if (!fs::exists(path)) throw ExitError(kExitMissingArtifact, "missing artifact: " + path);
    return path;
}

pipeline::Artifacts load_artifacts_for(const config::Config& cfg, const std::string& repr,
                                       const std::string& reward) {
    pipeline::Artifacts art;
    const fs::path out(cfg.out_dir);
    const bool need_gvf = repr == "counterfactual" || reward == "corr";
    const bool need_classifier = repr == "classifier_latent" || reward != "oracle";
    const bool need_regressor = repr == "pose_regression";
    if (need_gvf) art.gvf = gvf::GvfPredictor::load(require_file((out / "gvf.cfrlmdl").string()));
    if (need_classifier) {
        require_file((out / "classifier.a").string());
        require_file((out / "classifier.b").string());
        art.classifier = rewards::SuccessClassifier::load((out / "classifier").string());
    }
    if (need_regressor)
        art.regressor = nn::load_model(require_file((out / "regressor.cfrlmdl").string()));
    return art;
}

void cmd_collect(const config::Config& cfg) {
    fs::create_directories(cfg.out_dir);
    const std::string path = (fs::path(cfg.out_dir) / "dataset.cfrlds").string();
    const auto stats = pipeline::collect_offline(cfg, cfg.seed, path);

    pipeline::Manifest m;
    m.stage = "collect";
    m.seed = cfg.seed;
    m.config_snapshot = cfg.to_json();
    m.add_output(path);
    m.write((fs::path(cfg.out_dir) / "manifest_collect.json").string());

    std::cout << "collected " << stats.transitions << " transitions over " << stats.episodes
              << " episodes (" << stats.skipped << " skipped)\n"
              << "dataset " << path << " fnv1a64=" << pipeline::hash_hex(pipeline::fnv1a64_file(path))
              << "\n";
}

void cmd_train_gvf(const config::Config& cfg, const std::string& dataset_flag) {
    const std::string dataset_path =
        dataset_flag.empty() ? (fs::path(cfg.out_dir) / "dataset.cfrlds").string() : dataset_flag;
    require_file(dataset_path);
    auto records = data::read_dataset(dataset_path);

    auto result = pipeline::train_gvf_offline(records, cfg, cfg.seed, &std::cout);
    const std::string model_path = (fs::path(cfg.out_dir) / "gvf.cfrlmdl").string();
    result.predictor.save(model_path);

    // The pose-regression baseline consumes the same dataset; trained here so
    // every representation artifact comes out of the offline stages.
    auto reg = pipeline::train_pose_regressor(records, cfg.regressor, cfg.seed);
    const std::string reg_path = (fs::path(cfg.out_dir) / "regressor.cfrlmdl").string();
    nn::save_model(reg.net, reg_path);

    pipeline::Manifest m;
    m.stage = "gvf";
    m.seed = cfg.seed;
    m.config_snapshot = cfg.to_json();
    m.add_input(dataset_path);
    m.add_output(model_path);
    m.add_output(reg_path);
    m.write((fs::path(cfg.out_dir) / "manifest_gvf.json").string());

    std::cout << "gvf model " << model_path
              << " fnv1a64=" << pipeline::hash_hex(pipeline::fnv1a64_file(model_path)) << "\n"
              << "td_loss=" << result.final_td_loss << " ratio_loss=" << result.ratio_final_loss
              << " gamma0_holdout_mse=" << result.gamma0_holdout_mse
              << " cumulant_variance=" << result.cumulant_variance << "\n"
              << "pose regressor holdout: translation_rmse=" << reg.holdout_translation_rmse
              << " m, yaw_rmse=" << reg.holdout_yaw_rmse << " rad\n";
}

void cmd_train_classifier(const config::Config& cfg) {
    fs::create_directories(cfg.out_dir);
    std::vector<Eigen::VectorXf> pos, neg;
    pipeline::generate_classifier_images(cfg, cfg.seed, cfg.classifier_data.positives,
                                         cfg.classifier_data.negatives, pos, neg);
    const auto sc = rewards::train_success_classifier(pos, neg, cfg.classifier, cfg.seed);
    const std::string prefix = (fs::path(cfg.out_dir) / "classifier").string();
    sc.save(prefix);

    pipeline::Manifest m;
    m.stage = "classifier";
    m.seed = cfg.seed;
    m.config_snapshot = cfg.to_json();
    m.add_output(prefix + ".a");
    m.add_output(prefix + ".b");
    m.write((fs::path(cfg.out_dir) / "manifest_classifier.json").string());

    std::cout << "classifier holdout accuracy: first=" << sc.holdout_accuracy_first
              << " second=" << sc.holdout_accuracy_second << "\n";
}

void cmd_train_policy(config::Config cfg, const std::string& reward_flag,
                      const std::string& repr_flag, bool no_force) {
    if (!reward_flag.empty()) cfg.reward.mode = rewards::parse_reward_mode(reward_flag);
    if (!repr_flag.empty()) cfg.online.repr_mode = repr_flag;
    if (no_force) cfg.online.include_force = false;

    const auto repr = pipeline::parse_repr_mode(cfg.online.repr_mode);
    const auto art = load_artifacts_for(cfg, cfg.online.repr_mode,
                                        rewards::reward_mode_name(cfg.reward.mode));

    std::string tag = cfg.online.repr_mode + std::string("_") +
                      rewards::reward_mode_name(cfg.reward.mode) +
                      (cfg.online.include_force ? "" : "_noforce");
    const std::string metrics_path =
        (fs::path(cfg.out_dir) / ("metrics_" + tag + ".jsonl")).string();
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) throw ExitError(kExitRuntime, "cannot open metrics log " + metrics_path);

    auto result = pipeline::train_policy_online(cfg, repr, cfg.reward.mode,
                                                cfg.online.include_force, art, cfg.seed, &metrics,
                                                &std::cout);
    const std::string policy_path = (fs::path(cfg.out_dir) / "policy.cfrlmdl").string();
    result.policy.save(policy_path);

    pipeline::Manifest m;
    m.stage = "policy";
    m.seed = cfg.seed;
    m.config_snapshot = cfg.to_json();
    m.add_output(policy_path);
    m.add_output(metrics_path);
    m.write((fs::path(cfg.out_dir) / ("manifest_policy_" + tag + ".json")).string());

    std::cout << "policy " << policy_path << " final_success_rate_last_100="
              << result.final_success_rate << " best=" << result.best_success_rate << "\n"
              << "metrics " << metrics_path << "\n";
}

void cmd_evaluate(const config::Config& cfg, const std::string& policy_flag, int trials,
                  double scale) {
    const std::string policy_path =
        policy_flag.empty() ? (fs::path(cfg.out_dir) / "policy.cfrlmdl").string() : policy_flag;
    require_file(policy_path);
    const auto policy = sac::PolicyArtifact::load(policy_path);
    const auto art = load_artifacts_for(cfg, policy.repr_mode, "oracle");

    const int n = trials > 0 ? trials : cfg.online.eval_trials;
    const auto report = pipeline::evaluate(cfg, policy, art, n, scale, cfg.seed);
    const std::string report_path = (fs::path(cfg.out_dir) / "eval_report.json").string();
    std::ofstream os(report_path, std::ios::trunc);
    os << report.to_json().dump(2) << "\n";

    std::cout << "eval trials=" << report.episodes << " scale=" << scale
              << " success_rate_last_100=" << report.success_rate_last_100 << "\n"
              << "report " << report_path << "\n";
}

void cmd_scale_eval(const config::Config& cfg, const std::string& policy_flag,
                    const std::string& scales_flag) {
    const std::string policy_path =
        policy_flag.empty() ? (fs::path(cfg.out_dir) / "policy.cfrlmdl").string() : policy_flag;
    require_file(policy_path);
    const auto policy = sac::PolicyArtifact::load(policy_path);
    const auto art = load_artifacts_for(cfg, policy.repr_mode, "oracle");

    std::vector<double> scales;
    std::stringstream ss(scales_flag);
    std::string item;
    while (std::getline(ss, item, ',')) scales.push_back(std::stod(item));

    const auto reports = pipeline::scale_generalization_eval(cfg, policy, art, scales, cfg.seed);
    nlohmann::json j = nlohmann::json::array();
    std::cout << "scale  success_rate\n";
    for (const auto& r : reports) {
        j.push_back(r.to_json());
        std::cout << r.scale_ratio << "  " << r.success_rate_last_100 << "\n";
    }
    const std::string path = (fs::path(cfg.out_dir) / "scale_eval.json").string();
    std::ofstream os(path, std::ios::trunc);
    os << j.dump(2) << "\n";
    std::cout << "report " << path << "\n";
}

void cmd_replay(const config::Config& cfg, const std::string& policy_flag, int max_steps) {
    sim::Env env(cfg.arm, cfg.scene);
    const fs::path frames = fs::path(cfg.out_dir) / "frames";
    fs::create_directories(frames);

    Rng rng(cfg.seed);
    auto [state, obs] = env.reset(rng.next_u64());

    std::optional<sac::PolicyArtifact> policy;
    pipeline::Artifacts art;
    if (!policy_flag.empty()) {
        require_file(policy_flag);
        policy = sac::PolicyArtifact::load(policy_flag);
        art = load_artifacts_for(cfg, policy->repr_mode, "oracle");
    }
    const Pose t_star = pipeline::teach_reference(state.slot_pose, cfg.scene, cfg.teach, rng);

    VectorXd a_prev = VectorXd::Zero(cfg.arm.n_joints);
    int frame = 0;
    char name[32];
    std::snprintf(name, sizeof(name), "%05d.pgm", frame);
    sim::write_pgm(obs.image, (frames / name).string());
    while (!state.terminal && frame < max_steps) {
        VectorXd action;
        if (policy) {
            const auto repr = pipeline::parse_repr_mode(policy->repr_mode);
            VectorXd feature;
            switch (repr) {
            case pipeline::ReprMode::Counterfactual: feature = art.gvf->predict(obs, a_prev); break;
            case pipeline::ReprMode::ClassifierLatent:
                feature = rewards::classifier_latent(*art.classifier, obs);
                break;
            case pipeline::ReprMode::PoseRegression:
                feature = nn::forward(*art.regressor, obs.image.cast<double>());
                break;
            case pipeline::ReprMode::RawPixels: feature = obs.image.cast<double>(); break;
            }
            sac::SacModels actor_only;
            actor_only.actor = policy->actor;
            actor_only.action_dim = policy->action_dim;
            actor_only.action_scale = policy->action_scale;
            actor_only.cfg = cfg.sac;
            const VectorXd s = policy->codec.normalize(policy->codec.raw_state(feature, obs));
            action = sac::actor_sample(actor_only, s, rng, true).action;
        } else {
            action = sim::pbvs_action(state.joint_pos, cfg.arm,
                                      sim::full_grasp(cfg.scene, state.grasp_offset), t_star,
                                      cfg.collect.pbvs_gain, 0.0, rng);
        }
        auto result = env.step(state, action);
        state = std::move(result.state);
        obs = std::move(result.obs);
        a_prev = action;
        ++frame;
        std::snprintf(name, sizeof(name), "%05d.pgm", frame);
        sim::write_pgm(obs.image, (frames / name).string());
    }
    const char* cause = state.cause == sim::TerminalCause::Success   ? "success"
                        : state.cause == sim::TerminalCause::Timeout ? "timeout"
                        : state.cause == sim::TerminalCause::BoundViolation ? "bound_violation"
                                                                            : "running";
    std::cout << "replay wrote " << (frame + 1) << " frames to " << frames.string()
              << " (outcome: " << cause << ")\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"counterfactual-prediction insertion pipeline"};
    app.require_subcommand(1);

    std::string config_path = "configs/default.json";
    uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    app.add_option("--config", config_path, "config file (JSON)");
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
    app.add_option("--out", out_dir, "output directory override");

    auto* collect = app.add_subcommand("collect", "run the noisy scripted controller, write the dataset");
    auto* train_gvf = app.add_subcommand("train-gvf", "offline GVF + pose-regressor training");
    std::string dataset_flag;
    train_gvf->add_option("--dataset", dataset_flag, "dataset path (default <out>/dataset.cfrlds)");
    auto* train_classifier = app.add_subcommand("train-classifier", "train the dual success classifiers");
    auto* train_policy = app.add_subcommand("train-policy", "online SAC training");
    std::string reward_flag, repr_flag;
    bool no_force = false;
    train_policy->add_option("--reward-mode", reward_flag, "sparse|corr|oracle|vice_variant");
    train_policy->add_option("--repr-mode", repr_flag,
                             "counterfactual|classifier_latent|pose_regression|raw_pixels");
    train_policy->add_flag("--no-force", no_force, "drop joint torques from the agent state");
    auto* evaluate = app.add_subcommand("evaluate", "run eval trials with a trained policy");
    std::string policy_flag;
    int trials = 0;
    double scale = 1.0;
    evaluate->add_option("--policy", policy_flag, "policy path (default <out>/policy.cfrlmdl)");
    evaluate->add_option("--trials", trials, "number of trials");
    evaluate->add_option("--scale", scale, "scene scale ratio");
    auto* scale_eval = app.add_subcommand("scale-eval", "success-rate sweep over scale ratios");
    std::string scale_policy_flag;
    std::string scales_flag = "0.7,0.8,0.9,1.0,1.1,1.2,1.3";
    scale_eval->add_option("--policy", scale_policy_flag, "policy path");
    scale_eval->add_option("--scales", scales_flag, "comma-separated scale ratios");
    auto* replay = app.add_subcommand("replay", "dump per-step PGM frames of one episode");
    std::string replay_policy_flag;
    int replay_steps = 300;
    replay->add_option("--policy", replay_policy_flag, "policy path (default: scripted controller)");
    replay->add_option("--max-steps", replay_steps, "frame cap");

    CLI11_PARSE(app, argc, argv);

    try {
        const config::Config cfg = load_config(config_path, seed, seed_set, out_dir);
        fs::create_directories(cfg.out_dir);
        if (collect->parsed()) cmd_collect(cfg);
        if (train_gvf->parsed()) cmd_train_gvf(cfg, dataset_flag);
        if (train_classifier->parsed()) cmd_train_classifier(cfg);
        if (train_policy->parsed()) cmd_train_policy(cfg, reward_flag, repr_flag, no_force);
        if (evaluate->parsed()) cmd_evaluate(cfg, policy_flag, trials, scale);
        if (scale_eval->parsed()) cmd_scale_eval(cfg, scale_policy_flag, scales_flag);
        if (replay->parsed()) cmd_replay(cfg, replay_policy_flag, replay_steps);
    } catch (const ExitError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: runtime: " << e.what() << "\n";
        return kExitRuntime;
    }
    return 0;
}
