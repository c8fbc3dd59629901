#include "cfrl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace cfrl::pipeline {

using Eigen::VectorXd;
using Eigen::VectorXf;
using nlohmann::json;

// --- provenance -----------------------------------------------------------------

uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("fnv1a64: cannot open " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (is) {
        is.read(buf, sizeof(buf));
        const std::streamsize got = is.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

std::string hash_hex(uint64_t h) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void Manifest::add_input(const std::string& path) { inputs[path] = hash_hex(fnv1a64_file(path)); }
void Manifest::add_output(const std::string& path) { outputs[path] = hash_hex(fnv1a64_file(path)); }

void Manifest::write(const std::string& path) const {
    json j;
    j["stage"] = stage;
    j["seed"] = seed;
    j["config"] = config_snapshot;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("manifest: cannot open " + path);
    os << j.dump(2) << "\n";
}

// --- teaching --------------------------------------------------------------------

Pose teach_reference(const Pose& slot_pose, const sim::SceneConfig& scene,
                     const config::TeachConfig& cfg, Rng& rng) {
    const Pose taught_offset = Pose::planar(0.0, -cfg.depth_ratio * scene.slot_depth, 0.0);
    const Pose noise = Pose::planar(rng.gaussian(0.0, cfg.noise_translation),
                                    rng.gaussian(0.0, cfg.noise_translation),
                                    rng.gaussian(0.0, cfg.noise_rotation));
    return slot_pose.compose(taught_offset).compose(noise);
}

// --- offline collection -------------------------------------------------------------

namespace {

gvf::Vec7f pack_pose(const Pose& p) {
    gvf::Vec7f out;
    const Eigen::Vector4d q = rotation_to_quat_wxyz(p.rotation);
    out[0] = static_cast<float>(q[0]);
    out[1] = static_cast<float>(q[1]);
    out[2] = static_cast<float>(q[2]);
    out[3] = static_cast<float>(q[3]);
    out[4] = static_cast<float>(p.translation.x());
    out[5] = static_cast<float>(p.translation.y());
    out[6] = static_cast<float>(p.translation.z());
    return out;
}

Pose collection_target(const Pose& slot_pose, const Pose& t_star, const config::Config& cfg,
                       Rng& rng) {
    if (rng.uniform01() < cfg.collect.near_fraction) {
        // Approach region above the mouth, roughly aligned with the slot.
        const double r = cfg.collect.near_radius;
        const Pose rel = Pose::planar(rng.uniform(-r, r), 0.01 + rng.uniform(0.0, 2.0 * r),
                                      rng.uniform(-0.3, 0.3));
        (void)t_star;
        return slot_pose.compose(rel);
    }
    const double radius = rng.uniform(0.25, 0.95 * cfg.arm.reach());
    const double bearing = rng.uniform(-M_PI, M_PI);
    return Pose::planar(radius * std::cos(bearing), radius * std::sin(bearing),
                        rng.uniform(-M_PI, M_PI));
}

} // namespace

CollectStats collect_offline(const config::Config& cfg, uint64_t seed,
                             const std::string& out_path) {
    sim::Env env(cfg.arm, cfg.scene);
    Rng master(seed);
    const gvf::GvfQuestion question = cfg.question();

    std::vector<gvf::Transition> records;
    records.reserve(static_cast<size_t>(cfg.collect.episodes) * cfg.collect.steps_per_episode);
    CollectStats stats;

    for (int ep = 0; ep < cfg.collect.episodes; ++ep) {
        Rng ep_rng = master.fork(static_cast<uint64_t>(ep));
        auto [state, obs] = env.reset(ep_rng.next_u64());
        const Pose t_star = teach_reference(state.slot_pose, cfg.scene, cfg.teach, ep_rng);
        const Pose target = collection_target(state.slot_pose, t_star, cfg, ep_rng);
        if (target.translation.head<2>().norm() > 0.98 * cfg.arm.reach()) {
            std::cerr << "[collect] episode " << ep << ": unreachable target, skipped\n";
            ++stats.skipped;
            continue;
        }

        gvf::Obs32 obs32 = gvf::to_obs32(obs);
        VectorXd a_prev = VectorXd::Zero(cfg.arm.n_joints);
        for (int step = 0; step < cfg.collect.steps_per_episode; ++step) {
            const VectorXd action =
                sim::pbvs_action(state.joint_pos, cfg.arm, sim::full_grasp(cfg.scene, state.grasp_offset),
                                 target,
                                 cfg.collect.pbvs_gain, cfg.collect.pbvs_noise, ep_rng);
            auto result = env.step(state, action);

            const Pose peg_next =
                sim::peg_pose(result.state.joint_pos, cfg.arm,
                              sim::full_grasp(cfg.scene, result.state.grasp_offset));
            const Pose rel = gvf::relative_pose(t_star, peg_next);

            gvf::Transition t;
            t.obs = std::move(obs32);
            t.a_prev = a_prev.cast<float>();
            t.action = action.cast<float>();
            t.cumulant_next = gvf::cumulant(rel, question.lambda).cast<float>();
            const bool episode_end =
                result.state.terminal || step + 1 == cfg.collect.steps_per_episode;
            t.continuation_next = episode_end ? 0.0f : 1.0f;
            t.terminal = result.state.terminal;
            t.pose_gt = pack_pose(rel);
            t.obs_next = gvf::to_obs32(result.obs);
            obs32 = t.obs_next; // reused as the next step's observation
            records.push_back(std::move(t));

            a_prev = action;
            state = result.state;
            if (state.terminal) break;
        }
        ++stats.episodes;
    }

    data::DatasetHeader header;
    header.image_w = sim::kImageSize;
    header.image_h = sim::kImageSize;
    header.n_joints = static_cast<uint16_t>(cfg.arm.n_joints);
    header.record_count = records.size();
    data::write_dataset(out_path, header, records);
    stats.transitions = records.size();
    return stats;
}

// --- GVF offline training ---------------------------------------------------------

GvfTrainResult train_gvf_offline(std::vector<gvf::Transition>& data, const config::Config& cfg,
                                 uint64_t seed, std::ostream* log) {
    if (data.empty()) throw std::invalid_argument("train_gvf_offline: empty dataset");
    const gvf::GvfQuestion question = cfg.question();
    question.validate();

    // Deterministic shuffle, then holdout suffix for the gamma=0 regression check.
    Rng shuffle_rng(seed ^ 0x5f0f1eull);
    for (size_t i = data.size(); i > 1; --i) {
        const size_t k = shuffle_rng.uniform_index(i);
        std::swap(data[i - 1], data[k]);
    }
    const size_t held = std::min<size_t>(2000, std::max<size_t>(data.size() / 20, 1));
    const size_t train_count = data.size() - held;
    if (train_count < 100) throw std::invalid_argument("train_gvf_offline: dataset too small");

    GvfTrainResult out;

    gvf::RatioModel ratio;
    if (cfg.gvf_train.use_importance_resampling) {
        ratio = gvf::train_ratio_model(data, question, cfg.gvf_train.ratio, seed ^ 0x0a70ull);
        out.ratio_final_loss = ratio.final_loss;
    } else {
        ratio.degenerate = true;
    }
    const gvf::ResampleTable table = gvf::build_resample_table(data, ratio, train_count);

    gvf::InputCodec codec = gvf::fit_codec(data, cfg.gvf_train);
    gvf::GvfLearner learner(question, cfg.gvf_train, codec, seed);

    Rng rng(seed ^ 0x7dull);
    std::vector<size_t> batch(cfg.gvf_train.batch_size);
    for (int step = 0; step < cfg.gvf_train.td_steps; ++step) {
        for (auto& b : batch)
            b = cfg.gvf_train.use_importance_resampling ? table.sample(rng)
                                                        : rng.uniform_index(train_count);
        const double loss = learner.td_update(data, batch, rng);
        out.final_td_loss = loss;
        if (log && (step % 1000 == 0 || step + 1 == cfg.gvf_train.td_steps))
            (*log) << "[gvf] td step " << step << " loss " << loss << "\n";
    }
    out.predictor = learner.freeze();

    // gamma = 0 block against stored next cumulants on the holdout.
    int k0 = 0;
    for (size_t k = 0; k < question.gammas.size(); ++k)
        if (question.gammas[k] == 0.0) k0 = static_cast<int>(k);
    double mse = 0.0;
    gvf::Vec6 mean = gvf::Vec6::Zero(), meansq = gvf::Vec6::Zero();
    for (size_t i = train_count; i < data.size(); ++i) {
        const gvf::Transition& t = data[i];
        const VectorXd psi = out.predictor.predict(t.obs, t.action.cast<double>());
        const gvf::Vec6 c = t.cumulant_next.cast<double>();
        mse += (psi.segment(k0 * 6, 6) - c).squaredNorm() / 6.0;
        mean += c;
        meansq += c.cwiseProduct(c);
    }
    const double n_held = static_cast<double>(data.size() - train_count);
    out.gamma0_holdout_mse = mse / n_held;
    mean /= n_held;
    meansq /= n_held;
    out.cumulant_variance = (meansq - mean.cwiseProduct(mean)).mean();
    return out;
}

// --- classifier data -----------------------------------------------------------------

namespace {

Pose sample_slot_pose(const sim::SceneConfig& scene, Rng& rng) {
    const double radius = rng.uniform(scene.slot_radius_min, scene.slot_radius_max);
    const double bearing = rng.uniform(-scene.slot_bearing_range, scene.slot_bearing_range);
    const double yaw = bearing + M_PI_2 + rng.uniform(-scene.slot_yaw_range, scene.slot_yaw_range);
    return Pose::planar(radius * std::cos(bearing), radius * std::sin(bearing), yaw);
}

Pose sample_grasp_offset(const sim::SceneConfig& scene, Rng& rng) {
    return Pose::planar(rng.uniform(-scene.grasp_offset_trans, scene.grasp_offset_trans),
                        rng.uniform(-scene.grasp_offset_trans, scene.grasp_offset_trans),
                        rng.uniform(-scene.grasp_offset_angle, scene.grasp_offset_angle));
}

} // namespace

void generate_classifier_images(const config::Config& cfg, uint64_t seed, int n_pos, int n_neg,
                                std::vector<VectorXf>& pos, std::vector<VectorXf>& neg) {
    const sim::SceneConfig& scene = cfg.scene;
    Rng rng(seed ^ 0xc1a551f1ull);
    pos.clear();
    neg.clear();

    auto render_placed = [&](const Pose& slot, const Pose& grasp, const VectorXd& joints) {
        sim::EnvState st;
        st.joint_pos = joints;
        st.joint_vel = VectorXd::Zero(cfg.arm.n_joints);
        st.grasp_offset = grasp;
        st.slot_pose = slot;
        return sim::render(st, cfg.arm, scene);
    };

    int guard = 0;
    while (static_cast<int>(pos.size()) < n_pos && ++guard < 100 * n_pos) {
        const Pose slot = sample_slot_pose(scene, rng);
        const Pose grasp = sample_grasp_offset(scene, rng);
        const double depth = rng.uniform(scene.insertion_depth_ratio * scene.slot_depth,
                                         0.98 * scene.slot_depth);
        const double lateral = rng.uniform(-0.8, 0.8) * scene.clearance();
        const double yaw = rng.uniform(-0.8, 0.8) * scene.success_angle_tol;
        const Pose rel = Pose::planar(lateral, -depth, yaw);
        const auto joints = sim::solve_ik(slot.compose(rel), cfg.arm, sim::full_grasp(scene, grasp), rng);
        if (!joints) continue;
        const Pose actual =
            slot.inverse().compose(sim::peg_pose(*joints, cfg.arm, sim::full_grasp(scene, grasp)));
        if (!sim::success_check(actual, scene)) continue;
        pos.push_back(render_placed(slot, grasp, *joints));
    }
    if (static_cast<int>(pos.size()) < n_pos)
        throw std::runtime_error("classifier data: positive placement kept failing");

    guard = 0;
    while (static_cast<int>(neg.size()) < n_neg && ++guard < 100 * n_neg) {
        const Pose slot = sample_slot_pose(scene, rng);
        const Pose grasp = sample_grasp_offset(scene, rng);
        VectorXd joints(cfg.arm.n_joints);
        if (rng.uniform01() < cfg.classifier_data.near_miss_fraction) {
            // Hard negatives: poses around the mouth that fail a criterion.
            const double lateral = rng.uniform(-3.0, 3.0) * scene.clearance();
            const double tip_y = rng.uniform(-0.7 * scene.insertion_depth_ratio * scene.slot_depth,
                                             0.10);
            const double yaw = rng.uniform(-3.0, 3.0) * scene.success_angle_tol;
            const auto solved =
                sim::solve_ik(slot.compose(Pose::planar(lateral, tip_y, yaw)), cfg.arm,
                              sim::full_grasp(scene, grasp), rng);
            if (!solved) continue;
            joints = *solved;
        } else {
            for (int i = 0; i < cfg.arm.n_joints; ++i)
                joints[i] = rng.uniform(-0.85 * cfg.arm.joint_limit, 0.85 * cfg.arm.joint_limit);
        }
        const Pose actual =
            slot.inverse().compose(sim::peg_pose(joints, cfg.arm, sim::full_grasp(scene, grasp)));
        if (sim::success_check(actual, scene)) continue;
        neg.push_back(render_placed(slot, grasp, joints));
    }
    if (static_cast<int>(neg.size()) < n_neg)
        throw std::runtime_error("classifier data: negative placement kept failing");
}

// --- pose regressor ---------------------------------------------------------------------

RegressorResult train_pose_regressor(const std::vector<gvf::Transition>& data,
                                     const config::RegressorConfig& rc, uint64_t seed) {
    if (data.size() < 100) throw std::invalid_argument("pose regressor: dataset too small");
    const int img = static_cast<int>(data.front().obs_next.image.size());

    auto label_of = [](const gvf::Transition& t) {
        const Eigen::Vector4d q = t.pose_gt.head<4>().cast<double>();
        const Mat3 r = quat_wxyz_to_rotation(q);
        return Vec3(t.pose_gt[4], t.pose_gt[5], std::atan2(r(1, 0), r(0, 0)));
    };

    Rng rng(seed ^ 0x9e6ull);
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const size_t held = std::max<size_t>(64, static_cast<size_t>(rc.holdout_fraction * data.size()));
    const size_t train_count = data.size() - held;

    std::vector<int> sizes;
    sizes.push_back(img);
    for (int h : rc.hidden) sizes.push_back(h);
    sizes.push_back(3);
    nn::ParamSet net = nn::init_params(sizes, nn::Activation::Relu, nn::Activation::Identity, seed);
    nn::AdamConfig adam;
    adam.step_size = rc.step_size;
    auto opt = nn::OptimizerState::create(net, adam);

    const int B = rc.batch_size;
    for (int step = 0; step < rc.steps; ++step) {
        Eigen::MatrixXd X(img, B), Y(3, B);
        for (int b = 0; b < B; ++b) {
            const gvf::Transition& t = data[order[rng.uniform_index(train_count)]];
            X.col(b) = t.obs_next.image.cast<double>();
            Y.col(b) = label_of(t);
        }
        nn::BatchTrace trace;
        const Eigen::MatrixXd pred = nn::forward_batch(net, X, &trace);
        nn::GradSet g = nn::backward_batch(net, trace, (pred - Y) * (2.0 / B));
        nn::adam_step(net, g, opt);
    }

    RegressorResult out;
    double terr = 0.0, yerr = 0.0;
    for (size_t i = train_count; i < data.size(); ++i) {
        const gvf::Transition& t = data[order[i]];
        const VectorXd pred = nn::forward(net, t.obs_next.image.cast<double>());
        const Vec3 lab = label_of(t);
        terr += (pred.head<2>() - lab.head<2>()).squaredNorm();
        yerr += std::pow(wrap_angle(pred[2] - lab[2]), 2);
    }
    out.holdout_translation_rmse = std::sqrt(terr / static_cast<double>(held));
    out.holdout_yaw_rmse = std::sqrt(yerr / static_cast<double>(held));
    out.net = std::move(net);
    return out;
}

// --- representation features ----------------------------------------------------------

const char* repr_mode_name(ReprMode m) {
    switch (m) {
    case ReprMode::Counterfactual: return "counterfactual";
    case ReprMode::ClassifierLatent: return "classifier_latent";
    case ReprMode::PoseRegression: return "pose_regression";
    case ReprMode::RawPixels: return "raw_pixels";
    }
    return "?";
}

ReprMode parse_repr_mode(const std::string& name) {
    if (name == "counterfactual") return ReprMode::Counterfactual;
    if (name == "classifier_latent") return ReprMode::ClassifierLatent;
    if (name == "pose_regression") return ReprMode::PoseRegression;
    if (name == "raw_pixels") return ReprMode::RawPixels;
    throw std::invalid_argument("unknown representation mode: " + name);
}

namespace {

int feature_dim(ReprMode mode, const Artifacts& art) {
    switch (mode) {
    case ReprMode::Counterfactual: return art.gvf->question.horizon_count() * 6;
    case ReprMode::ClassifierLatent: return 8;
    case ReprMode::PoseRegression: return 3;
    case ReprMode::RawPixels: return sim::kImagePixels;
    }
    return 0;
}

void require_artifacts(ReprMode mode, rewards::RewardMode rmode, const Artifacts& art) {
    auto missing = [](const char* what) {
        throw std::runtime_error(std::string("missing artifact: ") + what);
    };
    if (mode == ReprMode::Counterfactual && !art.gvf) missing("gvf model");
    if (mode == ReprMode::ClassifierLatent && !art.classifier) missing("success classifier");
    if (mode == ReprMode::PoseRegression && !art.regressor) missing("pose regressor");
    if (rmode == rewards::RewardMode::Corr && !art.gvf) missing("gvf model");
    if (rmode != rewards::RewardMode::Oracle && !art.classifier) missing("success classifier");
}

VectorXd compute_feature(ReprMode mode, const Artifacts& art, const sim::Observation& obs,
                         const VectorXd& a_prev) {
    switch (mode) {
    case ReprMode::Counterfactual: return art.gvf->predict(obs, a_prev);
    case ReprMode::ClassifierLatent: return rewards::classifier_latent(*art.classifier, obs);
    case ReprMode::PoseRegression:
        return nn::forward(*art.regressor, obs.image.cast<double>());
    case ReprMode::RawPixels: return obs.image.cast<double>();
    }
    throw std::logic_error("bad repr mode");
}

} // namespace

json EpisodeMetric::to_json() const {
    return json{{"episode", episode},
                {"steps", steps},
                {"reward_sum", reward_sum},
                {"success", success},
                {"success_rate_last_100", success_rate_last_100}};
}

// --- online training -----------------------------------------------------------------------

TrainPolicyResult train_policy_online(const config::Config& cfg, ReprMode repr,
                                      rewards::RewardMode reward_mode, bool include_force,
                                      const Artifacts& art, uint64_t seed,
                                      std::ostream* metrics_out, std::ostream* log) {
    require_artifacts(repr, reward_mode, art);
    sim::Env env(cfg.arm, cfg.scene);

    sac::StateCodec codec;
    codec.feature_dim = feature_dim(repr, art);
    codec.n_joints = cfg.arm.n_joints;
    codec.include_torque = include_force;
    codec.init();

    sac::SacConfig sac_cfg = cfg.sac;
    int update_every = sac_cfg.update_every;
    if (repr == ReprMode::RawPixels) {
        sac_cfg.critic_hidden = cfg.online.pixel_hidden;
        sac_cfg.actor_hidden = cfg.online.pixel_hidden;
        sac_cfg.batch_size = cfg.online.pixel_batch_size;
        update_every = cfg.online.pixel_update_every;
    }
    sac::SacModels models =
        sac::make_sac(codec.state_dim(), cfg.arm.n_joints, cfg.arm.joint_velocity_limit, sac_cfg,
                      seed ^ 0x5acull);

    Rng rng(seed);
    TrainPolicyResult out;
    std::deque<bool> window;
    int window_successes = 0;
    int64_t total_steps = 0;

    for (int ep = 0; ep < cfg.online.episodes; ++ep) {
        Rng ep_rng = rng.fork(static_cast<uint64_t>(ep));
        auto [state, obs] = env.reset(ep_rng.next_u64());
        VectorXd a_prev = VectorXd::Zero(cfg.arm.n_joints);

        codec.observe(obs);
        VectorXd feature = compute_feature(repr, art, obs, a_prev);
        VectorXd raw = codec.raw_state(feature, obs);

        EpisodeMetric metric;
        metric.episode = ep;

        while (!state.terminal) {
            VectorXd action(cfg.arm.n_joints);
            if (total_steps < sac_cfg.warmup_steps) {
                for (int i = 0; i < action.size(); ++i)
                    action[i] = ep_rng.uniform(-cfg.arm.joint_velocity_limit,
                                               cfg.arm.joint_velocity_limit);
            } else {
                action = sac::actor_sample(models, codec.normalize(raw), ep_rng).action;
            }

            auto result = env.step(state, action);
            total_steps += 1;
            metric.steps += 1;

            // Reward for this step, per configured mode.
            double r = 0.0;
            bool cls_success = false;
            if (reward_mode != rewards::RewardMode::Oracle) {
                const auto tr = rewards::terminal_reward(*art.classifier, result.obs, cfg.reward);
                cls_success = tr.success;
            }
            switch (reward_mode) {
            case rewards::RewardMode::Sparse:
                r = cls_success ? cfg.reward.r_success : 0.0;
                break;
            case rewards::RewardMode::Corr: {
                const VectorXd psi_r = art.gvf->predict(obs, action);
                r = rewards::corr_reward(psi_r, cls_success, cfg.reward);
                break;
            }
            case rewards::RewardMode::Oracle: {
                const Pose rel = state.slot_pose.inverse().compose(
                    sim::peg_pose(result.state.joint_pos, cfg.arm,
                                  sim::full_grasp(cfg.scene, result.state.grasp_offset)));
                r = rewards::oracle_reward(rel, cfg.scene, cfg.reward);
                break;
            }
            case rewards::RewardMode::ViceVariant:
                r = cls_success ? cfg.reward.r_success
                                : rewards::vice_variant_reward(*art.classifier, result.obs);
                break;
            }
            metric.reward_sum += r;

            codec.observe(result.obs);
            const VectorXd feature_next = compute_feature(repr, art, result.obs, action);
            const VectorXd raw_next = codec.raw_state(feature_next, result.obs);

            // Timeouts bootstrap (done only on true environment terminals).
            const bool done_mask = result.state.terminal &&
                                   result.state.cause != sim::TerminalCause::Timeout;
            models.replay.push(raw, action, r, raw_next, done_mask);

            if (total_steps >= sac_cfg.warmup_steps && total_steps % update_every == 0)
                sac::sac_update(models, codec, rng);

            state = std::move(result.state);
            obs = std::move(result.obs);
            a_prev = action;
            feature = feature_next;
            raw = raw_next;
        }

        metric.success = state.cause == sim::TerminalCause::Success;
        window.push_back(metric.success);
        window_successes += metric.success ? 1 : 0;
        if (window.size() > 100) {
            window_successes -= window.front() ? 1 : 0;
            window.pop_front();
        }
        metric.success_rate_last_100 =
            static_cast<double>(window_successes) / static_cast<double>(window.size());
        if (window.size() >= 100)
            out.best_success_rate = std::max(out.best_success_rate, metric.success_rate_last_100);
        out.metrics.push_back(metric);
        if (metrics_out) (*metrics_out) << metric.to_json().dump() << "\n";
        if (log && (ep % 25 == 0 || ep + 1 == cfg.online.episodes))
            (*log) << "[policy " << repr_mode_name(repr) << "/"
                   << rewards::reward_mode_name(reward_mode) << "] episode " << ep << " rate "
                   << metric.success_rate_last_100 << " alpha " << models.alpha() << "\n";
    }

    out.final_success_rate = out.metrics.empty() ? 0.0 : out.metrics.back().success_rate_last_100;
    out.policy.actor = models.actor;
    out.policy.codec = codec;
    out.policy.action_scale = models.action_scale;
    out.policy.action_dim = models.action_dim;
    out.policy.repr_mode = repr_mode_name(repr);
    out.policy.reward_mode = rewards::reward_mode_name(reward_mode);
    return out;
}

// --- evaluation -------------------------------------------------------------------------------

json EvalReport::to_json() const {
    json j;
    j["outcomes"] = outcomes;
    j["success_rate_last_100"] = success_rate_last_100;
    j["episodes"] = episodes;
    j["wall_clock_s"] = wall_clock_s;
    j["repr_mode"] = repr_mode;
    j["reward_mode"] = reward_mode;
    j["scale_ratio"] = scale_ratio;
    return j;
}

EvalReport evaluate(const config::Config& cfg, const sac::PolicyArtifact& policy,
                    const Artifacts& art, int n_trials, double scale_ratio, uint64_t seed) {
    config::Config scaled = cfg;
    scaled.scene.scale_ratio = scale_ratio;
    scaled.scene.validate(); // throws when clearance goes non-positive

    const ReprMode repr = parse_repr_mode(policy.repr_mode);
    require_artifacts(repr, rewards::RewardMode::Oracle, art); // reward not needed at eval

    sim::Env env(scaled.arm, scaled.scene);
    sac::SacModels actor_only;
    actor_only.actor = policy.actor;
    actor_only.action_dim = policy.action_dim;
    actor_only.action_scale = policy.action_scale;
    actor_only.cfg = cfg.sac;

    const auto t0 = std::chrono::steady_clock::now();
    EvalReport report;
    report.repr_mode = policy.repr_mode;
    report.reward_mode = policy.reward_mode;
    report.scale_ratio = scale_ratio;

    Rng rng(seed ^ 0xe5a1ull);
    for (int trial = 0; trial < n_trials; ++trial) {
        Rng trial_rng = rng.fork(static_cast<uint64_t>(trial));
        auto [state, obs] = env.reset(trial_rng.next_u64());
        VectorXd a_prev = VectorXd::Zero(scaled.arm.n_joints);
        bool success = false;
        while (!state.terminal) {
            const VectorXd feature = compute_feature(repr, art, obs, a_prev);
            const VectorXd s = policy.codec.normalize(policy.codec.raw_state(feature, obs));
            const VectorXd action = sac::actor_sample(actor_only, s, trial_rng, true).action;
            auto result = env.step(state, action);
            success = success || result.success;
            state = std::move(result.state);
            obs = std::move(result.obs);
            a_prev = action;
        }
        report.outcomes.push_back(success ? 1 : 0);
    }

    const int window = std::min<int>(100, static_cast<int>(report.outcomes.size()));
    int hits = 0;
    for (int i = static_cast<int>(report.outcomes.size()) - window;
         i < static_cast<int>(report.outcomes.size()); ++i)
        hits += report.outcomes[static_cast<size_t>(i)];
    report.success_rate_last_100 = window > 0 ? static_cast<double>(hits) / window : 0.0;
    report.episodes = n_trials;
    report.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<EvalReport> scale_generalization_eval(const config::Config& cfg,
                                                  const sac::PolicyArtifact& policy,
                                                  const Artifacts& art,
                                                  const std::vector<double>& scales,
                                                  uint64_t seed) {
    std::vector<EvalReport> out;
    for (double s : scales) {
        config::Config scaled = cfg;
        scaled.scene.scale_ratio = s;
        try {
            scaled.scene.validate();
        } catch (const std::exception& e) {
            std::cerr << "[scale-eval] scale " << s << ": " << e.what()
                      << " (reporting 0% success)\n";
            EvalReport r;
            r.scale_ratio = s;
            r.episodes = cfg.online.eval_trials;
            r.repr_mode = policy.repr_mode;
            r.reward_mode = policy.reward_mode;
            out.push_back(r);
            continue;
        }
        out.push_back(evaluate(cfg, policy, art, cfg.online.eval_trials, s, seed));
    }
    return out;
}

} // namespace cfrl::pipeline
