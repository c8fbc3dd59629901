#include "cfrl/config.hpp"

#include <set>
#include <sstream>

namespace cfrl::config {

using nlohmann::json;

namespace {

// Tracks which keys of one JSON object were consumed; unknown keys become
// errors so typos cannot silently fall back to defaults.
class Section {
public:
    Section(const json* j, std::string path, std::vector<std::string>* errors)
        : j_(j), path_(std::move(path)), errors_(errors) {}

    ~Section() {
        if (!j_ || !j_->is_object()) return;
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!seen_.count(it.key()))
                errors_->push_back(path_ + "/" + it.key() + ": unknown key");
    }

    bool present(const std::string& key) const { return j_ && j_->contains(key); }

    const json* child(const std::string& key) {
        seen_.insert(key);
        if (!present(key)) return nullptr;
        const json& c = (*j_)[key];
        if (!c.is_object()) {
            errors_->push_back(path_ + "/" + key + ": expected an object");
            return nullptr;
        }
        return &c;
    }

    template <typename T>
    void value(const std::string& key, T& target) {
        seen_.insert(key);
        if (!present(key)) return;
        try {
            target = (*j_)[key].get<T>();
        } catch (const std::exception&) {
            errors_->push_back(path_ + "/" + key + ": wrong type");
        }
    }

    std::string path() const { return path_; }

private:
    const json* j_;
    std::string path_;
    std::vector<std::string>* errors_;
    std::set<std::string> seen_;
};

void parse_arm(const json* j, const std::string& path, sim::ArmConfig& arm,
               std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("n_joints", arm.n_joints);
    s.value("link_lengths", arm.link_lengths);
    s.value("joint_velocity_limit", arm.joint_velocity_limit);
    double hz = 1.0 / arm.dt;
    s.value("control_hz", hz);
    if (hz > 0.0) arm.dt = 1.0 / hz;
    s.value("joint_limit", arm.joint_limit);
    s.value("link_render_width", arm.link_render_width);
}

void parse_scene(const json* j, const std::string& path, sim::SceneConfig& sc,
                 std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("slot_radius_min", sc.slot_radius_min);
    s.value("slot_radius_max", sc.slot_radius_max);
    s.value("slot_bearing_range", sc.slot_bearing_range);
    s.value("slot_yaw_range", sc.slot_yaw_range);
    s.value("slot_opening_width", sc.slot_opening_width);
    s.value("slot_depth", sc.slot_depth);
    s.value("slot_wall_thickness", sc.slot_wall_thickness);
    s.value("peg_width", sc.peg_width);
    s.value("peg_length", sc.peg_length);
    s.value("scale_ratio", sc.scale_ratio);
    s.value("grasp_offset_trans", sc.grasp_offset_trans);
    s.value("grasp_offset_angle", sc.grasp_offset_angle);
    s.value("init_distance_min", sc.init_distance_min);
    s.value("init_distance_max", sc.init_distance_max);
    s.value("insertion_depth_ratio", sc.insertion_depth_ratio);
    s.value("success_angle_tol", sc.success_angle_tol);
    s.value("contact_stiffness", sc.contact_stiffness);
    s.value("contact_damping", sc.contact_damping);
    s.value("contact_resolve_rate", sc.contact_resolve_rate);
    s.value("contact_substeps", sc.contact_substeps);
    s.value("max_steps", sc.max_steps);
    s.value("camera_center_x", sc.camera_center_x);
    s.value("camera_center_y", sc.camera_center_y);
    s.value("camera_world_width", sc.camera_world_width);
}

void parse_ratio(const json* j, const std::string& path, gvf::RatioTrainConfig& rc,
                 std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("hidden", rc.hidden);
    s.value("step_size", rc.step_size);
    s.value("batch_size", rc.batch_size);
    s.value("steps", rc.steps);
    s.value("min_transitions", rc.min_transitions);
    s.value("include_image", rc.include_image);
    s.value("clamp_epsilon", rc.clamp_epsilon);
}

void parse_gvf_train(const json* j, const std::string& path, gvf::GvfTrainConfig& tc,
                     std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("hidden", tc.hidden);
    s.value("step_size", tc.step_size);
    s.value("batch_size", tc.batch_size);
    s.value("td_steps", tc.td_steps);
    s.value("polyak_rate", tc.polyak_rate);
    s.value("use_importance_resampling", tc.use_importance_resampling);
    parse_ratio(s.child("ratio"), path + "/ratio", tc.ratio, errors);
}

void parse_rewards(const json* j, const std::string& path, rewards::RewardConfig& rc,
                   std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("r_success", rc.r_success);
    std::string mode = rewards::reward_mode_name(rc.mode);
    s.value("mode", mode);
    try {
        rc.mode = rewards::parse_reward_mode(mode);
    } catch (const std::exception& e) {
        errors->push_back(path + "/mode: " + e.what());
    }
    s.value("classifier_threshold", rc.classifier_threshold);
    if (const json* o = s.child("oracle")) {
        Section so(o, path + "/oracle", errors);
        so.value("approach_scale", rc.oracle.approach_scale);
        so.value("align_bonus", rc.oracle.align_bonus);
        so.value("depth_scale", rc.oracle.depth_scale);
    }
}

void parse_classifier(const json* j, const std::string& path, rewards::ClassifierTrainConfig& cc,
                      ClassifierDataConfig& dc, std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("hidden", cc.hidden);
    s.value("step_size", cc.step_size);
    s.value("batch_size", cc.batch_size);
    s.value("steps", cc.steps);
    s.value("holdout_fraction", cc.holdout_fraction);
    s.value("min_images_per_class", cc.min_images_per_class);
    s.value("positives", dc.positives);
    s.value("negatives", dc.negatives);
    s.value("near_miss_fraction", dc.near_miss_fraction);
}

void parse_sac(const json* j, const std::string& path, sac::SacConfig& sc,
               std::vector<std::string>* errors) {
    Section s(j, path, errors);
    s.value("actor_hidden", sc.actor_hidden);
    s.value("critic_hidden", sc.critic_hidden);
    s.value("actor_lr", sc.actor_lr);
    s.value("critic_lr", sc.critic_lr);
    s.value("alpha_lr", sc.alpha_lr);
    s.value("discount", sc.discount);
    s.value("polyak_rate", sc.polyak_rate);
    s.value("batch_size", sc.batch_size);
    s.value("replay_capacity", sc.replay_capacity);
    s.value("warmup_steps", sc.warmup_steps);
    s.value("update_every", sc.update_every);
    s.value("initial_alpha", sc.initial_alpha);
    s.value("target_entropy_per_dim", sc.target_entropy_per_dim);
    s.value("reward_scale", sc.reward_scale);
    s.value("log_std_min", sc.log_std_min);
    s.value("log_std_max", sc.log_std_max);
}

void parse_pipeline(const json* j, const std::string& path, Config& c,
                    std::vector<std::string>* errors) {
    Section s(j, path, errors);
    if (const json* o = s.child("collect")) {
        Section sc(o, path + "/collect", errors);
        sc.value("episodes", c.collect.episodes);
        sc.value("steps_per_episode", c.collect.steps_per_episode);
        sc.value("near_fraction", c.collect.near_fraction);
        sc.value("near_radius", c.collect.near_radius);
        sc.value("pbvs_gain", c.collect.pbvs_gain);
        sc.value("pbvs_noise", c.collect.pbvs_noise);
    }
    if (const json* o = s.child("teach")) {
        Section st(o, path + "/teach", errors);
        st.value("depth_ratio", c.teach.depth_ratio);
        st.value("noise_translation", c.teach.noise_translation);
        st.value("noise_rotation", c.teach.noise_rotation);
    }
    if (const json* o = s.child("online")) {
        Section so(o, path + "/online", errors);
        so.value("episodes", c.online.episodes);
        so.value("repr_mode", c.online.repr_mode);
        so.value("include_force", c.online.include_force);
        so.value("eval_trials", c.online.eval_trials);
        so.value("pixel_hidden", c.online.pixel_hidden);
        so.value("pixel_batch_size", c.online.pixel_batch_size);
        so.value("pixel_update_every", c.online.pixel_update_every);
    }
    if (const json* o = s.child("regressor")) {
        Section sr(o, path + "/regressor", errors);
        sr.value("hidden", c.regressor.hidden);
        sr.value("step_size", c.regressor.step_size);
        sr.value("batch_size", c.regressor.batch_size);
        sr.value("steps", c.regressor.steps);
        sr.value("holdout_fraction", c.regressor.holdout_fraction);
    }
}

void cross_validate(Config& c, std::vector<std::string>* errors) {
    auto check = [&](const char* path, auto&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            errors->push_back(std::string(path) + ": " + e.what());
        }
    };

    if (c.gammas.size() != 4)
        errors->push_back("/gvf/question/gammas: expected exactly 4 horizons (psi is 4 x 6 = 24 dims)");
    for (size_t i = 0; i < c.gammas.size(); ++i)
        if (c.gammas[i] < 0.0 || c.gammas[i] >= 1.0)
            errors->push_back("/gvf/question/gammas[" + std::to_string(i) + "]: outside [0,1)");
    if (!(c.lambda > 0.0)) errors->push_back("/gvf/question/lambda: must be > 0");
    if (!(c.tau_sigma_scale > 0.0)) errors->push_back("/gvf/question/tau_sigma_scale: must be > 0");

    check("/sim/arm", [&] { c.arm.validate(); });
    check("/sim/scene", [&] { c.scene.validate(); });
    check("/rewards", [&] { c.reward.validate(); });
    check("/sac", [&] { c.sac.validate(); });

    if (c.collect.episodes < 1) errors->push_back("/pipeline/collect/episodes: must be >= 1");
    if (c.collect.steps_per_episode < 1)
        errors->push_back("/pipeline/collect/steps_per_episode: must be >= 1");
    if (c.collect.near_fraction < 0.0 || c.collect.near_fraction > 1.0)
        errors->push_back("/pipeline/collect/near_fraction: must be in [0,1]");
    if (c.online.episodes < 1) errors->push_back("/pipeline/online/episodes: must be >= 1");
    if (c.teach.depth_ratio <= 0.0 || c.teach.depth_ratio > 1.0)
        errors->push_back("/pipeline/teach/depth_ratio: must be in (0,1]");
    if (c.online.repr_mode != "counterfactual" && c.online.repr_mode != "classifier_latent" &&
        c.online.repr_mode != "pose_regression" && c.online.repr_mode != "raw_pixels")
        errors->push_back("/pipeline/online/repr_mode: unknown mode '" + c.online.repr_mode + "'");
    if (c.classifier.hidden.empty() || c.classifier.hidden.back() != 8)
        errors->push_back("/classifier/hidden: last hidden layer (latent tap) must have width 8");
    if (c.arm.reach() < c.scene.slot_radius_max + c.scene.slot_depth)
        errors->push_back("/sim: arm reach " + std::to_string(c.arm.reach()) +
                          " too short for the slot placement range");
}

} // namespace

gvf::GvfQuestion Config::question() const {
    gvf::GvfQuestion q;
    const double sd = tau_sigma_scale * arm.joint_velocity_limit;
    q.tau_sigma = Eigen::VectorXd::Constant(arm.n_joints, sd * sd);
    q.gammas = gammas;
    q.lambda = lambda;
    return q;
}

ParseResult parse_config_json(const json& root) {
    ParseResult out;
    out.config = Config{};
    Config& c = out.config;
    auto* errors = &out.errors;

    if (!root.is_object()) {
        out.errors.push_back("/: config root must be a JSON object");
        return out;
    }
    {
        Section s(&root, "", errors);
        s.value("seed", c.seed);
        s.value("out_dir", c.out_dir);
        if (const json* o = s.child("sim")) {
            Section ss(o, "/sim", errors);
            parse_arm(ss.child("arm"), "/sim/arm", c.arm, errors);
            parse_scene(ss.child("scene"), "/sim/scene", c.scene, errors);
        }
        if (const json* o = s.child("gvf")) {
            Section sg(o, "/gvf", errors);
            if (const json* q = sg.child("question")) {
                Section sq(q, "/gvf/question", errors);
                sq.value("tau_sigma_scale", c.tau_sigma_scale);
                sq.value("gammas", c.gammas);
                sq.value("lambda", c.lambda);
            }
            parse_gvf_train(sg.child("train"), "/gvf/train", c.gvf_train, errors);
        }
        parse_rewards(s.child("rewards"), "/rewards", c.reward, errors);
        parse_classifier(s.child("classifier"), "/classifier", c.classifier, c.classifier_data,
                         errors);
        parse_sac(s.child("sac"), "/sac", c.sac, errors);
        parse_pipeline(s.child("pipeline"), "/pipeline", c, errors);
    }
    cross_validate(c, errors);
    return out;
}

ParseResult parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        ParseResult out;
        out.errors.push_back(std::string("/: JSON parse error: ") + e.what());
        return out;
    }
    return parse_config_json(j);
}

Config default_config() { return Config{}; }

json Config::to_json() const {
    json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    j["sim"]["arm"] = {{"n_joints", arm.n_joints},
                       {"link_lengths", arm.link_lengths},
                       {"joint_velocity_limit", arm.joint_velocity_limit},
                       {"control_hz", 1.0 / arm.dt},
                       {"joint_limit", arm.joint_limit},
                       {"link_render_width", arm.link_render_width}};
    j["sim"]["scene"] = {{"slot_radius_min", scene.slot_radius_min},
                         {"slot_radius_max", scene.slot_radius_max},
                         {"slot_bearing_range", scene.slot_bearing_range},
                         {"slot_yaw_range", scene.slot_yaw_range},
                         {"slot_opening_width", scene.slot_opening_width},
                         {"slot_depth", scene.slot_depth},
                         {"slot_wall_thickness", scene.slot_wall_thickness},
                         {"peg_width", scene.peg_width},
                         {"peg_length", scene.peg_length},
                         {"scale_ratio", scene.scale_ratio},
                         {"grasp_offset_trans", scene.grasp_offset_trans},
                         {"grasp_offset_angle", scene.grasp_offset_angle},
                         {"init_distance_min", scene.init_distance_min},
                         {"init_distance_max", scene.init_distance_max},
                         {"insertion_depth_ratio", scene.insertion_depth_ratio},
                         {"success_angle_tol", scene.success_angle_tol},
                         {"contact_stiffness", scene.contact_stiffness},
                         {"contact_damping", scene.contact_damping},
                         {"contact_resolve_rate", scene.contact_resolve_rate},
                         {"contact_substeps", scene.contact_substeps},
                         {"max_steps", scene.max_steps},
                         {"camera_center_x", scene.camera_center_x},
                         {"camera_center_y", scene.camera_center_y},
                         {"camera_world_width", scene.camera_world_width}};
    j["gvf"]["question"] = {{"tau_sigma_scale", tau_sigma_scale}, {"gammas", gammas}, {"lambda", lambda}};
    j["gvf"]["train"] = {{"hidden", gvf_train.hidden},
                         {"step_size", gvf_train.step_size},
                         {"batch_size", gvf_train.batch_size},
                         {"td_steps", gvf_train.td_steps},
                         {"polyak_rate", gvf_train.polyak_rate},
                         {"use_importance_resampling", gvf_train.use_importance_resampling},
                         {"ratio",
                          {{"hidden", gvf_train.ratio.hidden},
                           {"step_size", gvf_train.ratio.step_size},
                           {"batch_size", gvf_train.ratio.batch_size},
                           {"steps", gvf_train.ratio.steps},
                           {"min_transitions", gvf_train.ratio.min_transitions},
                           {"include_image", gvf_train.ratio.include_image},
                           {"clamp_epsilon", gvf_train.ratio.clamp_epsilon}}}};
    j["rewards"] = {{"r_success", reward.r_success},
                    {"mode", rewards::reward_mode_name(reward.mode)},
                    {"classifier_threshold", reward.classifier_threshold},
                    {"oracle",
                     {{"approach_scale", reward.oracle.approach_scale},
                      {"align_bonus", reward.oracle.align_bonus},
                      {"depth_scale", reward.oracle.depth_scale}}}};
    j["classifier"] = {{"hidden", classifier.hidden},
                       {"step_size", classifier.step_size},
                       {"batch_size", classifier.batch_size},
                       {"steps", classifier.steps},
                       {"holdout_fraction", classifier.holdout_fraction},
                       {"min_images_per_class", classifier.min_images_per_class},
                       {"positives", classifier_data.positives},
                       {"negatives", classifier_data.negatives},
                       {"near_miss_fraction", classifier_data.near_miss_fraction}};
    j["sac"] = {{"actor_hidden", sac.actor_hidden},
                {"critic_hidden", sac.critic_hidden},
                {"actor_lr", sac.actor_lr},
                {"critic_lr", sac.critic_lr},
                {"alpha_lr", sac.alpha_lr},
                {"discount", sac.discount},
                {"polyak_rate", sac.polyak_rate},
                {"batch_size", sac.batch_size},
                {"replay_capacity", sac.replay_capacity},
                {"warmup_steps", sac.warmup_steps},
                {"update_every", sac.update_every},
                {"initial_alpha", sac.initial_alpha},
                {"target_entropy_per_dim", sac.target_entropy_per_dim},
                {"reward_scale", sac.reward_scale},
                {"log_std_min", sac.log_std_min},
                {"log_std_max", sac.log_std_max}};
    j["pipeline"]["collect"] = {{"episodes", collect.episodes},
                                {"steps_per_episode", collect.steps_per_episode},
                                {"near_fraction", collect.near_fraction},
                                {"near_radius", collect.near_radius},
                                {"pbvs_gain", collect.pbvs_gain},
                                {"pbvs_noise", collect.pbvs_noise}};
    j["pipeline"]["teach"] = {{"depth_ratio", teach.depth_ratio},
                              {"noise_translation", teach.noise_translation},
                              {"noise_rotation", teach.noise_rotation}};
    j["pipeline"]["online"] = {{"episodes", online.episodes},
                               {"repr_mode", online.repr_mode},
                               {"include_force", online.include_force},
                               {"eval_trials", online.eval_trials},
                               {"pixel_hidden", online.pixel_hidden},
                               {"pixel_batch_size", online.pixel_batch_size},
                               {"pixel_update_every", online.pixel_update_every}};
    j["pipeline"]["regressor"] = {{"hidden", regressor.hidden},
                                  {"step_size", regressor.step_size},
                                  {"batch_size", regressor.batch_size},
                                  {"steps", regressor.steps},
                                  {"holdout_fraction", regressor.holdout_fraction}};
    return j;
}

} // namespace cfrl::config
