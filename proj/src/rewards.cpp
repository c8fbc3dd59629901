#include "cfrl/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cfrl::rewards {

using nlohmann::json;

const char* reward_mode_name(RewardMode m) {
    switch (m) {
    case RewardMode::Sparse: return "sparse";
    case RewardMode::Corr: return "corr";
    case RewardMode::Oracle: return "oracle";
    case RewardMode::ViceVariant: return "vice_variant";
    }
    return "?";
}

RewardMode parse_reward_mode(const std::string& name) {
    if (name == "sparse") return RewardMode::Sparse;
    if (name == "corr") return RewardMode::Corr;
    if (name == "oracle") return RewardMode::Oracle;
    if (name == "vice_variant" || name == "vice") return RewardMode::ViceVariant;
    throw std::invalid_argument("unknown reward mode: " + name);
}

void RewardConfig::validate() const {
    if (!(r_success > 1.0))
        throw std::invalid_argument("rewards: r_success must be > 1 to dominate the corr term");
    if (!(classifier_threshold > 0.0 && classifier_threshold < 1.0))
        throw std::invalid_argument("rewards: classifier_threshold must be in (0,1)");
}

namespace {

VectorXd image_input(const VectorXf& image, double mean, double stdev) {
    return (image.cast<double>().array() - mean).matrix() / stdev;
}

double classifier_prob(const nn::ParamSet& net, const VectorXf& image, double mean, double stdev) {
    return nn::forward(net, image_input(image, mean, stdev))[0];
}

// Bootstrap-resampled logit training of one classifier head.
nn::ParamSet train_one(const std::vector<const VectorXf*>& pos,
                       const std::vector<const VectorXf*>& neg, double mean, double stdev,
                       const ClassifierTrainConfig& cfg, uint64_t seed) {
    const int in_dim = static_cast<int>(pos.front()->size());
    std::vector<int> sizes;
    sizes.push_back(in_dim);
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(1);
    nn::ParamSet net = nn::init_params(sizes, nn::Activation::Relu, nn::Activation::Identity, seed);
    nn::AdamConfig adam;
    adam.step_size = cfg.step_size;
    auto opt = nn::OptimizerState::create(net, adam);

    Rng rng(seed ^ 0xc1a55ull);
    // Bootstrap resample indices (with replacement) fixed for this head.
    std::vector<size_t> pos_idx(pos.size()), neg_idx(neg.size());
    for (auto& i : pos_idx) i = rng.uniform_index(pos.size());
    for (auto& i : neg_idx) i = rng.uniform_index(neg.size());

    const int B = cfg.batch_size;
    for (int step = 0; step < cfg.steps; ++step) {
        Eigen::MatrixXd X(in_dim, B);
        VectorXd y(B);
        for (int b = 0; b < B; ++b) {
            const bool positive = (b % 2 == 0);
            const VectorXf* img = positive ? pos[pos_idx[rng.uniform_index(pos_idx.size())]]
                                           : neg[neg_idx[rng.uniform_index(neg_idx.size())]];
            X.col(b) = image_input(*img, mean, stdev);
            y[b] = positive ? 1.0 : 0.0;
        }
        nn::BatchTrace trace;
        const Eigen::MatrixXd logits = nn::forward_batch(net, X, &trace);
        Eigen::MatrixXd grad(1, B);
        for (int b = 0; b < B; ++b) {
            const double p = 1.0 / (1.0 + std::exp(-logits(0, b)));
            grad(0, b) = (p - y[b]) / B;
        }
        nn::GradSet g = nn::backward_batch(net, trace, grad);
        nn::adam_step(net, g, opt);
    }
    net.layers.back().act = nn::Activation::Sigmoid;
    return net;
}

double holdout_accuracy(const nn::ParamSet& net, const std::vector<const VectorXf*>& pos,
                        const std::vector<const VectorXf*>& neg, double mean, double stdev) {
    size_t correct = 0;
    for (const auto* img : pos)
        if (classifier_prob(net, *img, mean, stdev) > 0.5) ++correct;
    for (const auto* img : neg)
        if (classifier_prob(net, *img, mean, stdev) <= 0.5) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pos.size() + neg.size());
}

} // namespace

double SuccessClassifier::prob_first(const VectorXf& image) const {
    return classifier_prob(first, image, pixel_mean, pixel_std);
}

double SuccessClassifier::prob_second(const VectorXf& image) const {
    return classifier_prob(second, image, pixel_mean, pixel_std);
}

SuccessClassifier train_success_classifier(const std::vector<VectorXf>& positive_images,
                                           const std::vector<VectorXf>& negative_images,
                                           const ClassifierTrainConfig& cfg, uint64_t seed) {
    if (positive_images.size() < cfg.min_images_per_class ||
        negative_images.size() < cfg.min_images_per_class)
        throw std::invalid_argument("classifier: need at least " +
                                    std::to_string(cfg.min_images_per_class) +
                                    " images per class");
    const double ratio = static_cast<double>(std::max(positive_images.size(), negative_images.size())) /
                         static_cast<double>(std::min(positive_images.size(), negative_images.size()));
    if (ratio > 10.0) throw std::invalid_argument("classifier: class imbalance exceeds 10:1");
    if (cfg.hidden.empty() || cfg.hidden.back() != 8)
        throw std::invalid_argument("classifier: latent tap layer must have width 8");

    // Deterministic holdout split.
    Rng split_rng(seed ^ 0x5117ull);
    auto split = [&](const std::vector<VectorXf>& all, std::vector<const VectorXf*>& train,
                     std::vector<const VectorXf*>& held) {
        for (const auto& img : all) {
            if (split_rng.uniform01() < cfg.holdout_fraction)
                held.push_back(&img);
            else
                train.push_back(&img);
        }
        if (train.empty() || held.empty())
            throw std::invalid_argument("classifier: holdout split left a class empty");
    };
    std::vector<const VectorXf*> pos_train, pos_held, neg_train, neg_held;
    split(positive_images, pos_train, pos_held);
    split(negative_images, neg_train, neg_held);

    SuccessClassifier sc;
    {
        double sum = 0.0, sumsq = 0.0;
        size_t count = 0;
        for (const auto* img : pos_train)
            for (int i = 0; i < img->size(); ++i) {
                sum += (*img)[i];
                sumsq += static_cast<double>((*img)[i]) * (*img)[i];
                ++count;
            }
        for (const auto* img : neg_train)
            for (int i = 0; i < img->size(); ++i) {
                sum += (*img)[i];
                sumsq += static_cast<double>((*img)[i]) * (*img)[i];
                ++count;
            }
        sc.pixel_mean = sum / static_cast<double>(count);
        sc.pixel_std =
            std::sqrt(std::max(1e-8, sumsq / static_cast<double>(count) - sc.pixel_mean * sc.pixel_mean));
    }

    sc.first = train_one(pos_train, neg_train, sc.pixel_mean, sc.pixel_std, cfg, seed * 2 + 1);
    sc.second = train_one(pos_train, neg_train, sc.pixel_mean, sc.pixel_std, cfg, seed * 2 + 2);
    sc.holdout_accuracy_first =
        holdout_accuracy(sc.first, pos_held, neg_held, sc.pixel_mean, sc.pixel_std);
    sc.holdout_accuracy_second =
        holdout_accuracy(sc.second, pos_held, neg_held, sc.pixel_mean, sc.pixel_std);
    return sc;
}

TerminalReward terminal_reward(const SuccessClassifier& sc, const sim::Observation& obs,
                               const RewardConfig& cfg) {
    TerminalReward out;
    const double p1 = sc.prob_first(obs.image);
    const double p2 = sc.prob_second(obs.image);
    out.success = p1 > cfg.classifier_threshold && p2 > cfg.classifier_threshold;
    out.reward = out.success ? cfg.r_success : 0.0;
    return out;
}

double corr_reward(const VectorXd& psi, bool success, const RewardConfig& cfg) {
    if (success) return cfg.r_success;
    return std::exp(-psi.norm());
}

double oracle_reward(const Pose& rel, const sim::SceneConfig& scene, const RewardConfig& cfg) {
    const sim::InsertionCoords ic = sim::insertion_coords(rel, scene);
    const double goal_depth =
        std::min(1.0, scene.insertion_depth_ratio + 0.05) * scene.slot_depth;
    const Eigen::Vector2d tip(rel.translation.x(), rel.translation.y());
    const double dist_to_goal = (tip - Eigen::Vector2d(0.0, -goal_depth)).norm();

    double r = -cfg.oracle.approach_scale * dist_to_goal;
    const bool aligned =
        ic.lateral < scene.clearance() && std::abs(ic.yaw) < scene.success_angle_tol;
    if (aligned && rel.translation.y() < 0.06) r += cfg.oracle.align_bonus;
    r += cfg.oracle.depth_scale * ic.depth;
    if (sim::success_check(rel, scene)) r += cfg.r_success;
    return r;
}

double vice_variant_reward(const SuccessClassifier& sc, const sim::Observation& obs) {
    const double p1 = std::max(sc.prob_first(obs.image), 1e-8);
    const double p2 = std::max(sc.prob_second(obs.image), 1e-8);
    return 0.5 * (std::log(p1) + std::log(p2));
}

VectorXd classifier_latent(const SuccessClassifier& sc, const sim::Observation& obs) {
    const auto acts =
        nn::forward_all(sc.first, image_input(obs.image, sc.pixel_mean, sc.pixel_std));
    return acts[acts.size() - 2]; // second-last layer output
}

void SuccessClassifier::save(const std::string& path_prefix) const {
    nn::save_model(first, path_prefix + ".a");
    nn::save_model(second, path_prefix + ".b");
    json j;
    j["pixel_mean"] = pixel_mean;
    j["pixel_std"] = pixel_std;
    j["holdout_accuracy_first"] = holdout_accuracy_first;
    j["holdout_accuracy_second"] = holdout_accuracy_second;
    std::ofstream os(path_prefix + ".json", std::ios::trunc);
    if (!os) throw std::runtime_error("classifier save: cannot open sidecar");
    os << j.dump(2) << "\n";
}

SuccessClassifier SuccessClassifier::load(const std::string& path_prefix) {
    SuccessClassifier sc;
    sc.first = nn::load_model(path_prefix + ".a");
    sc.second = nn::load_model(path_prefix + ".b");
    std::ifstream is(path_prefix + ".json");
    if (!is) throw std::runtime_error("classifier load: missing sidecar " + path_prefix + ".json");
    json j;
    is >> j;
    sc.pixel_mean = j.at("pixel_mean").get<double>();
    sc.pixel_std = j.at("pixel_std").get<double>();
    sc.holdout_accuracy_first = j.value("holdout_accuracy_first", 0.0);
    sc.holdout_accuracy_second = j.value("holdout_accuracy_second", 0.0);
    return sc;
}

} // namespace cfrl::rewards
