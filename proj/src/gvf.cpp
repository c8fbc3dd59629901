#include "cfrl/gvf.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cfrl::gvf {

using nlohmann::json;

void GvfQuestion::validate() const {
    if (tau_sigma.size() < 1) throw std::invalid_argument("gvf question: empty tau_sigma");
    for (int i = 0; i < tau_sigma.size(); ++i)
        if (!(tau_sigma[i] > 0.0)) throw std::invalid_argument("gvf question: tau_sigma must be > 0");
    if (gammas.empty()) throw std::invalid_argument("gvf question: no gammas");
    for (double g : gammas)
        if (g < 0.0 || g >= 1.0) throw std::invalid_argument("gvf question: gamma outside [0,1)");
    if (!(lambda > 0.0)) throw std::invalid_argument("gvf question: lambda must be > 0");
}

Obs32 to_obs32(const sim::Observation& obs) {
    Obs32 o;
    o.image = obs.image;
    o.joint_pos = obs.joint_pos.cast<float>();
    o.joint_torque = obs.joint_torque.cast<float>();
    return o;
}

Pose relative_pose(const Pose& t_star, const Pose& t_c) {
    return t_star.inverse().compose(t_c);
}

Vec6 cumulant(const Pose& rel, double lambda) {
    double theta = 0.0;
    Vec3 axis;
    axis_angle(rel.rotation, theta, axis);
    Vec6 c;
    c.head<3>() = -lambda * rel.translation;
    c.tail<3>() = -lambda * theta * axis;
    return c;
}

double tau_logpdf(const GvfQuestion& q, const VectorXd& a, const VectorXd& a_prev) {
    if (a.size() != q.tau_sigma.size() || a_prev.size() != q.tau_sigma.size())
        throw std::invalid_argument("tau_logpdf: dimension mismatch");
    double lp = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        const double var = q.tau_sigma[i];
        const double d = a[i] - a_prev[i];
        lp += -0.5 * (d * d / var + std::log(2.0 * M_PI * var));
    }
    return lp;
}

VectorXd tau_sample(const GvfQuestion& q, const VectorXd& a_prev, Rng& rng) {
    if (a_prev.size() != q.tau_sigma.size())
        throw std::invalid_argument("tau_sample: dimension mismatch");
    VectorXd a(a_prev.size());
    for (int i = 0; i < a.size(); ++i) a[i] = a_prev[i] + std::sqrt(q.tau_sigma[i]) * rng.gaussian();
    return a;
}

// --- density-ratio model -------------------------------------------------------

namespace {

// Layout: [image?] joint_pos, joint_torque, a_prev, a.
VectorXd ratio_input(const Transition& t, const VectorXd& action, bool include_image) {
    const int img = include_image ? static_cast<int>(t.obs.image.size()) : 0;
    const int np = static_cast<int>(t.obs.joint_pos.size());
    const int nt = static_cast<int>(t.obs.joint_torque.size());
    const int nprev = static_cast<int>(t.a_prev.size());
    const int na = static_cast<int>(action.size());
    VectorXd x(img + np + nt + nprev + na);
    int at = 0;
    if (include_image) {
        x.segment(at, img) = t.obs.image.cast<double>();
        at += img;
    }
    x.segment(at, np) = t.obs.joint_pos.cast<double>();
    at += np;
    x.segment(at, nt) = t.obs.joint_torque.cast<double>();
    at += nt;
    x.segment(at, nprev) = t.a_prev.cast<double>();
    at += nprev;
    x.segment(at, na) = action;
    return x;
}

int ratio_input_dim(const Transition& t, bool include_image) {
    return (include_image ? static_cast<int>(t.obs.image.size()) : 0) +
           static_cast<int>(t.obs.joint_pos.size() + t.obs.joint_torque.size() +
                            t.a_prev.size() + t.action.size());
}

} // namespace

double RatioModel::g(const Transition& t, const VectorXd& action) const {
    if (degenerate) return 0.5;
    VectorXd x = ratio_input(t, action, include_image);
    x = (x - input_mean).cwiseQuotient(input_std);
    const double raw = nn::forward(discriminator, x)[0];
    return std::clamp(raw, clamp_epsilon, 1.0 - clamp_epsilon);
}

double RatioModel::log_ratio(const Transition& t, const VectorXd& action) const {
    const double p = g(t, action);
    return std::log(p) - std::log1p(-p);
}

double RatioModel::ratio(const Transition& t) const {
    return std::exp(log_ratio(t, t.action.cast<double>()));
}

RatioModel train_ratio_model(const std::vector<Transition>& data, const GvfQuestion& q,
                             const RatioTrainConfig& cfg, uint64_t seed) {
    if (data.size() < cfg.min_transitions)
        throw std::invalid_argument("train_ratio_model: need at least " +
                                    std::to_string(cfg.min_transitions) + " transitions");

    RatioModel rm;
    rm.include_image = cfg.include_image;
    rm.clamp_epsilon = cfg.clamp_epsilon;

    // Degenerate data: identical actions everywhere make mu vs tau moot.
    double var = 0.0;
    const VectorXf& a0 = data.front().action;
    for (const auto& t : data) var += (t.action - a0).squaredNorm();
    if (var / static_cast<double>(data.size()) < 1e-12) {
        std::cerr << "[gvf] warning: degenerate action data, density ratio fixed to 1\n";
        rm.degenerate = true;
        return rm;
    }

    const int in_dim = ratio_input_dim(data.front(), cfg.include_image);
    rm.input_mean = VectorXd::Zero(in_dim);
    rm.input_std = VectorXd::Ones(in_dim);
    {
        MatrixXd acc(in_dim, 2);
        acc.setZero();
        const size_t stride = std::max<size_t>(1, data.size() / 2000);
        size_t count = 0;
        for (size_t i = 0; i < data.size(); i += stride) {
            const VectorXd x = ratio_input(data[i], data[i].action.cast<double>(), cfg.include_image);
            acc.col(0) += x;
            acc.col(1) += x.cwiseProduct(x);
            ++count;
        }
        rm.input_mean = acc.col(0) / static_cast<double>(count);
        const VectorXd var_vec =
            (acc.col(1) / static_cast<double>(count) - rm.input_mean.cwiseProduct(rm.input_mean))
                .cwiseMax(1e-8);
        rm.input_std = var_vec.cwiseSqrt();
    }

    // Train on logits (identity output) for stability; the stored model gets
    // a sigmoid output tag so g stays in (0,1).
    std::vector<int> sizes;
    sizes.push_back(in_dim);
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(1);
    nn::ParamSet net =
        nn::init_params(sizes, nn::Activation::Relu, nn::Activation::Identity, seed);
    nn::AdamConfig adam;
    adam.step_size = cfg.step_size;
    auto opt = nn::OptimizerState::create(net, adam);

    Rng rng(seed ^ 0xda7a5e7ull);
    const int B = cfg.batch_size;
    double running_loss = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        MatrixXd X(in_dim, B);
        VectorXd y(B);
        for (int b = 0; b < B; ++b) {
            const Transition& t = data[rng.uniform_index(data.size())];
            const bool positive = (b % 2 == 0); // label 1: action resampled from tau
            VectorXd a = positive ? tau_sample(q, t.a_prev.cast<double>(), rng)
                                  : t.action.cast<double>();
            X.col(b) = (ratio_input(t, a, cfg.include_image) - rm.input_mean)
                           .cwiseQuotient(rm.input_std);
            y[b] = positive ? 1.0 : 0.0;
        }
        nn::BatchTrace trace;
        const MatrixXd logits = nn::forward_batch(net, X, &trace);
        MatrixXd grad(1, B);
        double loss = 0.0;
        for (int b = 0; b < B; ++b) {
            const double p = 1.0 / (1.0 + std::exp(-logits(0, b)));
            grad(0, b) = (p - y[b]) / B; // d(BCE with logits)/dlogit
            loss += -(y[b] * std::log(std::max(p, 1e-12)) +
                      (1.0 - y[b]) * std::log(std::max(1.0 - p, 1e-12)));
        }
        running_loss = loss / B;
        nn::GradSet g = nn::backward_batch(net, trace, grad);
        nn::adam_step(net, g, opt);
    }

    net.layers.back().act = nn::Activation::Sigmoid;
    rm.discriminator = std::move(net);
    rm.final_loss = running_loss;
    return rm;
}

size_t ResampleTable::sample(Rng& rng) const {
    const double u = rng.uniform01() * cdf.back();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min<size_t>(static_cast<size_t>(it - cdf.begin()), cdf.size() - 1);
}

ResampleTable build_resample_table(const std::vector<Transition>& buffer, const RatioModel& rm,
                                   size_t count) {
    const size_t n = (count == 0 || count > buffer.size()) ? buffer.size() : count;
    ResampleTable table;
    table.cdf.resize(n);
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        acc += rm.ratio(buffer[i]);
        table.cdf[i] = acc;
    }
    if (!(acc > 0.0) || !std::isfinite(acc)) {
        std::cerr << "[gvf] warning: degenerate resampling weights, falling back to uniform\n";
        for (size_t i = 0; i < n; ++i) table.cdf[i] = static_cast<double>(i + 1);
    }
    return table;
}

std::vector<size_t> importance_resample(const std::vector<Transition>& buffer,
                                        const RatioModel& rm, size_t batch_size, Rng& rng) {
    if (buffer.empty()) throw std::invalid_argument("importance_resample: empty buffer");
    const ResampleTable table = build_resample_table(buffer, rm);
    std::vector<size_t> out;
    out.reserve(batch_size);
    for (size_t i = 0; i < batch_size; ++i) out.push_back(table.sample(rng));
    return out;
}

// --- input codec -----------------------------------------------------------------

int InputCodec::input_dim() const {
    return (include_image ? image_pixels : 0) + (include_joint_pos ? n_joints : 0) +
           (include_action ? action_dim : 0);
}

VectorXd InputCodec::encode(const Obs32& obs, const VectorXd& action) const {
    VectorXd x(input_dim());
    int at = 0;
    if (include_image) {
        if (static_cast<int>(obs.image.size()) != image_pixels)
            throw std::invalid_argument("gvf encode: image size mismatch");
        x.segment(at, image_pixels) = obs.image.cast<double>();
        at += image_pixels;
    }
    int pat = 0;
    if (include_joint_pos) {
        if (static_cast<int>(obs.joint_pos.size()) != n_joints)
            throw std::invalid_argument("gvf encode: joint_pos size mismatch");
        x.segment(at, n_joints) = (obs.joint_pos.cast<double>() - proprio_mean.segment(pat, n_joints))
                                      .cwiseQuotient(proprio_std.segment(pat, n_joints));
        at += n_joints;
        pat += n_joints;
    }
    if (include_action) {
        if (static_cast<int>(action.size()) != action_dim)
            throw std::invalid_argument("gvf encode: action size mismatch");
        x.segment(at, action_dim) = (action - proprio_mean.segment(pat, action_dim))
                                        .cwiseQuotient(proprio_std.segment(pat, action_dim));
    }
    return x;
}

VectorXd InputCodec::encode(const sim::Observation& obs, const VectorXd& action) const {
    return encode(to_obs32(obs), action);
}

InputCodec fit_codec(const std::vector<Transition>& data, const GvfTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("fit_codec: empty data");
    InputCodec c;
    c.include_image = cfg.include_image;
    c.include_joint_pos = cfg.include_joint_pos;
    c.include_action = cfg.include_action;
    c.image_pixels = static_cast<int>(data.front().obs.image.size());
    c.n_joints = static_cast<int>(data.front().obs.joint_pos.size());
    c.action_dim = static_cast<int>(data.front().action.size());

    const int pd = (c.include_joint_pos ? c.n_joints : 0) + (c.include_action ? c.action_dim : 0);
    c.proprio_mean = VectorXd::Zero(pd);
    c.proprio_std = VectorXd::Ones(pd);
    if (pd == 0) return c;

    VectorXd sum = VectorXd::Zero(pd), sumsq = VectorXd::Zero(pd);
    const size_t stride = std::max<size_t>(1, data.size() / 5000);
    size_t count = 0;
    for (size_t i = 0; i < data.size(); i += stride) {
        VectorXd v(pd);
        int at = 0;
        if (c.include_joint_pos) {
            v.segment(at, c.n_joints) = data[i].obs.joint_pos.cast<double>();
            at += c.n_joints;
        }
        if (c.include_action) v.segment(at, c.action_dim) = data[i].action.cast<double>();
        sum += v;
        sumsq += v.cwiseProduct(v);
        ++count;
    }
    c.proprio_mean = sum / static_cast<double>(count);
    c.proprio_std = ((sumsq / static_cast<double>(count)) -
                     c.proprio_mean.cwiseProduct(c.proprio_mean))
                        .cwiseMax(1e-8)
                        .cwiseSqrt();
    return c;
}

// --- predictor + learner -----------------------------------------------------------

VectorXd GvfPredictor::predict(const Obs32& obs, const VectorXd& action) const {
    return nn::forward(net, codec.encode(obs, action));
}

VectorXd GvfPredictor::predict(const sim::Observation& obs, const VectorXd& action) const {
    return nn::forward(net, codec.encode(obs, action));
}

void GvfPredictor::save(const std::string& path) const {
    nn::save_model(net, path);
    json j;
    j["question"]["tau_sigma"] = std::vector<double>(question.tau_sigma.data(),
                                                     question.tau_sigma.data() + question.tau_sigma.size());
    j["question"]["gammas"] = question.gammas;
    j["question"]["lambda"] = question.lambda;
    j["codec"]["include_image"] = codec.include_image;
    j["codec"]["include_joint_pos"] = codec.include_joint_pos;
    j["codec"]["include_action"] = codec.include_action;
    j["codec"]["image_pixels"] = codec.image_pixels;
    j["codec"]["n_joints"] = codec.n_joints;
    j["codec"]["action_dim"] = codec.action_dim;
    j["codec"]["proprio_mean"] =
        std::vector<double>(codec.proprio_mean.data(), codec.proprio_mean.data() + codec.proprio_mean.size());
    j["codec"]["proprio_std"] =
        std::vector<double>(codec.proprio_std.data(), codec.proprio_std.data() + codec.proprio_std.size());
    std::ofstream os(path + ".json", std::ios::trunc);
    if (!os) throw std::runtime_error("gvf save: cannot open sidecar for " + path);
    os << j.dump(2) << "\n";
}

GvfPredictor GvfPredictor::load(const std::string& path) {
    GvfPredictor p;
    p.net = nn::load_model(path);
    std::ifstream is(path + ".json");
    if (!is) throw std::runtime_error("gvf load: missing sidecar " + path + ".json");
    json j;
    is >> j;
    const auto sigma = j.at("question").at("tau_sigma").get<std::vector<double>>();
    p.question.tau_sigma = Eigen::Map<const VectorXd>(sigma.data(), static_cast<int>(sigma.size()));
    p.question.gammas = j.at("question").at("gammas").get<std::vector<double>>();
    p.question.lambda = j.at("question").at("lambda").get<double>();
    auto& c = j.at("codec");
    p.codec.include_image = c.at("include_image").get<bool>();
    p.codec.include_joint_pos = c.at("include_joint_pos").get<bool>();
    p.codec.include_action = c.at("include_action").get<bool>();
    p.codec.image_pixels = c.at("image_pixels").get<int>();
    p.codec.n_joints = c.at("n_joints").get<int>();
    p.codec.action_dim = c.at("action_dim").get<int>();
    const auto mean = c.at("proprio_mean").get<std::vector<double>>();
    const auto stdv = c.at("proprio_std").get<std::vector<double>>();
    p.codec.proprio_mean = Eigen::Map<const VectorXd>(mean.data(), static_cast<int>(mean.size()));
    p.codec.proprio_std = Eigen::Map<const VectorXd>(stdv.data(), static_cast<int>(stdv.size()));
    return p;
}

GvfLearner::GvfLearner(const GvfQuestion& q, const GvfTrainConfig& cfg, const InputCodec& codec,
                       uint64_t seed)
    : question_(q), cfg_(cfg), codec_(codec) {
    question_.validate();
    std::vector<int> sizes;
    sizes.push_back(codec_.input_dim());
    for (int h : cfg.hidden) sizes.push_back(h);
    sizes.push_back(q.horizon_count() * 6);
    net_ = nn::init_params(sizes, nn::Activation::Relu, nn::Activation::Identity, seed);
    target_net_ = net_;
    nn::AdamConfig adam;
    adam.step_size = cfg.step_size;
    opt_ = nn::OptimizerState::create(net_, adam);
}

double GvfLearner::td_update(const std::vector<Transition>& data,
                             const std::vector<size_t>& batch, Rng& rng) {
    const int B = static_cast<int>(batch.size());
    const int in_dim = codec_.input_dim();
    const int out_dim = question_.horizon_count() * 6;

    MatrixXd X(in_dim, B), Xn(in_dim, B);
    MatrixXd targets(out_dim, B);
    for (int b = 0; b < B; ++b) {
        const Transition& t = data[batch[b]];
        const VectorXd a_t = t.action.cast<double>();
        X.col(b) = codec_.encode(t.obs, a_t);
        // Bootstrap action from tau centered at the logged action.
        Xn.col(b) = codec_.encode(t.obs_next, tau_sample(question_, a_t, rng));
        targets.col(b).setZero();
    }
    const MatrixXd psi_next = nn::forward_batch(target_net_, Xn);
    for (int b = 0; b < B; ++b) {
        const Transition& t = data[batch[b]];
        const Vec6 c = t.cumulant_next.cast<double>();
        const double cont = static_cast<double>(t.continuation_next);
        for (int k = 0; k < question_.horizon_count(); ++k)
            targets.col(b).segment(k * 6, 6) =
                c + question_.gammas[k] * cont * psi_next.col(b).segment(k * 6, 6);
    }
    if (!targets.allFinite()) {
        std::cerr << "[gvf] warning: non-finite TD target, skipping batch\n";
        return last_loss_;
    }

    nn::BatchTrace trace;
    const MatrixXd psi = nn::forward_batch(net_, X, &trace);
    const MatrixXd err = psi - targets;
    last_loss_ = err.squaredNorm() / B;
    nn::GradSet g = nn::backward_batch(net_, trace, err * (2.0 / B));
    nn::adam_step(net_, g, opt_);
    nn::polyak_update(target_net_, net_, cfg_.polyak_rate);
    return last_loss_;
}

GvfPredictor GvfLearner::freeze() const {
    GvfPredictor p;
    p.net = net_;
    p.question = question_;
    p.codec = codec_;
    return p;
}

// --- Monte-Carlo oracle --------------------------------------------------------------

VectorXd monte_carlo_gvf_oracle(RolloutModel& model, const GvfQuestion& q,
                                const VectorXd& first_action, int n_rollouts, int max_horizon,
                                Rng& rng) {
    const int kd = q.horizon_count();
    const int cd = model.cumulant_dim();
    VectorXd acc = VectorXd::Zero(kd * cd);
    for (int r = 0; r < n_rollouts; ++r) {
        model.reset_start();
        VectorXd a = first_action;
        VectorXd weights = VectorXd::Ones(kd);
        for (int step = 0; step < max_horizon; ++step) {
            const auto [c, cont] = model.step(a);
            for (int k = 0; k < kd; ++k) {
                acc.segment(k * cd, cd) += weights[k] * c;
                weights[k] *= q.gammas[k] * cont;
            }
            if (weights.maxCoeff() < 1e-12) break;
            a = tau_sample(q, a, rng);
        }
    }
    return acc / static_cast<double>(n_rollouts);
}

} // namespace cfrl::gvf
