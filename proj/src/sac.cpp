#include "cfrl/sac.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace cfrl::sac {

using nlohmann::json;

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727; // log sqrt(2 pi)
constexpr double kSquashEps = 1e-6;
} // namespace

void SacConfig::validate() const {
    if (!(discount >= 0.0 && discount < 1.0))
        throw std::invalid_argument("sac: discount must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("sac: batch_size must be >= 1");
    if (replay_capacity < 1) throw std::invalid_argument("sac: replay_capacity must be >= 1");
    if (!(initial_alpha > 0.0)) throw std::invalid_argument("sac: initial_alpha must be > 0");
    if (log_std_min >= log_std_max) throw std::invalid_argument("sac: bad log_std bounds");
}

void RunningStat::init(int dim) {
    mean = VectorXd::Zero(dim);
    m2 = VectorXd::Zero(dim);
    count = 0;
}

void RunningStat::update(const VectorXd& x) {
    if (x.size() != mean.size()) throw std::invalid_argument("running stat: dim mismatch");
    count += 1;
    const VectorXd delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2 += delta.cwiseProduct(x - mean);
}

VectorXd RunningStat::stddev() const {
    if (count < 2) return VectorXd::Ones(mean.size());
    return (m2 / static_cast<double>(count)).cwiseMax(1e-6).cwiseSqrt().cwiseMax(1e-3);
}

void StateCodec::init() { proprio.init(proprio_dim()); }

void StateCodec::observe(const sim::Observation& obs) {
    VectorXd v(proprio_dim());
    v.head(n_joints) = obs.joint_pos;
    if (include_torque) v.tail(n_joints) = obs.joint_torque;
    proprio.update(v);
}

VectorXd StateCodec::raw_state(const VectorXd& feature, const sim::Observation& obs) const {
    if (feature.size() != feature_dim)
        throw std::invalid_argument("state codec: feature dim mismatch");
    if (obs.joint_pos.size() != n_joints)
        throw std::invalid_argument("state codec: joint dim mismatch");
    VectorXd s(state_dim());
    s.head(feature_dim) = feature;
    s.segment(feature_dim, n_joints) = obs.joint_pos;
    if (include_torque) s.tail(n_joints) = obs.joint_torque;
    return s;
}

VectorXd StateCodec::normalize(const VectorXd& raw) const {
    VectorXd s = raw;
    const VectorXd sd = proprio.stddev();
    s.tail(proprio_dim()) =
        (raw.tail(proprio_dim()) - proprio.mean).cwiseQuotient(sd);
    return s;
}

void ReplayBuffer::init(int64_t cap) {
    capacity = cap;
    state.resize(cap);
    next_state.resize(cap);
    action.resize(cap);
    reward.resize(cap);
    done.resize(cap);
    count = 0;
}

void ReplayBuffer::push(const VectorXd& s, const VectorXd& a, double r, const VectorXd& s_next,
                        bool d) {
    const int64_t at = count % capacity;
    state[at] = s.cast<float>();
    action[at] = a.cast<float>();
    reward[at] = static_cast<float>(r);
    next_state[at] = s_next.cast<float>();
    done[at] = d ? 1 : 0;
    ++count;
}

SacModels make_sac(int state_dim, int action_dim, double action_scale, const SacConfig& cfg,
                   uint64_t seed) {
    cfg.validate();
    SacModels m;
    m.cfg = cfg;
    m.action_dim = action_dim;
    m.action_scale = action_scale;
    m.log_alpha = std::log(cfg.initial_alpha);

    auto sizes = [](int in, const std::vector<int>& hidden, int out) {
        std::vector<int> s;
        s.push_back(in);
        for (int h : hidden) s.push_back(h);
        s.push_back(out);
        return s;
    };
    m.actor = nn::init_params(sizes(state_dim, cfg.actor_hidden, 2 * action_dim),
                              nn::Activation::Relu, nn::Activation::Identity, seed + 1);
    m.critic1 = nn::init_params(sizes(state_dim + action_dim, cfg.critic_hidden, 1),
                                nn::Activation::Relu, nn::Activation::Identity, seed + 2);
    m.critic2 = nn::init_params(sizes(state_dim + action_dim, cfg.critic_hidden, 1),
                                nn::Activation::Relu, nn::Activation::Identity, seed + 3);
    m.target1 = m.critic1;
    m.target2 = m.critic2;

    nn::AdamConfig a;
    a.step_size = cfg.actor_lr;
    m.actor_opt = nn::OptimizerState::create(m.actor, a);
    nn::AdamConfig c;
    c.step_size = cfg.critic_lr;
    m.critic1_opt = nn::OptimizerState::create(m.critic1, c);
    m.critic2_opt = nn::OptimizerState::create(m.critic2, c);
    m.replay.init(cfg.replay_capacity);
    return m;
}

namespace {

double squash_log_std(const SacConfig& cfg, double raw) {
    return cfg.log_std_min + 0.5 * (cfg.log_std_max - cfg.log_std_min) * (std::tanh(raw) + 1.0);
}

double squash_log_std_deriv(const SacConfig& cfg, double raw) {
    const double t = std::tanh(raw);
    return 0.5 * (cfg.log_std_max - cfg.log_std_min) * (1.0 - t * t);
}

} // namespace

ActorSample actor_sample(const SacModels& m, const VectorXd& state, Rng& rng,
                         bool deterministic) {
    const VectorXd out = nn::forward(m.actor, state);
    const int n = m.action_dim;
    ActorSample s;
    s.action.resize(n);
    s.log_prob = 0.0;
    for (int i = 0; i < n; ++i) {
        const double mean = out[i];
        const double log_std = squash_log_std(m.cfg, out[n + i]);
        const double sigma = std::exp(log_std);
        const double eps = deterministic ? 0.0 : rng.gaussian();
        const double u = mean + sigma * eps;
        const double t = std::tanh(u);
        s.action[i] = m.action_scale * t;
        s.log_prob += -0.5 * eps * eps - log_std - kLogSqrt2Pi -
                      std::log(1.0 - t * t + kSquashEps) - std::log(m.action_scale);
    }
    return s;
}

double actor_log_prob(const SacModels& m, const VectorXd& state, const VectorXd& action) {
    const VectorXd out = nn::forward(m.actor, state);
    const int n = m.action_dim;
    double lp = 0.0;
    for (int i = 0; i < n; ++i) {
        const double mean = out[i];
        const double log_std = squash_log_std(m.cfg, out[n + i]);
        const double sigma = std::exp(log_std);
        const double t = std::clamp(action[i] / m.action_scale, -1.0 + 1e-9, 1.0 - 1e-9);
        const double u = std::atanh(t);
        const double z = (u - mean) / sigma;
        lp += -0.5 * z * z - log_std - kLogSqrt2Pi - std::log(1.0 - t * t + kSquashEps) -
              std::log(m.action_scale);
    }
    return lp;
}

SacLosses sac_update(SacModels& m, const StateCodec& codec, Rng& rng) {
    const int B = m.cfg.batch_size;
    const int64_t n_stored = m.replay.size();
    if (n_stored < 1) throw std::logic_error("sac_update: empty replay buffer");
    const int n = m.action_dim;
    const int sd = codec.state_dim();

    MatrixXd S(sd, B), Sn(sd, B), A(n, B);
    VectorXd R(B);
    VectorXd D(B);
    for (int b = 0; b < B; ++b) {
        const int64_t i = static_cast<int64_t>(rng.uniform_index(static_cast<uint64_t>(n_stored)));
        S.col(b) = codec.normalize(m.replay.state[i].cast<double>());
        Sn.col(b) = codec.normalize(m.replay.next_state[i].cast<double>());
        A.col(b) = m.replay.action[i].cast<double>();
        R[b] = m.replay.reward[i];
        D[b] = m.replay.done[i] ? 1.0 : 0.0;
    }

    SacLosses losses;
    const double alpha = m.alpha();

    // --- critic targets ------------------------------------------------------
    const MatrixXd actor_next = nn::forward_batch(m.actor, Sn);
    MatrixXd An(n, B);
    VectorXd logp_next(B);
    logp_next.setZero();
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < n; ++i) {
            const double mean = actor_next(i, b);
            const double log_std = squash_log_std(m.cfg, actor_next(n + i, b));
            const double sigma = std::exp(log_std);
            const double eps = rng.gaussian();
            const double u = mean + sigma * eps;
            const double t = std::tanh(u);
            An(i, b) = t; // critics take actions normalized to [-1, 1]
            logp_next[b] += -0.5 * eps * eps - log_std - kLogSqrt2Pi -
                            std::log(1.0 - t * t + kSquashEps) - std::log(m.action_scale);
        }
    }
    MatrixXd QinN(sd + n, B);
    QinN.topRows(sd) = Sn;
    QinN.bottomRows(n) = An;
    const MatrixXd q1n = nn::forward_batch(m.target1, QinN);
    const MatrixXd q2n = nn::forward_batch(m.target2, QinN);
    VectorXd y(B);
    for (int b = 0; b < B; ++b) {
        const double qmin = std::min(q1n(0, b), q2n(0, b));
        y[b] = m.cfg.reward_scale * R[b] +
               m.cfg.discount * (1.0 - D[b]) * (qmin - alpha * logp_next[b]);
    }
    if (!y.allFinite()) {
        std::cerr << "[sac] warning: non-finite critic target, skipping update\n";
        return losses;
    }

    // --- critic step ----------------------------------------------------------
    MatrixXd Qin(sd + n, B);
    Qin.topRows(sd) = S;
    Qin.bottomRows(n) = A / m.action_scale;
    auto critic_step = [&](nn::ParamSet& critic, nn::OptimizerState& opt) {
        nn::BatchTrace trace;
        const MatrixXd q = nn::forward_batch(critic, Qin, &trace);
        MatrixXd err = q.row(0).transpose() - y;
        const double loss = err.squaredNorm() / B;
        MatrixXd up(1, B);
        up.row(0) = err.transpose() * (2.0 / B);
        nn::GradSet g = nn::backward_batch(critic, trace, up);
        nn::adam_step(critic, g, opt);
        return loss;
    };
    losses.critic = 0.5 * (critic_step(m.critic1, m.critic1_opt) +
                           critic_step(m.critic2, m.critic2_opt));

    // --- actor step (reparameterized) ------------------------------------------
    nn::BatchTrace actor_trace;
    const MatrixXd actor_out = nn::forward_batch(m.actor, S, &actor_trace);
    MatrixXd T(n, B), Sig(n, B), Eps(n, B), RawLS(n, B);
    VectorXd logp(B);
    logp.setZero();
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < n; ++i) {
            const double mean = actor_out(i, b);
            const double raw = actor_out(n + i, b);
            const double log_std = squash_log_std(m.cfg, raw);
            const double sigma = std::exp(log_std);
            const double eps = rng.gaussian();
            const double u = mean + sigma * eps;
            const double t = std::tanh(u);
            T(i, b) = t;
            Sig(i, b) = sigma;
            Eps(i, b) = eps;
            RawLS(i, b) = raw;
            logp[b] += -0.5 * eps * eps - log_std - kLogSqrt2Pi -
                       std::log(1.0 - t * t + kSquashEps) - std::log(m.action_scale);
        }
    }
    losses.mean_entropy = -logp.mean();

    MatrixXd QinA(sd + n, B);
    QinA.topRows(sd) = S;
    QinA.bottomRows(n) = T;
    nn::BatchTrace q1_trace, q2_trace;
    const MatrixXd q1 = nn::forward_batch(m.critic1, QinA, &q1_trace);
    const MatrixXd q2 = nn::forward_batch(m.critic2, QinA, &q2_trace);

    // dQmin/dinput through whichever critic attains the min, per sample.
    MatrixXd up1(1, B), up2(1, B);
    double actor_loss = 0.0;
    for (int b = 0; b < B; ++b) {
        const bool one = q1(0, b) <= q2(0, b);
        up1(0, b) = one ? 1.0 : 0.0;
        up2(0, b) = one ? 0.0 : 1.0;
        actor_loss += alpha * logp[b] - std::min(q1(0, b), q2(0, b));
    }
    losses.actor = actor_loss / B;
    MatrixXd qgrad1, qgrad2;
    nn::backward_batch(m.critic1, q1_trace, up1, &qgrad1); // param grads unused
    nn::backward_batch(m.critic2, q2_trace, up2, &qgrad2);
    const MatrixXd dq_dt = qgrad1.bottomRows(n) + qgrad2.bottomRows(n); // per-sample selector

    MatrixXd actor_up(2 * n, B);
    for (int b = 0; b < B; ++b) {
        for (int i = 0; i < n; ++i) {
            const double t = T(i, b);
            const double one_m_t2 = 1.0 - t * t;
            const double dlogp_du = 2.0 * t * one_m_t2 / (one_m_t2 + kSquashEps);
            const double dt_du = one_m_t2;
            // dL/du, with L = mean(alpha logp - Qmin) and critics fed t directly.
            const double dl_du = (alpha * dlogp_du - dq_dt(i, b) * dt_du) / B;
            actor_up(i, b) = dl_du; // mean head
            const double dlogstd = dl_du * Sig(i, b) * Eps(i, b) - alpha / B;
            actor_up(n + i, b) = dlogstd * squash_log_std_deriv(m.cfg, RawLS(i, b));
        }
    }
    if (!actor_up.allFinite()) {
        std::cerr << "[sac] warning: non-finite actor gradient, skipping actor step\n";
    } else {
        nn::GradSet ag = nn::backward_batch(m.actor, actor_trace, actor_up);
        nn::adam_step(m.actor, ag, m.actor_opt);
    }

    // --- temperature -------------------------------------------------------------
    const double target_entropy = m.cfg.target_entropy_per_dim * n;
    const double alpha_grad = -m.alpha() * (logp.mean() + target_entropy);
    losses.alpha = -m.alpha() * (logp.mean() + target_entropy);
    m.alpha_steps += 1;
    m.alpha_m = 0.9 * m.alpha_m + 0.1 * alpha_grad;
    m.alpha_v = 0.999 * m.alpha_v + 0.001 * alpha_grad * alpha_grad;
    const double mh = m.alpha_m / (1.0 - std::pow(0.9, static_cast<double>(m.alpha_steps)));
    const double vh = m.alpha_v / (1.0 - std::pow(0.999, static_cast<double>(m.alpha_steps)));
    m.log_alpha -= m.cfg.alpha_lr * mh / (std::sqrt(vh) + 1e-8);
    m.log_alpha = std::clamp(m.log_alpha, std::log(1e-4), std::log(10.0));

    nn::polyak_update(m.target1, m.critic1, m.cfg.polyak_rate);
    nn::polyak_update(m.target2, m.critic2, m.cfg.polyak_rate);
    return losses;
}

void PolicyArtifact::save(const std::string& path) const {
    nn::save_model(actor, path);
    json j;
    j["action_scale"] = action_scale;
    j["action_dim"] = action_dim;
    j["repr_mode"] = repr_mode;
    j["reward_mode"] = reward_mode;
    j["codec"]["feature_dim"] = codec.feature_dim;
    j["codec"]["n_joints"] = codec.n_joints;
    j["codec"]["include_torque"] = codec.include_torque;
    j["codec"]["proprio_mean"] = std::vector<double>(codec.proprio.mean.data(),
                                                     codec.proprio.mean.data() + codec.proprio.mean.size());
    j["codec"]["proprio_m2"] =
        std::vector<double>(codec.proprio.m2.data(), codec.proprio.m2.data() + codec.proprio.m2.size());
    j["codec"]["proprio_count"] = codec.proprio.count;
    std::ofstream os(path + ".json", std::ios::trunc);
    if (!os) throw std::runtime_error("policy save: cannot open sidecar");
    os << j.dump(2) << "\n";
}

PolicyArtifact PolicyArtifact::load(const std::string& path) {
    PolicyArtifact p;
    p.actor = nn::load_model(path);
    std::ifstream is(path + ".json");
    if (!is) throw std::runtime_error("policy load: missing sidecar " + path + ".json");
    json j;
    is >> j;
    p.action_scale = j.at("action_scale").get<double>();
    p.action_dim = j.at("action_dim").get<int>();
    p.repr_mode = j.at("repr_mode").get<std::string>();
    p.reward_mode = j.value("reward_mode", "");
    p.codec.feature_dim = j.at("codec").at("feature_dim").get<int>();
    p.codec.n_joints = j.at("codec").at("n_joints").get<int>();
    p.codec.include_torque = j.at("codec").at("include_torque").get<bool>();
    const auto mean = j.at("codec").at("proprio_mean").get<std::vector<double>>();
    const auto m2 = j.at("codec").at("proprio_m2").get<std::vector<double>>();
    p.codec.proprio.mean = Eigen::Map<const VectorXd>(mean.data(), static_cast<int>(mean.size()));
    p.codec.proprio.m2 = Eigen::Map<const VectorXd>(m2.data(), static_cast<int>(m2.size()));
    p.codec.proprio.count = j.at("codec").at("proprio_count").get<int64_t>();
    return p;
}

} // namespace cfrl::sac
