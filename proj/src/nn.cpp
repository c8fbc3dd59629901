#include "cfrl/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfrl::nn {

namespace {

double apply_act(Activation a, double v) {
    switch (a) {
    case Activation::Relu: return v > 0.0 ? v : 0.0;
    case Activation::Tanh: return std::tanh(v);
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-v));
    case Activation::Identity: return v;
    }
    return v;
}

// Derivative expressed through the pre-activation value.
double act_deriv(Activation a, double pre) {
    switch (a) {
    case Activation::Relu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
        const double t = std::tanh(pre);
        return 1.0 - t * t;
    }
    case Activation::Sigmoid: {
        const double s = 1.0 / (1.0 + std::exp(-pre));
        return s * (1.0 - s);
    }
    case Activation::Identity: return 1.0;
    }
    return 1.0;
}

void check_input(const ParamSet& p, const Eigen::Index rows) {
    if (p.layers.empty()) throw std::invalid_argument("nn: empty ParamSet");
    if (rows != p.layers.front().weight.cols())
        throw std::invalid_argument("nn: input size " + std::to_string(rows) + " != layer input " +
                                    std::to_string(p.layers.front().weight.cols()));
}

bool valid_hidden(Activation a) { return a == Activation::Relu || a == Activation::Tanh; }
bool valid_output(Activation a) {
    return a == Activation::Identity || a == Activation::Sigmoid || a == Activation::Tanh;
}

} // namespace

bool ParamSet::shape_matches(const ParamSet& other) const {
    if (layers.size() != other.layers.size()) return false;
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weight.rows() != other.layers[i].weight.rows()) return false;
        if (layers[i].weight.cols() != other.layers[i].weight.cols()) return false;
    }
    return true;
}

bool ParamSet::all_finite() const {
    for (const auto& l : layers)
        if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

ParamSet init_params(const std::vector<int>& layer_sizes,
                     Activation hidden_act,
                     Activation output_act,
                     uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("init_params: need at least input and output sizes");
    for (int s : layer_sizes)
        if (s <= 0) throw std::invalid_argument("init_params: non-positive layer size");
    if (!valid_hidden(hidden_act))
        throw std::invalid_argument("init_params: hidden activation must be Relu or Tanh");
    if (!valid_output(output_act))
        throw std::invalid_argument("init_params: bad output activation");

    Rng rng(seed);
    ParamSet p;
    p.layers.resize(layer_sizes.size() - 1);
    for (size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        Layer& l = p.layers[k];
        const int in = layer_sizes[k], out = layer_sizes[k + 1];
        const double s = std::sqrt(3.0 / static_cast<double>(in));
        l.weight.resize(out, in);
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) l.weight(r, c) = rng.uniform(-s, s);
        l.bias = VectorXd::Zero(out);
        l.act = (k + 2 == layer_sizes.size()) ? output_act : hidden_act;
    }
    return p;
}

ParamSet zeros_like(const ParamSet& p) {
    ParamSet z = p;
    for (auto& l : z.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    return z;
}

VectorXd forward(const ParamSet& p, const VectorXd& x) {
    check_input(p, x.size());
    VectorXd h = x;
    for (const auto& l : p.layers) {
        VectorXd pre = l.weight * h + l.bias;
        h = pre.unaryExpr([&l](double v) { return apply_act(l.act, v); });
    }
    return h;
}

std::vector<VectorXd> forward_all(const ParamSet& p, const VectorXd& x) {
    check_input(p, x.size());
    std::vector<VectorXd> acts;
    acts.reserve(p.layers.size() + 1);
    acts.push_back(x);
    for (const auto& l : p.layers) {
        VectorXd pre = l.weight * acts.back() + l.bias;
        acts.push_back(pre.unaryExpr([&l](double v) { return apply_act(l.act, v); }));
    }
    return acts;
}

GradSet backward(const ParamSet& p, const VectorXd& x, const VectorXd& upstream,
                 VectorXd* input_grad) {
    check_input(p, x.size());
    if (upstream.size() != p.output_dim())
        throw std::invalid_argument("backward: upstream size != output size");

    const size_t n = p.layers.size();
    std::vector<VectorXd> acts(n + 1), pres(n);
    acts[0] = x;
    for (size_t k = 0; k < n; ++k) {
        pres[k] = p.layers[k].weight * acts[k] + p.layers[k].bias;
        const Activation a = p.layers[k].act;
        acts[k + 1] = pres[k].unaryExpr([a](double v) { return apply_act(a, v); });
    }

    GradSet g = zeros_like(p);
    VectorXd delta = upstream;
    for (size_t k = n; k-- > 0;) {
        const Activation a = p.layers[k].act;
        VectorXd dpre =
            delta.array() * pres[k].unaryExpr([a](double v) { return act_deriv(a, v); }).array();
        g.layers[k].weight = dpre * acts[k].transpose();
        g.layers[k].bias = dpre;
        delta = p.layers[k].weight.transpose() * dpre;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

MatrixXd forward_batch(const ParamSet& p, const MatrixXd& x, BatchTrace* trace) {
    check_input(p, x.rows());
    if (trace) {
        trace->activations.assign(1, x);
        trace->pre.clear();
    }
    MatrixXd h = x;
    for (const auto& l : p.layers) {
        MatrixXd pre = (l.weight * h).colwise() + l.bias;
        h = pre.unaryExpr([&l](double v) { return apply_act(l.act, v); });
        if (trace) {
            trace->pre.push_back(std::move(pre));
            trace->activations.push_back(h);
        }
    }
    return h;
}

GradSet backward_batch(const ParamSet& p, const BatchTrace& trace, const MatrixXd& upstream,
                       MatrixXd* input_grad) {
    const size_t n = p.layers.size();
    if (trace.pre.size() != n)
        throw std::invalid_argument("backward_batch: trace does not match ParamSet");
    GradSet g = zeros_like(p);
    MatrixXd delta = upstream;
    for (size_t k = n; k-- > 0;) {
        const Activation a = p.layers[k].act;
        MatrixXd dpre = delta.array() *
                        trace.pre[k].unaryExpr([a](double v) { return act_deriv(a, v); }).array();
        g.layers[k].weight = dpre * trace.activations[k].transpose();
        g.layers[k].bias = dpre.rowwise().sum();
        delta = p.layers[k].weight.transpose() * dpre;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

OptimizerState OptimizerState::create(const ParamSet& tracked, const AdamConfig& cfg) {
    OptimizerState st;
    st.first_moment = zeros_like(tracked);
    st.second_moment = zeros_like(tracked);
    st.step_count = 0;
    st.config = cfg;
    return st;
}

void adam_step(ParamSet& p, const GradSet& g, OptimizerState& st) {
    if (!p.shape_matches(g) || !p.shape_matches(st.first_moment))
        throw std::invalid_argument("adam_step: shape mismatch");
    if (!g.all_finite()) throw std::runtime_error("adam_step: non-finite gradient");

    st.step_count += 1;
    const auto& c = st.config;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(st.step_count));
    for (size_t k = 0; k < p.layers.size(); ++k) {
        auto upd = [&](MatrixXd& param, const MatrixXd& grad, MatrixXd& m, MatrixXd& v) {
            m = c.beta1 * m + (1.0 - c.beta1) * grad;
            v = c.beta2 * v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
            param.array() -=
                c.step_size * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.epsilon);
        };
        upd(p.layers[k].weight, g.layers[k].weight, st.first_moment.layers[k].weight,
            st.second_moment.layers[k].weight);
        MatrixXd bp = p.layers[k].bias, bg = g.layers[k].bias;
        MatrixXd bm = st.first_moment.layers[k].bias, bv = st.second_moment.layers[k].bias;
        upd(bp, bg, bm, bv);
        p.layers[k].bias = bp;
        st.first_moment.layers[k].bias = bm;
        st.second_moment.layers[k].bias = bv;
    }
}

void polyak_update(ParamSet& target, const ParamSet& online, double rate) {
    if (!target.shape_matches(online)) throw std::invalid_argument("polyak_update: shape mismatch");
    for (size_t k = 0; k < target.layers.size(); ++k) {
        target.layers[k].weight = (1.0 - rate) * target.layers[k].weight + rate * online.layers[k].weight;
        target.layers[k].bias = (1.0 - rate) * target.layers[k].bias + rate * online.layers[k].bias;
    }
}

void axpy(GradSet& dst, const GradSet& src, double scale) {
    if (!dst.shape_matches(src)) throw std::invalid_argument("axpy: shape mismatch");
    for (size_t k = 0; k < dst.layers.size(); ++k) {
        dst.layers[k].weight += scale * src.layers[k].weight;
        dst.layers[k].bias += scale * src.layers[k].bias;
    }
}

void scale_grads(GradSet& g, double scale) {
    for (auto& l : g.layers) {
        l.weight *= scale;
        l.bias *= scale;
    }
}

namespace {

constexpr char kModelMagic[8] = {'C', 'F', 'R', 'L', 'M', 'D', 'L', '1'};

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, const double* data, size_t n) {
    std::vector<float> buf(n);
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * 4));
}

void read_f32(std::istream& is, double* data, size_t n) {
    std::vector<float> buf(n);
    is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 4));
    for (size_t i = 0; i < n; ++i) data[i] = static_cast<double>(buf[i]);
}

} // namespace

void save_model(const ParamSet& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_model: cannot open " + path);
    os.write(kModelMagic, 8);
    write_u32(os, static_cast<uint32_t>(p.layers.size()));
    for (const auto& l : p.layers) {
        write_u32(os, static_cast<uint32_t>(l.weight.cols()));
        write_u32(os, static_cast<uint32_t>(l.weight.rows()));
        const unsigned char act = static_cast<unsigned char>(l.act);
        os.write(reinterpret_cast<const char*>(&act), 1);
    }
    for (const auto& l : p.layers) {
        // Row-major on disk; Eigen matrices are column-major in memory.
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr = l.weight;
        write_f32(os, wr.data(), static_cast<size_t>(wr.size()));
        write_f32(os, l.bias.data(), static_cast<size_t>(l.bias.size()));
    }
    if (!os) throw std::runtime_error("save_model: write failed for " + path);
}

ParamSet load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_model: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kModelMagic, 8) != 0)
        throw std::runtime_error("load_model: bad magic in " + path);
    const uint32_t n_layers = read_u32(is);
    if (n_layers == 0 || n_layers > 64) throw std::runtime_error("load_model: bad layer count");
    ParamSet p;
    p.layers.resize(n_layers);
    for (auto& l : p.layers) {
        const uint32_t in = read_u32(is), out = read_u32(is);
        unsigned char act = 0;
        is.read(reinterpret_cast<char*>(&act), 1);
        if (!is || in == 0 || out == 0) throw std::runtime_error("load_model: bad layer header");
        l.weight.resize(out, in);
        l.bias.resize(out);
        l.act = static_cast<Activation>(act);
    }
    for (auto& l : p.layers) {
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> wr(l.weight.rows(),
                                                                                  l.weight.cols());
        read_f32(is, wr.data(), static_cast<size_t>(wr.size()));
        read_f32(is, l.bias.data(), static_cast<size_t>(l.bias.size()));
        l.weight = wr;
    }
    if (!is) throw std::runtime_error("load_model: truncated file " + path);
    return p;
}

} // namespace cfrl::nn
