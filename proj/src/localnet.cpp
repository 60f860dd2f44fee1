#include "funad/localnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "funad/error.hpp"
#include "funad/parallel.hpp"
#include "funad/rng.hpp"

namespace funad {

namespace {

// Partial gradients are reduced over this many fixed chunks in order.
constexpr std::size_t kGradientChunks = 8;

template <class T>
void dense_forward(const DenseLayer& layer, std::span<const T> x, std::span<double> z) {
    std::copy(layer.bias.begin(), layer.bias.end(), z.begin());
    const double* w = layer.weights.data();
    for (std::size_t i = 0; i < layer.in; ++i) {
        const double xi = static_cast<double>(x[i]);
        const double* wr = w + i * layer.out;
        for (std::size_t o = 0; o < layer.out; ++o) z[o] += xi * wr[o];
    }
}

void activate(std::span<const double> z, std::span<double> a, double slope) {
    for (std::size_t k = 0; k < z.size(); ++k) a[k] = leaky_relu(z[k], slope);
}

// Per-sample scratch for a full forward pass.
struct Trace {
    std::vector<double> z1, a1, z2, a2;
    double z3 = 0.0;
    double score = 0.0;

    explicit Trace(const NetShape& s) : z1(s.hidden1), a1(s.hidden1), z2(s.hidden2), a2(s.hidden2) {}
};

template <class T>
void trace_forward(const LocalNetParams& p, std::span<const T> x, Trace& t) {
    const auto& L = p.layers;
    dense_forward<T>(L.layer1, x, t.z1);
    activate(t.z1, t.a1, p.leaky_slope);
    dense_forward<double>(L.layer2, t.a1, t.z2);
    activate(t.z2, t.a2, p.leaky_slope);
    double z3 = L.layer3.bias[0];
    for (std::size_t k = 0; k < L.layer3.in; ++k) z3 += t.a2[k] * L.layer3.weights[k];
    t.z3 = z3;
    t.score = sigmoid(z3);
}

template <class T>
void check_input(const LocalNetParams& p, std::span<const T> f) {
    if (f.size() != p.d_in()) {
        throw ArgumentError("feature length " + std::to_string(f.size()) + " does not match network input " +
                            std::to_string(p.d_in()));
    }
}

template <class T>
AdaptedFeature adaptor_impl(const LocalNetParams& p, std::span<const T> f) {
    check_input(p, f);
    Trace t(p.layers.shape());
    if (p.adaptor == AdaptorBoundary::FirstHidden) {
        dense_forward<T>(p.layers.layer1, f, t.z1);
        activate(t.z1, t.a1, p.leaky_slope);
        return {std::move(t.a1)};
    }
    trace_forward(p, f, t);
    return {std::move(t.a2)};
}

template <class T>
double score_impl(const LocalNetParams& p, std::span<const T> f) {
    check_input(p, f);
    Trace t(p.layers.shape());
    trace_forward(p, f, t);
    return t.score;
}

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}
void put_u64(std::vector<char>& out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}
void put_f32(std::vector<char>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
void put_f64(std::vector<char>& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

struct Reader {
    const std::vector<char>& bytes;
    std::size_t pos = 0;
    std::string name;

    void need(std::size_t n) {
        if (pos + n > bytes.size()) throw TruncationError(name + ": checkpoint truncated");
    }
    std::uint64_t uint(int width) {
        need(width);
        std::uint64_t v = 0;
        for (int b = 0; b < width; ++b) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + b])) << (8 * b);
        }
        pos += width;
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    double f32() {
        const float f = std::bit_cast<float>(u32());
        if (!std::isfinite(f)) throw DataError(name + ": non-finite value in checkpoint");
        return f;
    }
    double f64() { return std::bit_cast<double>(uint(8)); }
};

void write_stack(std::vector<char>& out, const LayerStack& s) {
    for (auto block : s.blocks()) {
        for (double v : block) put_f32(out, v);
    }
}

void read_stack(Reader& r, LayerStack& s) {
    for (auto block : s.blocks()) {
        for (double& v : block) v = r.f32();
    }
}

}  // namespace

double leaky_relu(double z, double slope) { return z > 0.0 ? z : slope * z; }

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

LayerStack::LayerStack(const NetShape& s)
    : layer1(s.d_in, s.hidden1), layer2(s.hidden1, s.hidden2), layer3(s.hidden2, 1) {}

std::size_t LayerStack::parameter_count() const {
    std::size_t n = 0;
    for (auto b : blocks()) n += b.size();
    return n;
}

std::array<std::span<double>, 6> LayerStack::blocks() {
    return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

std::array<std::span<const double>, 6> LayerStack::blocks() const {
    return {layer1.weights, layer1.bias, layer2.weights, layer2.bias, layer3.weights, layer3.bias};
}

double& LayerStack::at(std::size_t flat) {
    for (auto b : blocks()) {
        if (flat < b.size()) return b[flat];
        flat -= b.size();
    }
    throw ArgumentError("LayerStack::at: index out of range");
}

double LayerStack::at(std::size_t flat) const { return const_cast<LayerStack*>(this)->at(flat); }

LayerStack& LayerStack::operator+=(const LayerStack& other) {
    if (shape() != other.shape()) throw ArgumentError("LayerStack shapes differ");
    auto dst = blocks();
    auto src = other.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b) {
        for (std::size_t k = 0; k < dst[b].size(); ++k) dst[b][k] += src[b][k];
    }
    return *this;
}

LocalNetParams LocalNetParams::zeros(const NetShape& shape) {
    if (shape.d_in == 0 || shape.hidden1 == 0 || shape.hidden2 == 0) {
        throw ArgumentError("network widths must be >= 1");
    }
    LocalNetParams p;
    p.layers = LayerStack(shape);
    return p;
}

LocalNetParams LocalNetParams::initialize(const NetShape& shape, std::uint64_t seed) {
    LocalNetParams p = zeros(shape);
    Rng rng(seed);
    for (DenseLayer* layer : {&p.layers.layer1, &p.layers.layer2, &p.layers.layer3}) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer->in));
        for (double& w : layer->weights) w = bound * (2.0 * rng.uniform() - 1.0);
    }
    return p;
}

std::size_t LocalNetParams::adaptor_dim() const {
    return adaptor == AdaptorBoundary::FirstHidden ? layers.layer1.out : layers.layer2.out;
}

void LocalNetParams::validate() const {
    const auto& L = layers;
    if (L.layer1.in == 0 || L.layer2.in != L.layer1.out || L.layer3.in != L.layer2.out || L.layer3.out != 1) {
        throw ArgumentError("Local-Net layer dims do not chain");
    }
    for (const DenseLayer* l : {&L.layer1, &L.layer2, &L.layer3}) {
        if (l->weights.size() != l->in * l->out || l->bias.size() != l->out) {
            throw ArgumentError("Local-Net weight buffer has the wrong size");
        }
    }
    for (auto b : L.blocks()) {
        for (double v : b) {
            if (!std::isfinite(v)) throw DataError("Local-Net parameter is not finite");
        }
    }
}

AdaptedFeature forward_adaptor(const LocalNetParams& p, std::span<const double> f) { return adaptor_impl(p, f); }
AdaptedFeature forward_adaptor(const LocalNetParams& p, std::span<const float> f) { return adaptor_impl(p, f); }
double forward_score(const LocalNetParams& p, std::span<const double> f) { return score_impl(p, f); }
double forward_score(const LocalNetParams& p, std::span<const float> f) { return score_impl(p, f); }

BatchActivations forward_batch(const LocalNetParams& params, const RowMatrix& inputs) {
    if (inputs.cols != params.d_in()) throw ArgumentError("forward_batch: input width mismatch");
    const NetShape s = params.layers.shape();
    const std::size_t n = inputs.rows;
    BatchActivations out{RowMatrix(n, s.hidden1), RowMatrix(n, s.hidden1), RowMatrix(n, s.hidden2),
                         RowMatrix(n, s.hidden2), std::vector<double>(n), std::vector<double>(n)};
    parallel_for(n, [&](std::size_t b, std::size_t e) {
        Trace t(s);
        for (std::size_t i = b; i < e; ++i) {
            trace_forward<double>(params, inputs.row(i), t);
            std::copy(t.z1.begin(), t.z1.end(), out.z1.row(i).begin());
            std::copy(t.a1.begin(), t.a1.end(), out.a1.row(i).begin());
            std::copy(t.z2.begin(), t.z2.end(), out.z2.row(i).begin());
            std::copy(t.a2.begin(), t.a2.end(), out.a2.row(i).begin());
            out.z3[i] = t.z3;
            out.score[i] = t.score;
        }
    });
    return out;
}

std::vector<double> score_rows(const LocalNetParams& params, std::span<const float> rows, std::size_t count) {
    const std::size_t d = params.d_in();
    if (rows.size() != count * d) throw ArgumentError("score_rows: buffer size mismatch");
    std::vector<double> scores(count);
    parallel_for(count, [&](std::size_t b, std::size_t e) {
        Trace t(params.layers.shape());
        for (std::size_t i = b; i < e; ++i) {
            trace_forward<float>(params, rows.subspan(i * d, d), t);
            scores[i] = t.score;
        }
    });
    return scores;
}

RowMatrix adapt_rows(const LocalNetParams& params, std::span<const float> rows, std::size_t count) {
    const std::size_t d = params.d_in();
    if (rows.size() != count * d) throw ArgumentError("adapt_rows: buffer size mismatch");
    RowMatrix out(count, params.adaptor_dim());
    parallel_for(count, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            auto a = adaptor_impl<float>(params, rows.subspan(i * d, d));
            std::copy(a.values.begin(), a.values.end(), out.row(i).begin());
        }
    });
    return out;
}

ParameterGradients backward(const LocalNetParams& params, const RowMatrix& inputs,
                            std::span<const double> upstream_score, const RowMatrix* upstream_adapted) {
    const NetShape s = params.layers.shape();
    const std::size_t n = inputs.rows;
    if (inputs.cols != s.d_in) throw ArgumentError("backward: input width mismatch");
    if (upstream_score.size() != n) throw ArgumentError("backward: upstream score count mismatch");
    if (upstream_adapted &&
        (upstream_adapted->rows != n || upstream_adapted->cols != params.adaptor_dim())) {
        throw ArgumentError("backward: upstream adapted-feature shape mismatch");
    }
    const double slope = params.leaky_slope;
    const auto& L = params.layers;

    const std::size_t chunks = std::max<std::size_t>(1, std::min(kGradientChunks, n));
    std::vector<ParameterGradients> partial(chunks, ParameterGradients(s));

    parallel_chunks(n, chunks, [&](std::size_t c, std::size_t begin, std::size_t end) {
        auto& g = partial[c];
        Trace t(s);
        std::vector<double> d2(s.hidden2), d1(s.hidden1);
        for (std::size_t i = begin; i < end; ++i) {
            const double gs = upstream_score[i];
            const auto ga = upstream_adapted ? upstream_adapted->row(i) : std::span<const double>{};
            const bool adapted_zero = ga.empty() || std::all_of(ga.begin(), ga.end(), [](double v) { return v == 0.0; });
            if (gs == 0.0 && adapted_zero) continue;
            const auto x = inputs.row(i);
            trace_forward<double>(params, x, t);

            const double dz3 = gs * t.score * (1.0 - t.score);
            for (std::size_t k = 0; k < s.hidden2; ++k) g.layer3.weights[k] += t.a2[k] * dz3;
            g.layer3.bias[0] += dz3;

            for (std::size_t k = 0; k < s.hidden2; ++k) d2[k] = L.layer3.weights[k] * dz3;
            if (!adapted_zero && params.adaptor == AdaptorBoundary::SecondHidden) {
                for (std::size_t k = 0; k < s.hidden2; ++k) d2[k] += ga[k];
            }
            for (std::size_t k = 0; k < s.hidden2; ++k) d2[k] *= t.z2[k] > 0.0 ? 1.0 : slope;

            for (std::size_t j = 0; j < s.hidden1; ++j) {
                double* gw = g.layer2.weights.data() + j * s.hidden2;
                const double* w = L.layer2.weights.data() + j * s.hidden2;
                const double aj = t.a1[j];
                double acc = 0.0;
                for (std::size_t k = 0; k < s.hidden2; ++k) {
                    gw[k] += aj * d2[k];
                    acc += w[k] * d2[k];
                }
                d1[j] = acc;
            }
            for (std::size_t k = 0; k < s.hidden2; ++k) g.layer2.bias[k] += d2[k];

            if (!adapted_zero && params.adaptor == AdaptorBoundary::FirstHidden) {
                for (std::size_t j = 0; j < s.hidden1; ++j) d1[j] += ga[j];
            }
            for (std::size_t j = 0; j < s.hidden1; ++j) d1[j] *= t.z1[j] > 0.0 ? 1.0 : slope;

            for (std::size_t q = 0; q < s.d_in; ++q) {
                double* gw = g.layer1.weights.data() + q * s.hidden1;
                const double xq = x[q];
                for (std::size_t j = 0; j < s.hidden1; ++j) gw[j] += xq * d1[j];
            }
            for (std::size_t j = 0; j < s.hidden1; ++j) g.layer1.bias[j] += d1[j];
        }
    });

    ParameterGradients total = std::move(partial[0]);
    for (std::size_t c = 1; c < chunks; ++c) total += partial[c];
    return total;
}

RmsPropState RmsPropState::for_params(const LocalNetParams& params, const RmsPropConfig& config) {
    if (!(config.lr > 0.0)) throw ArgumentError("RMSProp learning rate must be positive");
    if (!(config.alpha >= 0.0 && config.alpha < 1.0)) throw ArgumentError("RMSProp alpha must lie in [0, 1)");
    if (!(config.epsilon > 0.0)) throw ArgumentError("RMSProp epsilon must be positive");
    if (!(config.momentum >= 0.0)) throw ArgumentError("RMSProp momentum must be non-negative");
    const NetShape s = params.layers.shape();
    return RmsPropState{config, LayerStack(s), LayerStack(s)};
}

void rmsprop_step(RmsPropState& state, LocalNetParams& params, const ParameterGradients& grads) {
    const NetShape s = params.layers.shape();
    if (grads.shape() != s || state.square_avg.shape() != s || state.momentum_buffer.shape() != s) {
        throw ArgumentError("rmsprop_step: shape mismatch");
    }
    const auto& c = state.config;
    auto p = params.layers.blocks();
    auto g = grads.blocks();
    auto v = state.square_avg.blocks();
    auto m = state.momentum_buffer.blocks();
    for (std::size_t b = 0; b < p.size(); ++b) {
        for (std::size_t k = 0; k < p[b].size(); ++k) {
            const double gk = g[b][k];
            v[b][k] = c.alpha * v[b][k] + (1.0 - c.alpha) * gk * gk;
            m[b][k] = c.momentum * m[b][k] + gk / std::sqrt(v[b][k] + c.epsilon);
            p[b][k] -= c.lr * m[b][k];
        }
    }
}

void save_checkpoint(const std::filesystem::path& path, const LocalNetParams& params,
                     const RmsPropState* optimizer) {
    params.validate();
    const NetShape s = params.layers.shape();
    std::vector<char> out{'F', 'U', 'N', 'W'};
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(s.d_in));
    put_u32(out, static_cast<std::uint32_t>(s.hidden1));
    put_u32(out, static_cast<std::uint32_t>(s.hidden2));
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(params.adaptor));
    put_f64(out, params.leaky_slope);
    put_u32(out, optimizer ? 1u : 0u);
    write_stack(out, params.layers);
    if (optimizer) {
        put_f64(out, optimizer->config.lr);
        put_f64(out, optimizer->config.momentum);
        put_f64(out, optimizer->config.alpha);
        put_f64(out, optimizer->config.epsilon);
        write_stack(out, optimizer->square_avg);
        write_stack(out, optimizer->momentum_buffer);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "FUNW", 4) != 0) {
        throw FormatError(path.string() + ": expected magic \"FUNW\"");
    }
    Reader r{bytes, 4, path.string()};
    if (r.u32() != 1) throw FormatError(path.string() + ": unsupported checkpoint version");
    NetShape s;
    s.d_in = r.u32();
    s.hidden1 = r.u32();
    s.hidden2 = r.u32();
    if (r.u32() != 1) throw FormatError(path.string() + ": output width must be 1");
    const std::uint32_t boundary = r.u32();
    if (boundary > 1) throw FormatError(path.string() + ": unknown adaptor boundary");
    Checkpoint ck;
    ck.params = LocalNetParams::zeros(s);
    ck.params.adaptor = static_cast<AdaptorBoundary>(boundary);
    ck.params.leaky_slope = r.f64();
    const std::uint32_t has_optimizer = r.u32();
    read_stack(r, ck.params.layers);
    if (has_optimizer) {
        RmsPropConfig c;
        c.lr = r.f64();
        c.momentum = r.f64();
        c.alpha = r.f64();
        c.epsilon = r.f64();
        RmsPropState st{c, LayerStack(s), LayerStack(s)};
        read_stack(r, st.square_avg);
        read_stack(r, st.momentum_buffer);
        ck.optimizer = std::move(st);
    }
    if (r.pos != bytes.size()) throw TruncationError(path.string() + ": trailing bytes after checkpoint");
    return ck;
}

}  // namespace funad
