#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "funad/nearest.hpp"

namespace funad {

/// Which prefix of the network counts as the feature adaptor whose outputs
/// fill the memory bank.
enum class AdaptorBoundary : std::uint32_t {
    FirstHidden = 0,   // layer1 + activation
    SecondHidden = 1,  // layer1 + activation + layer2 + activation
};

/// Fully connected layer; weights are in x out, row-major, so
/// y[o] = bias[o] + sum_i x[i] * weights[i * out + o].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct NetShape {
    std::size_t d_in = 1536;
    std::size_t hidden1 = 1024;
    std::size_t hidden2 = 128;

    friend bool operator==(const NetShape&, const NetShape&) = default;
};

/// Three dense layers. Used both for parameters and for their gradients.
struct LayerStack {
    DenseLayer layer1;
    DenseLayer layer2;
    DenseLayer layer3;

    LayerStack() = default;
    explicit LayerStack(const NetShape& shape);

    NetShape shape() const { return {layer1.in, layer1.out, layer2.out}; }
    std::size_t parameter_count() const;
    /// W1, b1, W2, b2, W3, b3.
    std::array<std::span<double>, 6> blocks();
    std::array<std::span<const double>, 6> blocks() const;
    /// Flat parameter access in block order.
    double& at(std::size_t flat);
    double at(std::size_t flat) const;

    LayerStack& operator+=(const LayerStack& other);
    friend bool operator==(const LayerStack&, const LayerStack&) = default;
};

using ParameterGradients = LayerStack;

struct LocalNetParams {
    LayerStack layers;
    double leaky_slope = 0.2;
    AdaptorBoundary adaptor = AdaptorBoundary::FirstHidden;

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
    static LocalNetParams initialize(const NetShape& shape, std::uint64_t seed);
    static LocalNetParams zeros(const NetShape& shape);

    std::size_t d_in() const { return layers.layer1.in; }
    std::size_t adaptor_dim() const;
    void validate() const;

    friend bool operator==(const LocalNetParams&, const LocalNetParams&) = default;
};

/// Output of the feature adaptor for one patch.
struct AdaptedFeature {
    std::vector<double> values;
};

double leaky_relu(double z, double slope);
double sigmoid(double z);

AdaptedFeature forward_adaptor(const LocalNetParams& params, std::span<const double> feature);
AdaptedFeature forward_adaptor(const LocalNetParams& params, std::span<const float> feature);
double forward_score(const LocalNetParams& params, std::span<const double> feature);
double forward_score(const LocalNetParams& params, std::span<const float> feature);

/// Every intermediate of a batch forward pass.
struct BatchActivations {
    RowMatrix z1, a1, z2, a2;
    std::vector<double> z3;
    std::vector<double> score;

    const RowMatrix& adapted(AdaptorBoundary b) const { return b == AdaptorBoundary::FirstHidden ? a1 : a2; }
};

BatchActivations forward_batch(const LocalNetParams& params, const RowMatrix& inputs);
/// Scores only; rows may come straight from a float tensor.
std::vector<double> score_rows(const LocalNetParams& params, std::span<const float> rows, std::size_t count);
RowMatrix adapt_rows(const LocalNetParams& params, std::span<const float> rows, std::size_t count);

/// Gradient of sum_n L_n with respect to the parameters, given per-sample
/// dL/dscore and optionally dL/d(adapted feature).
ParameterGradients backward(const LocalNetParams& params, const RowMatrix& inputs,
                            std::span<const double> upstream_score,
                            const RowMatrix* upstream_adapted = nullptr);

struct RmsPropConfig {
    double lr = 2e-5;
    double momentum = 0.2;
    double alpha = 0.99;    // square-average decay
    double epsilon = 1e-8;  // added inside the square root
};

struct RmsPropState {
    RmsPropConfig config;
    LayerStack square_avg;
    LayerStack momentum_buffer;

    static RmsPropState for_params(const LocalNetParams& params, const RmsPropConfig& config);
    friend bool operator==(const RmsPropState&, const RmsPropState&) = default;
};

/// v <- alpha v + (1 - alpha) g^2;  b <- momentum b + g / sqrt(v + eps);  p <- p - lr b.
void rmsprop_step(RmsPropState& state, LocalNetParams& params, const ParameterGradients& grads);

/// FUNW checkpoint. Weights are stored as float32, so a loaded network
/// equals the saved one rounded to single precision.
void save_checkpoint(const std::filesystem::path& path, const LocalNetParams& params,
                     const RmsPropState* optimizer = nullptr);
struct Checkpoint {
    LocalNetParams params;
    std::optional<RmsPropState> optimizer;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace funad
