#pragma once

// Strictly translation-equivariant networks: circular filters, constant
// biases and pointwise activations composed layer by layer.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "eqr/tensor.hpp"

namespace eqr {

// One nonzero entry of a filter's base row, addressed by flat offset.
struct Tap {
    std::size_t offset = 0;
    double weight = 0.0;

    friend bool operator==(const Tap&, const Tap&) = default;
};

// An N x N circular filter represented by its base row W_0. Row delta(M) of the
// implied matrix is T^M(W_0); applying the filter is circular cross-correlation:
//   out[M] = sum_I W_0[I] * x[M + I].
class CircularFilter {
public:
    CircularFilter() = default;

    static CircularFilter dense(CircularTensor base);
    // Offsets must be distinct and below shape.size().
    static CircularFilter sparse(Shape shape, std::vector<Tap> taps);
    static CircularFilter zero(Shape shape) { return sparse(std::move(shape), {}); }
    // Single tap at offset zero: a pointwise scale.
    static CircularFilter pointwise(Shape shape, double weight) { return sparse(std::move(shape), {{0, weight}}); }

    const Shape& shape() const noexcept { return shape_; }
    bool is_sparse() const noexcept { return sparse_; }
    // Dense filters list every offset in order.
    std::span<const Tap> taps() const noexcept { return taps_; }
    CircularTensor base() const;

    friend bool operator==(const CircularFilter&, const CircularFilter&) = default;

private:
    Shape shape_;
    bool sparse_ = true;
    std::vector<Tap> taps_;
};

enum class Activation : std::uint8_t { identity = 0, relu = 1 };

// F_l(X) = sigma(W[l] . X + C[l]) with circular W^{k,r}[l] and one constant
// bias per output channel.
class EquivariantLayer {
public:
    // filters are indexed (k, r) -> filters[k * in_channels + r].
    EquivariantLayer(Shape shape, std::size_t in_channels, std::size_t out_channels,
                     std::vector<CircularFilter> filters, std::vector<double> biases, Activation activation);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t in_channels() const noexcept { return in_channels_; }
    std::size_t out_channels() const noexcept { return out_channels_; }
    Activation activation() const noexcept { return activation_; }
    const CircularFilter& filter(std::size_t k, std::size_t r) const { return filters_.at(k * in_channels_ + r); }
    double bias(std::size_t k) const { return biases_.at(k); }
    std::span<const CircularFilter> filters() const noexcept { return filters_; }
    std::span<const double> biases() const noexcept { return biases_; }

    friend bool operator==(const EquivariantLayer&, const EquivariantLayer&) = default;

private:
    Shape shape_;
    std::size_t in_channels_;
    std::size_t out_channels_;
    std::vector<CircularFilter> filters_;
    std::vector<double> biases_;
    Activation activation_;
};

class EquivariantNetwork {
public:
    EquivariantNetwork() = default;
    EquivariantNetwork(Shape shape, std::vector<EquivariantLayer> layers);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t depth() const noexcept { return layers_.size(); }
    std::span<const EquivariantLayer> layers() const noexcept { return layers_; }
    const EquivariantLayer& layer(std::size_t l) const { return layers_.at(l); }

    // 0 for the empty network, which accepts any channel count.
    std::size_t in_channels() const noexcept { return layers_.empty() ? 0 : layers_.front().in_channels(); }
    std::size_t out_channels() const noexcept { return layers_.empty() ? 0 : layers_.back().out_channels(); }
    // Largest channel count over all layer outputs.
    std::size_t max_channels() const noexcept;

    // Appends other's layers after this network's.
    EquivariantNetwork then(const EquivariantNetwork& other) const;

    friend bool operator==(const EquivariantNetwork&, const EquivariantNetwork&) = default;

private:
    Shape shape_;
    std::vector<EquivariantLayer> layers_;
};

CircularTensor apply_filter(const CircularFilter& f, const CircularTensor& x);
// out += f (*) x over flat spans of one spatial shape.
void correlate_accumulate(const CircularFilter& f, std::span<const double> x, std::span<double> out);

// W[l] . X + C[l] before the activation.
ChannelTensor pre_activation(const EquivariantLayer& layer, const ChannelTensor& x);
ChannelTensor apply_layer(const EquivariantLayer& layer, const ChannelTensor& x);
ChannelTensor forward(const EquivariantNetwork& net, const ChannelTensor& x);

struct EquivarianceReport {
    double max_deviation = 0.0;
    bool within_tolerance = true;
    TranslationVector worst;  // translation achieving max_deviation
};

using TensorMap = std::function<ChannelTensor(const ChannelTensor&)>;

// max |f(T^M X) - T^M f(X)| for one translation.
EquivarianceReport check_equivariance(const TensorMap& f, const ChannelTensor& x, const TranslationVector& m,
                                      double tol);
EquivarianceReport check_equivariance(const EquivariantNetwork& net, const ChannelTensor& x,
                                      const TranslationVector& m, double tol);
// Same, maximized over every translation of the grid.
EquivarianceReport check_equivariance_exhaustive(const TensorMap& f, const ChannelTensor& x, double tol);
EquivarianceReport check_equivariance_exhaustive(const EquivariantNetwork& net, const ChannelTensor& x, double tol);

// Index of the largest entry; ties go to the smallest index.
std::size_t argmax(std::span<const double> values);
// values[0] - max_{i>0} values[i]; +inf for a single entry.
double margin_at_zero(std::span<const double> values);

inline constexpr std::size_t kMaxMaterializedSize = 4096;

// Row-major N x N matrix whose row delta(M) is vectorize(T^M(base)).
// Test oracle; throws CapacityError above kMaxMaterializedSize.
std::vector<double> materialize_matrix(const CircularFilter& f);

}  // namespace eqr
