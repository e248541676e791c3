#include "eqr/equi_net.hpp"

#include <algorithm>
#include <limits>
#include <unordered_set>

#include "eqr/error.hpp"

namespace eqr {

namespace {

// Gather table for x[M + I]: translation by -I.
std::vector<std::size_t> correlation_table(const Shape& shape, std::size_t offset) {
    return translation_table(shape, -TranslationVector{delta_inverse(offset, shape)});
}

}  // namespace

CircularFilter CircularFilter::dense(CircularTensor base) {
    CircularFilter f;
    f.shape_ = base.shape();
    f.sparse_ = false;
    f.taps_.reserve(base.size());
    for (std::size_t k = 0; k < base.size(); ++k) f.taps_.push_back({k, base[k]});
    return f;
}

CircularFilter CircularFilter::sparse(Shape shape, std::vector<Tap> taps) {
    std::unordered_set<std::size_t> seen;
    for (const auto& t : taps) {
        if (t.offset >= shape.size()) {
            throw RangeError("filter tap offset " + std::to_string(t.offset) + " outside shape " + shape.to_string());
        }
        if (!seen.insert(t.offset).second) {
            throw InputError("duplicate filter tap offset " + std::to_string(t.offset));
        }
    }
    CircularFilter f;
    f.shape_ = std::move(shape);
    f.sparse_ = true;
    f.taps_ = std::move(taps);
    return f;
}

CircularTensor CircularFilter::base() const {
    CircularTensor out(shape_);
    for (const auto& t : taps_) out[t.offset] = t.weight;
    return out;
}

EquivariantLayer::EquivariantLayer(Shape shape, std::size_t in_channels, std::size_t out_channels,
                                   std::vector<CircularFilter> filters, std::vector<double> biases,
                                   Activation activation)
    : shape_(std::move(shape)),
      in_channels_(in_channels),
      out_channels_(out_channels),
      filters_(std::move(filters)),
      biases_(std::move(biases)),
      activation_(activation) {
    if (in_channels_ == 0 || out_channels_ == 0) throw ShapeError("layer channel counts must be positive");
    if (filters_.size() != in_channels_ * out_channels_) {
        throw ShapeError("layer expects " + std::to_string(in_channels_ * out_channels_) + " filters, got " +
                         std::to_string(filters_.size()));
    }
    if (biases_.size() != out_channels_) throw ShapeError("layer expects one bias per output channel");
    for (const auto& f : filters_) {
        if (f.shape() != shape_) {
            throw ShapeError("filter shape " + f.shape().to_string() + " differs from layer shape " +
                             shape_.to_string());
        }
    }
}

EquivariantNetwork::EquivariantNetwork(Shape shape, std::vector<EquivariantLayer> layers)
    : shape_(std::move(shape)), layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].shape() != shape_) throw ShapeError("layer " + std::to_string(l) + " has a different shape");
        if (l > 0 && layers_[l].in_channels() != layers_[l - 1].out_channels()) {
            throw ShapeError("layer " + std::to_string(l) + " expects " + std::to_string(layers_[l].in_channels()) +
                             " channels but layer " + std::to_string(l - 1) + " emits " +
                             std::to_string(layers_[l - 1].out_channels()));
        }
    }
}

std::size_t EquivariantNetwork::max_channels() const noexcept {
    std::size_t widest = 0;
    for (const auto& l : layers_) widest = std::max(widest, l.out_channels());
    return widest;
}

EquivariantNetwork EquivariantNetwork::then(const EquivariantNetwork& other) const {
    if (other.shape_ != shape_) throw ShapeError("cannot stack networks over different shapes");
    std::vector<EquivariantLayer> layers = layers_;
    layers.insert(layers.end(), other.layers_.begin(), other.layers_.end());
    return EquivariantNetwork(shape_, std::move(layers));
}

void correlate_accumulate(const CircularFilter& f, std::span<const double> x, std::span<double> out) {
    const std::size_t n = f.shape().size();
    if (x.size() != n || out.size() != n) throw ShapeError("filter applied to a tensor of a different size");
    for (const auto& tap : f.taps()) {
        if (tap.weight == 0.0) continue;
        const auto table = correlation_table(f.shape(), tap.offset);
        for (std::size_t m = 0; m < n; ++m) out[m] += tap.weight * x[table[m]];
    }
}

CircularTensor apply_filter(const CircularFilter& f, const CircularTensor& x) {
    if (f.shape() != x.shape()) throw ShapeError("filter shape " + f.shape().to_string() + " vs input " +
                                                 x.shape().to_string());
    CircularTensor out(x.shape());
    correlate_accumulate(f, x.values(), out.values());
    return out;
}

ChannelTensor pre_activation(const EquivariantLayer& layer, const ChannelTensor& x) {
    if (x.shape() != layer.shape()) throw ShapeError("input shape " + x.shape().to_string() + " vs layer " +
                                                     layer.shape().to_string());
    if (x.channels() != layer.in_channels()) {
        throw ShapeError("layer expects " + std::to_string(layer.in_channels()) + " channels, got " +
                         std::to_string(x.channels()));
    }
    ChannelTensor out(layer.shape(), layer.out_channels());
    for (std::size_t k = 0; k < layer.out_channels(); ++k) {
        auto dst = out.channel(k);
        for (std::size_t r = 0; r < layer.in_channels(); ++r) correlate_accumulate(layer.filter(k, r), x.channel(r), dst);
        const double c = layer.bias(k);
        for (auto& v : dst) v += c;
    }
    return out;
}

ChannelTensor apply_layer(const EquivariantLayer& layer, const ChannelTensor& x) {
    auto out = pre_activation(layer, x);
    if (layer.activation() == Activation::relu) {
        for (auto& v : out.values()) v = std::max(v, 0.0);
    }
    return out;
}

ChannelTensor forward(const EquivariantNetwork& net, const ChannelTensor& x) {
    if (net.depth() > 0 && x.shape() != net.shape()) {
        throw ShapeError("input shape " + x.shape().to_string() + " vs network " + net.shape().to_string());
    }
    ChannelTensor h = x;
    for (const auto& layer : net.layers()) h = apply_layer(layer, h);
    return h;
}

EquivarianceReport check_equivariance(const TensorMap& f, const ChannelTensor& x, const TranslationVector& m,
                                      double tol) {
    const auto lhs = f(translate(x, m));
    const auto rhs = translate(f(x), m);
    EquivarianceReport report;
    report.max_deviation = max_abs_difference(lhs, rhs);
    report.within_tolerance = report.max_deviation <= tol;
    report.worst = m;
    return report;
}

EquivarianceReport check_equivariance(const EquivariantNetwork& net, const ChannelTensor& x,
                                      const TranslationVector& m, double tol) {
    return check_equivariance([&net](const ChannelTensor& in) { return forward(net, in); }, x, m, tol);
}

EquivarianceReport check_equivariance_exhaustive(const TensorMap& f, const ChannelTensor& x, double tol) {
    const auto fx = f(x);
    EquivarianceReport report;
    report.worst = TranslationVector{Index(x.shape().arity(), 0)};
    for (const auto& m : all_translations(x.shape())) {
        const double dev = max_abs_difference(f(translate(x, m)), translate(fx, m));
        if (!(dev <= report.max_deviation)) {
            report.max_deviation = dev;
            report.worst = m;
        }
    }
    report.within_tolerance = report.max_deviation <= tol;
    return report;
}

EquivarianceReport check_equivariance_exhaustive(const EquivariantNetwork& net, const ChannelTensor& x, double tol) {
    return check_equivariance_exhaustive([&net](const ChannelTensor& in) { return forward(net, in); }, x, tol);
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw ShapeError("argmax of an empty output");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

double margin_at_zero(std::span<const double> values) {
    if (values.empty()) throw ShapeError("margin of an empty output");
    double rival = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < values.size(); ++i) rival = std::max(rival, values[i]);
    return values[0] - rival;
}

std::vector<double> materialize_matrix(const CircularFilter& f) {
    const std::size_t n = f.shape().size();
    if (n > kMaxMaterializedSize) {
        throw CapacityError("refusing to materialize a " + std::to_string(n) + "x" + std::to_string(n) + " matrix");
    }
    const auto base = f.base();
    std::vector<double> w(n * n);
    for (std::size_t row = 0; row < n; ++row) {
        const auto shifted = translate(base, TranslationVector{delta_inverse(row, f.shape())});
        std::copy(shifted.values().begin(), shifted.values().end(), w.begin() + static_cast<std::ptrdiff_t>(row * n));
    }
    return w;
}

}  // namespace eqr
