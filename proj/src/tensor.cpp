#include "eqr/tensor.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "eqr/error.hpp"

namespace eqr {

namespace {

std::size_t wrap(std::int64_t i, std::size_t n) {
    const auto m = static_cast<std::int64_t>(n);
    const std::int64_t r = i % m;
    return static_cast<std::size_t>(r < 0 ? r + m : r);
}

void require_arity(std::size_t got, const Shape& shape, const char* what) {
    if (got != shape.arity()) {
        throw ShapeError(std::string(what) + ": arity " + std::to_string(got) + " does not match shape " +
                         shape.to_string());
    }
}

}  // namespace

Shape::Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw ShapeError("shape must have at least one axis");
    size_ = 1;
    for (auto n : dims_) {
        if (n == 0) throw ShapeError("shape extents must be positive");
        size_ *= n;
    }
}

std::string Shape::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (i) out += 'x';
        out += std::to_string(dims_[i]);
    }
    return out;
}

Shape Shape::parse(std::string_view text) {
    std::vector<std::size_t> dims;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto next = text.find('x', pos);
        if (next == std::string_view::npos) next = text.size();
        auto token = text.substr(pos, next - pos);
        std::size_t value = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
            throw InputError("malformed shape '" + std::string(text) + "'");
        }
        dims.push_back(value);
        pos = next + 1;
    }
    return Shape(std::move(dims));
}

TranslationVector TranslationVector::operator-() const {
    TranslationVector out{offsets};
    for (auto& m : out.offsets) m = -m;
    return out;
}

TranslationVector TranslationVector::operator+(const TranslationVector& other) const {
    if (other.arity() != arity()) throw ShapeError("translation arity mismatch");
    TranslationVector out{offsets};
    for (std::size_t i = 0; i < offsets.size(); ++i) out.offsets[i] += other.offsets[i];
    return out;
}

TranslationVector TranslationVector::reduced(const Shape& shape) const {
    require_arity(arity(), shape, "translation");
    TranslationVector out{offsets};
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        out.offsets[i] = static_cast<std::int64_t>(wrap(offsets[i], shape.dim(i)));
    }
    return out;
}

bool TranslationVector::is_zero_mod(const Shape& shape) const {
    const auto r = reduced(shape);
    return std::all_of(r.offsets.begin(), r.offsets.end(), [](auto m) { return m == 0; });
}

std::string to_string(const TranslationVector& m) {
    std::string out = "(";
    for (std::size_t i = 0; i < m.offsets.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(m.offsets[i]);
    }
    return out + ")";
}

std::size_t delta(std::span<const std::int64_t> index, const Shape& shape) {
    require_arity(index.size(), shape, "delta");
    std::size_t flat = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
        flat = flat * shape.dim(i) + wrap(index[i], shape.dim(i));
    }
    return flat;
}

Index delta_inverse(std::size_t flat, const Shape& shape) {
    if (flat >= shape.size()) {
        throw RangeError("flat index " + std::to_string(flat) + " out of range for shape " + shape.to_string());
    }
    Index index(shape.arity());
    for (std::size_t i = shape.arity(); i-- > 0;) {
        index[i] = static_cast<std::int64_t>(flat % shape.dim(i));
        flat /= shape.dim(i);
    }
    return index;
}

std::vector<TranslationVector> all_translations(const Shape& shape) {
    std::vector<TranslationVector> out;
    out.reserve(shape.size());
    for (std::size_t k = 0; k < shape.size(); ++k) out.push_back({delta_inverse(k, shape)});
    return out;
}

std::vector<std::size_t> translation_table(const Shape& shape, const TranslationVector& m) {
    require_arity(m.arity(), shape, "translate");
    const std::size_t d = shape.arity();
    // Per-axis source coordinate for each destination coordinate: i - m_i.
    std::vector<std::vector<std::size_t>> axis_src(d);
    for (std::size_t a = 0; a < d; ++a) {
        const std::size_t n = shape.dim(a);
        axis_src[a].resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            axis_src[a][i] = wrap(static_cast<std::int64_t>(i) - m.offsets[a], n);
        }
    }
    std::vector<std::size_t> table(shape.size());
    std::vector<std::size_t> counter(d, 0);
    for (std::size_t k = 0; k < table.size(); ++k) {
        std::size_t src = 0;
        for (std::size_t a = 0; a < d; ++a) src = src * shape.dim(a) + axis_src[a][counter[a]];
        table[k] = src;
        for (std::size_t a = d; a-- > 0;) {
            if (++counter[a] < shape.dim(a)) break;
            counter[a] = 0;
        }
    }
    return table;
}

CircularTensor::CircularTensor(Shape shape) : shape_(std::move(shape)), values_(shape_.size(), 0.0) {}

CircularTensor::CircularTensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw ShapeError("tensor of shape " + shape_.to_string() + " needs " + std::to_string(shape_.size()) +
                         " values, got " + std::to_string(values_.size()));
    }
}

CircularTensor CircularTensor::one_hot(const Shape& shape, std::size_t flat, double value) {
    if (flat >= shape.size()) throw RangeError("one-hot position out of range");
    CircularTensor out(shape);
    out.values_[flat] = value;
    return out;
}

CircularTensor CircularTensor::constant(const Shape& shape, double value) {
    return CircularTensor(shape, std::vector<double>(shape.size(), value));
}

double CircularTensor::at(std::span<const std::int64_t> index) const {
    return values_[delta(index, shape_)];
}

ChannelTensor::ChannelTensor(Shape shape, std::size_t channels)
    : shape_(std::move(shape)), channels_(channels), values_(shape_.size() * channels, 0.0) {}

ChannelTensor::ChannelTensor(Shape shape, std::size_t channels, std::vector<double> values)
    : shape_(std::move(shape)), channels_(channels), values_(std::move(values)) {
    if (values_.size() != shape_.size() * channels_) {
        throw ShapeError("channel tensor " + std::to_string(channels_) + "x" + shape_.to_string() + " needs " +
                         std::to_string(shape_.size() * channels_) + " values, got " +
                         std::to_string(values_.size()));
    }
}

ChannelTensor::ChannelTensor(const CircularTensor& single)
    : shape_(single.shape()), channels_(1), values_(single.values().begin(), single.values().end()) {}

ChannelTensor::ChannelTensor(const std::vector<CircularTensor>& channels) {
    if (channels.empty()) throw ShapeError("channel tensor needs at least one channel");
    shape_ = channels.front().shape();
    channels_ = channels.size();
    values_.reserve(shape_.size() * channels_);
    for (const auto& c : channels) {
        if (c.shape() != shape_) throw ShapeError("channels disagree on spatial shape");
        values_.insert(values_.end(), c.values().begin(), c.values().end());
    }
}

std::span<const double> ChannelTensor::channel(std::size_t c) const {
    if (c >= channels_) throw RangeError("channel " + std::to_string(c) + " out of range");
    return std::span<const double>(values_).subspan(c * shape_.size(), shape_.size());
}

std::span<double> ChannelTensor::channel(std::size_t c) {
    if (c >= channels_) throw RangeError("channel " + std::to_string(c) + " out of range");
    return std::span<double>(values_).subspan(c * shape_.size(), shape_.size());
}

CircularTensor ChannelTensor::channel_tensor(std::size_t c) const {
    auto view = channel(c);
    return CircularTensor(shape_, std::vector<double>(view.begin(), view.end()));
}

CircularTensor translate(const CircularTensor& x, const TranslationVector& m) {
    const auto table = translation_table(x.shape(), m);
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = x[table[k]];
    return CircularTensor(x.shape(), std::move(out));
}

ChannelTensor translate(const ChannelTensor& x, const TranslationVector& m) {
    return translate(x, m, 0);
}

ChannelTensor translate(const ChannelTensor& x, const TranslationVector& m, std::int64_t channel_shift) {
    const auto table = translation_table(x.shape(), m);
    const std::size_t n = x.shape().size();
    ChannelTensor out(x.shape(), x.channels());
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const std::size_t src_c = wrap(static_cast<std::int64_t>(c) - channel_shift, x.channels());
        auto src = x.channel(src_c);
        auto dst = out.channel(c);
        for (std::size_t k = 0; k < n; ++k) dst[k] = src[table[k]];
    }
    return out;
}

double inner(const CircularTensor& x, const CircularTensor& z) {
    if (x.shape() != z.shape()) throw ShapeError("inner: shapes differ");
    return std::inner_product(x.values().begin(), x.values().end(), z.values().begin(), 0.0);
}

double inner(const ChannelTensor& x, const ChannelTensor& z) {
    if (x.shape() != z.shape() || x.channels() != z.channels()) throw ShapeError("inner: shapes differ");
    return std::inner_product(x.values().begin(), x.values().end(), z.values().begin(), 0.0);
}

std::vector<double> vectorize(const CircularTensor& x) {
    return {x.values().begin(), x.values().end()};
}

CircularTensor devectorize(std::span<const double> flat, const Shape& shape) {
    return CircularTensor(shape, std::vector<double>(flat.begin(), flat.end()));
}

double max_abs_difference(const ChannelTensor& a, const ChannelTensor& b) {
    if (a.shape() != b.shape() || a.channels() != b.channels()) throw ShapeError("difference: shapes differ");
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = std::abs(a[k] - b[k]);
        if (std::isnan(d)) return d;
        worst = std::max(worst, d);
    }
    return worst;
}

}  // namespace eqr
