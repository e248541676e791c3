#pragma once

// Circular (toroidal) tensors: every index is reduced modulo the shape, and
// translations are pure permutations of the stored values.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace eqr {

using Index = std::vector<std::int64_t>;

// Grid extents (n_1, ..., n_d). Every extent is at least one.
class Shape {
public:
    Shape() = default;
    explicit Shape(std::vector<std::size_t> dims);
    Shape(std::initializer_list<std::size_t> dims) : Shape(std::vector<std::size_t>(dims)) {}

    std::size_t arity() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return size_; }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    const std::vector<std::size_t>& dims() const noexcept { return dims_; }

    // "6x6" style, also accepted by parse().
    std::string to_string() const;
    static Shape parse(std::string_view text);

    friend bool operator==(const Shape&, const Shape&) = default;

private:
    std::vector<std::size_t> dims_;
    std::size_t size_ = 0;
};

// Integer offset M acting on tensors of a matching arity.
struct TranslationVector {
    Index offsets;

    std::size_t arity() const noexcept { return offsets.size(); }
    TranslationVector operator-() const;
    TranslationVector operator+(const TranslationVector& other) const;
    // Componentwise representative in [0, n_i).
    TranslationVector reduced(const Shape& shape) const;
    bool is_zero_mod(const Shape& shape) const;

    friend bool operator==(const TranslationVector&, const TranslationVector&) = default;
};

std::string to_string(const TranslationVector& m);

// Mixed-radix flattening of I mod shape (row-major).
std::size_t delta(std::span<const std::int64_t> index, const Shape& shape);
Index delta_inverse(std::size_t flat, const Shape& shape);

// Every translation of the grid, in flat-index order.
std::vector<TranslationVector> all_translations(const Shape& shape);

// Gather table of T^M: translate(x, M)[k] == x[table[k]].
std::vector<std::size_t> translation_table(const Shape& shape, const TranslationVector& m);

class CircularTensor {
public:
    CircularTensor() = default;
    explicit CircularTensor(Shape shape);  // zero-filled
    CircularTensor(Shape shape, std::vector<double> values);

    static CircularTensor one_hot(const Shape& shape, std::size_t flat, double value = 1.0);
    static CircularTensor constant(const Shape& shape, double value);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return values_.size(); }

    // Extension rule: any integer index is reduced modulo the shape.
    double at(std::span<const std::int64_t> index) const;
    double operator[](std::size_t flat) const { return values_[flat]; }
    double& operator[](std::size_t flat) { return values_[flat]; }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    friend bool operator==(const CircularTensor&, const CircularTensor&) = default;

private:
    Shape shape_;
    std::vector<double> values_;
};

// A stack of circular tensors sharing one spatial shape, stored channel-major.
class ChannelTensor {
public:
    ChannelTensor() = default;
    ChannelTensor(Shape shape, std::size_t channels);  // zero-filled
    ChannelTensor(Shape shape, std::size_t channels, std::vector<double> values);
    explicit ChannelTensor(const CircularTensor& single);
    explicit ChannelTensor(const std::vector<CircularTensor>& channels);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return values_.size(); }

    std::span<const double> channel(std::size_t c) const;
    std::span<double> channel(std::size_t c);
    CircularTensor channel_tensor(std::size_t c) const;

    double operator[](std::size_t flat) const { return values_[flat]; }
    double& operator[](std::size_t flat) { return values_[flat]; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    friend bool operator==(const ChannelTensor&, const ChannelTensor&) = default;

private:
    Shape shape_;
    std::size_t channels_ = 0;
    std::vector<double> values_;
};

CircularTensor translate(const CircularTensor& x, const TranslationVector& m);
// Spatial translation of every channel.
ChannelTensor translate(const ChannelTensor& x, const TranslationVector& m);
// Spatial translation plus a cyclic shift of the channel axis.
ChannelTensor translate(const ChannelTensor& x, const TranslationVector& m, std::int64_t channel_shift);

double inner(const CircularTensor& x, const CircularTensor& z);
double inner(const ChannelTensor& x, const ChannelTensor& z);

std::vector<double> vectorize(const CircularTensor& x);
CircularTensor devectorize(std::span<const double> flat, const Shape& shape);

// Largest |a - b| over matching entries.
double max_abs_difference(const ChannelTensor& a, const ChannelTensor& b);

}  // namespace eqr
