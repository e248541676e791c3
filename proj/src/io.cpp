#include "eqr/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "eqr/error.hpp"

namespace eqr {

namespace {

constexpr char kTensorMagic[4] = {'E', 'Q', 'T', '1'};
constexpr char kNetworkMagic[4] = {'E', 'Q', 'N', '1'};

class ByteWriter {
public:
    void raw(const char (&magic)[4]) { out_.insert(out_.end(), magic, magic + 4); }
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
    Bytes take() { return std::move(out_); }

private:
    Bytes out_;
};

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    void expect_magic(const char (&magic)[4]) {
        need(4, "magic");
        if (std::memcmp(bytes_.data(), magic, 4) != 0) {
            throw DecodeError(std::string(what_) + ": wrong magic", 0);
        }
        pos_ = 4;
    }
    std::uint8_t u8(const char* field) {
        need(1, field);
        return bytes_[pos_++];
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
        return v;
    }
    double f64(const char* field) {
        need(8, field);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
        return std::bit_cast<double>(bits);
    }
    void finish() const {
        if (pos_ != bytes_.size()) throw DecodeError(std::string(what_) + ": trailing bytes", pos_);
    }
    std::size_t position() const noexcept { return pos_; }
    [[noreturn]] void fail(const std::string& msg) const { throw DecodeError(std::string(what_) + ": " + msg, pos_); }

private:
    void need(std::size_t n, const char* field) const {
        if (bytes_.size() - pos_ < n) {
            throw DecodeError(std::string(what_) + ": truncated while reading " + field, pos_);
        }
    }

    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

void write_shape(ByteWriter& w, const Shape& shape) {
    w.u32(static_cast<std::uint32_t>(shape.arity()));
    for (auto n : shape.dims()) w.u32(static_cast<std::uint32_t>(n));
}

Shape read_shape(ByteReader& r) {
    const auto arity = r.u32("arity");
    if (arity == 0 || arity > 16) r.fail("unsupported arity " + std::to_string(arity));
    std::vector<std::size_t> dims;
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < arity; ++i) {
        const auto n = r.u32("dimension");
        if (n == 0) r.fail("zero extent");
        total *= n;
        if (total > (std::size_t{1} << 32)) r.fail("tensor too large");
        dims.push_back(n);
    }
    return Shape(std::move(dims));
}

bool is_u8_value(double v) { return v >= 0.0 && v <= 255.0 && std::floor(v) == v; }

}  // namespace

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed for '" + path.string() + "'");
}

Bytes encode_tensor(const ChannelTensor& x, DType dtype) {
    ByteWriter w;
    w.raw(kTensorMagic);
    write_shape(w, x.shape());
    w.u32(static_cast<std::uint32_t>(x.channels()));
    w.u8(static_cast<std::uint8_t>(dtype));
    for (double v : x.values()) {
        if (dtype == DType::u8) {
            if (!is_u8_value(v)) throw RangeError("value " + std::to_string(v) + " is not representable as u8");
            w.u8(static_cast<std::uint8_t>(v));
        } else {
            w.f64(v);
        }
    }
    return w.take();
}

ChannelTensor decode_tensor(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "tensor");
    r.expect_magic(kTensorMagic);
    auto shape = read_shape(r);
    const auto channels = r.u32("channel count");
    if (channels == 0) r.fail("zero channels");
    const auto tag = r.u8("dtype");
    if (tag > 1) r.fail("unknown dtype tag " + std::to_string(tag));
    const std::size_t count = shape.size() * channels;
    const std::size_t width = tag == 0 ? 8 : 1;
    if ((bytes.size() - r.position()) / width < count) {
        throw DecodeError("tensor: truncated payload, expected " + std::to_string(count) + " values", r.position());
    }
    std::vector<double> values(count);
    for (auto& v : values) v = tag == 0 ? r.f64("payload") : static_cast<double>(r.u8("payload"));
    r.finish();
    return ChannelTensor(std::move(shape), channels, std::move(values));
}

void save_tensor(const std::filesystem::path& path, const ChannelTensor& x, DType dtype) {
    write_file(path, encode_tensor(x, dtype));
}

ChannelTensor load_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

Bytes encode_network(const EquivariantNetwork& net) {
    ByteWriter w;
    w.raw(kNetworkMagic);
    write_shape(w, net.shape());
    w.u32(static_cast<std::uint32_t>(net.depth()));
    for (const auto& layer : net.layers()) {
        w.u32(static_cast<std::uint32_t>(layer.in_channels()));
        w.u32(static_cast<std::uint32_t>(layer.out_channels()));
        w.u8(static_cast<std::uint8_t>(layer.activation()));
        for (const auto& f : layer.filters()) {
            w.u8(f.is_sparse() ? 1 : 0);
            w.u32(static_cast<std::uint32_t>(f.taps().size()));
            for (const auto& tap : f.taps()) {
                if (f.is_sparse()) w.u32(static_cast<std::uint32_t>(tap.offset));
                w.f64(tap.weight);
            }
        }
        for (double b : layer.biases()) w.f64(b);
    }
    return w.take();
}

EquivariantNetwork decode_network(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "network");
    r.expect_magic(kNetworkMagic);
    auto shape = read_shape(r);
    const std::size_t n = shape.size();
    const auto depth = r.u32("depth");
    std::vector<EquivariantLayer> layers;
    for (std::uint32_t l = 0; l < depth; ++l) {
        const auto in = r.u32("input channels");
        const auto out = r.u32("output channels");
        if (in == 0 || out == 0) r.fail("zero channel count");
        const auto act = r.u8("activation");
        if (act > 1) r.fail("unknown activation tag " + std::to_string(act));
        if ((bytes.size() - r.position()) / 5 < std::size_t{in} * out) r.fail("truncated filter table");
        std::vector<CircularFilter> filters;
        filters.reserve(std::size_t{in} * out);
        for (std::size_t f = 0; f < std::size_t{in} * out; ++f) {
            const auto sparse = r.u8("sparse flag");
            if (sparse > 1) r.fail("bad sparse flag");
            const auto support = r.u32("support size");
            if (support > n) r.fail("filter support exceeds tensor size");
            if (sparse) {
                std::vector<Tap> taps(support);
                for (auto& tap : taps) {
                    tap.offset = r.u32("tap offset");
                    tap.weight = r.f64("tap weight");
                }
                try {
                    filters.push_back(CircularFilter::sparse(shape, std::move(taps)));
                } catch (const Error& e) {
                    r.fail(e.what());
                }
            } else {
                if (support != n) r.fail("dense filter must list every offset");
                CircularTensor base(shape);
                for (std::size_t k = 0; k < n; ++k) base[k] = r.f64("dense weight");
                filters.push_back(CircularFilter::dense(std::move(base)));
            }
        }
        std::vector<double> biases(out);
        for (auto& b : biases) b = r.f64("bias");
        layers.emplace_back(shape, in, out, std::move(filters), std::move(biases), static_cast<Activation>(act));
    }
    r.finish();
    return EquivariantNetwork(std::move(shape), std::move(layers));
}

void save_network(const std::filesystem::path& path, const EquivariantNetwork& net) {
    write_file(path, encode_network(net));
}

EquivariantNetwork load_network(const std::filesystem::path& path) { return decode_network(read_file(path)); }

CircularTensor decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> DecodeError { return DecodeError("pgm: " + msg, pos); };
    if (bytes.size() < 2 || bytes[0] != 'P') throw fail("not a PGM file");
    if (bytes[1] != '5') throw fail(bytes[1] == '2' ? "ASCII PGM (P2) is not supported" : "unsupported variant");
    pos = 2;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&](const char* field) {
        skip_space();
        if (pos >= bytes.size()) throw fail(std::string("truncated header reading ") + field);
        if (!std::isdigit(bytes[pos])) throw fail(std::string("expected ") + field);
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > 1'000'000) throw fail(std::string(field) + " too large");
        }
        return v;
    };
    const auto width = number("width");
    const auto height = number("height");
    const auto maxval = number("maxval");
    if (width == 0 || height == 0) throw fail("zero image extent");
    if (maxval == 0 || maxval > 255) throw fail("maxval " + std::to_string(maxval) + " not in [1, 255]");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw fail("missing whitespace after maxval");
    ++pos;
    const std::size_t count = width * height;
    if (bytes.size() - pos < count) {
        pos = bytes.size();
        throw fail("truncated payload, expected " + std::to_string(count) + " pixels");
    }
    std::vector<double> values(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto v = bytes[pos + k];
        if (v > maxval) {
            pos += k;
            throw fail("pixel exceeds maxval");
        }
        values[k] = v;
    }
    return CircularTensor(Shape{height, width}, std::move(values));
}

Bytes encode_pgm(const CircularTensor& image) {
    if (image.shape().arity() != 2) throw ShapeError("PGM images must be 2-D, got " + image.shape().to_string());
    const std::string header = "P5\n" + std::to_string(image.shape().dim(1)) + " " +
                               std::to_string(image.shape().dim(0)) + "\n255\n";
    Bytes out(header.begin(), header.end());
    out.reserve(header.size() + image.size());
    for (double v : image.values()) {
        const double clamped = std::isnan(v) ? 0.0 : std::clamp(std::round(v), 0.0, 255.0);
        out.push_back(static_cast<std::uint8_t>(clamped));
    }
    return out;
}

CircularTensor load_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

void save_pgm(const std::filesystem::path& path, const CircularTensor& image) {
    write_file(path, encode_pgm(image));
}

}  // namespace eqr
