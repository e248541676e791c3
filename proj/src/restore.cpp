#include "eqr/restore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

#include "eqr/config.hpp"
#include "eqr/error.hpp"

namespace eqr {

namespace {

// Exact direction for multiples of 90 degrees so quarter turns stay pure
// pixel permutations.
void unit_direction(double degrees, double& c, double& s) {
    const double quarters = degrees / 90.0;
    if (quarters == std::floor(quarters)) {
        static constexpr double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const auto q = static_cast<long long>(quarters);
        const auto idx = static_cast<std::size_t>(((q % 4) + 4) % 4);
        c = cs[idx][0];
        s = cs[idx][1];
        return;
    }
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
}

double second_largest_gap(std::span<const double> values, std::size_t best) {
    double rival = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i != best) rival = std::max(rival, values[i]);
    }
    return values[best] - rival;
}

const std::vector<double>& single_channel_output(const ChannelTensor& out, std::vector<double>& storage) {
    if (out.channels() != 1) {
        throw ShapeError("estimator must emit one channel, got " + std::to_string(out.channels()));
    }
    storage.assign(out.values().begin(), out.values().end());
    return storage;
}

}  // namespace

TranslationVector estimate_translation(const EquivariantNetwork& net, const ChannelTensor& x) {
    const auto out = forward(net, x);
    std::vector<double> values;
    single_channel_output(out, values);
    return TranslationVector{delta_inverse(argmax(values), x.shape())};
}

RestorationResult restore(const EquivariantNetwork& net, const ChannelTensor& x) {
    RestorationResult result;
    single_channel_output(forward(net, x), result.estimator_output);
    const std::size_t best = argmax(result.estimator_output);
    result.shift = TranslationVector{delta_inverse(best, x.shape())};
    result.restored = translate(x, -result.shift);
    result.margin = second_largest_gap(result.estimator_output, best);
    result.degenerate = !(result.margin >= kDegenerateMargin);
    return result;
}

void PolarGridSpec::validate() const {
    if (angular_bins == 0 || radial_bins == 0) throw InputError("polar grid needs at least one bin per axis");
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InputError("polar radius R must be positive");
    if (spacing == RadialSpacing::logarithmic && !(decay > 0.0 && decay < 1.0)) {
        throw InputError("radial decay a must lie in (0, 1)");
    }
}

double PolarGridSpec::sample_radius(std::size_t ring) const {
    if (spacing == RadialSpacing::linear) {
        return static_cast<double>(ring) * radius / static_cast<double>(radial_bins);
    }
    return radius * std::pow(decay, static_cast<double>(ring));
}

PolarGridSpec PolarGridSpec::parse(std::string_view text) {
    const auto kv = KeyValues::parse(text);
    kv.reject_unknown({"angular_bins", "radial_bins", "R", "a", "center_x", "center_y", "radial", "quantize"});
    PolarGridSpec spec;
    spec.angular_bins = kv.get_uint("angular_bins", spec.angular_bins);
    spec.radial_bins = kv.get_uint("radial_bins", spec.radial_bins);
    spec.radius = kv.get_double("R", spec.radius);
    spec.decay = kv.get_double("a", spec.decay);
    if (!kv.has("center_x") || !kv.has("center_y")) throw InputError("polar spec needs center_x and center_y");
    spec.center_x = kv.get_double("center_x", 0.0);
    spec.center_y = kv.get_double("center_y", 0.0);
    const auto radial = kv.get_string("radial", "log");
    if (radial == "log") {
        spec.spacing = RadialSpacing::logarithmic;
    } else if (radial == "linear") {
        spec.spacing = RadialSpacing::linear;
    } else {
        throw InputError("radial must be 'log' or 'linear', got '" + radial + "'");
    }
    spec.quantize = kv.get_bool("quantize", false);
    spec.validate();
    return spec;
}

std::string PolarGridSpec::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "angular_bins=" << angular_bins << "\nradial_bins=" << radial_bins << "\nR=" << radius << "\na=" << decay
        << "\ncenter_x=" << center_x << "\ncenter_y=" << center_y
        << "\nradial=" << (spacing == RadialSpacing::linear ? "linear" : "log")
        << "\nquantize=" << (quantize ? "true" : "false") << "\n";
    return out.str();
}

PolarGridSpec PolarGridSpec::centered(const Shape& image, std::size_t angular_bins, std::size_t radial_bins,
                                      double decay) {
    if (image.arity() != 2) throw ShapeError("polar sampling needs a 2-D image");
    PolarGridSpec spec;
    spec.angular_bins = angular_bins;
    spec.radial_bins = radial_bins;
    spec.decay = decay;
    spec.center_x = static_cast<double>(image.dim(1)) / 2.0;
    spec.center_y = static_cast<double>(image.dim(0)) / 2.0;
    spec.radius = std::min(spec.center_x, spec.center_y);
    return spec;
}

double sample_bilinear(const CircularTensor& image, double x, double y) {
    if (image.shape().arity() != 2) throw ShapeError("bilinear sampling needs a 2-D image");
    const auto rows = static_cast<std::int64_t>(image.shape().dim(0));
    const auto cols = static_cast<std::int64_t>(image.shape().dim(1));
    const double u = x - 0.5;
    const double v = y - 0.5;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const auto c0 = static_cast<std::int64_t>(fu);
    const auto r0 = static_cast<std::int64_t>(fv);
    const double tu = u - fu;
    const double tv = v - fv;
    auto pixel = [&](std::int64_t r, std::int64_t c) {
        if (r < 0 || c < 0 || r >= rows || c >= cols) return 0.0;
        return image[static_cast<std::size_t>(r * cols + c)];
    };
    double value = 0.0;
    if (tu != 1.0 && tv != 1.0) value += (1.0 - tu) * (1.0 - tv) * pixel(r0, c0);
    if (tu != 0.0) value += tu * (1.0 - tv) * pixel(r0, c0 + 1);
    if (tv != 0.0) value += (1.0 - tu) * tv * pixel(r0 + 1, c0);
    if (tu != 0.0 && tv != 0.0) value += tu * tv * pixel(r0 + 1, c0 + 1);
    return value;
}

ChannelTensor to_polar(const CircularTensor& image, const PolarGridSpec& spec) {
    spec.validate();
    if (image.shape().arity() != 2) throw ShapeError("polar sampling needs a 2-D image");
    const double rows = static_cast<double>(image.shape().dim(0));
    const double cols = static_cast<double>(image.shape().dim(1));
    double outer = 0.0;
    for (std::size_t i = 0; i < spec.radial_bins; ++i) outer = std::max(outer, spec.sample_radius(i));
    if (spec.center_x - outer < 0.0 || spec.center_x + outer > cols || spec.center_y - outer < 0.0 ||
        spec.center_y + outer > rows) {
        throw InputError("polar radius " + std::to_string(outer) + " about (" + std::to_string(spec.center_x) + ", " +
                         std::to_string(spec.center_y) + ") leaves the " + image.shape().to_string() + " image");
    }
    ChannelTensor out(Shape{spec.angular_bins}, spec.radial_bins);
    for (std::size_t j = 0; j < spec.angular_bins; ++j) {
        double c = 0.0;
        double s = 0.0;
        unit_direction(360.0 * static_cast<double>(j) / static_cast<double>(spec.angular_bins), c, s);
        for (std::size_t i = 0; i < spec.radial_bins; ++i) {
            const double r = spec.sample_radius(i);
            double v = sample_bilinear(image, spec.center_x + r * c, spec.center_y + r * s);
            if (spec.quantize) v = std::round(v);
            out.channel(i)[j] = v;
        }
    }
    return out;
}

CircularTensor rotate_image(const CircularTensor& image, double degrees, double center_x, double center_y) {
    if (image.shape().arity() != 2) throw ShapeError("rotation needs a 2-D image");
    const std::size_t rows = image.shape().dim(0);
    const std::size_t cols = image.shape().dim(1);
    double c = 0.0;
    double s = 0.0;
    unit_direction(degrees, c, s);
    CircularTensor out(image.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < cols; ++k) {
            const double dx = static_cast<double>(k) + 0.5 - center_x;
            const double dy = static_cast<double>(r) + 0.5 - center_y;
            out[r * cols + k] = sample_bilinear(image, center_x + c * dx + s * dy, center_y - s * dx + c * dy);
        }
    }
    return out;
}

RestorationResult restore_rotation(const EquivariantNetwork& net, const CircularTensor& image,
                                   const PolarGridSpec& spec) {
    const auto polar = to_polar(image, spec);
    RestorationResult result;
    single_channel_output(forward(net, polar), result.estimator_output);
    const std::size_t best = argmax(result.estimator_output);
    result.bin = best;
    result.shift = TranslationVector{{static_cast<std::int64_t>(best)}};
    result.margin = second_largest_gap(result.estimator_output, best);
    result.degenerate = !(result.margin >= kDegenerateMargin);
    const double back = -static_cast<double>(best) * spec.bin_degrees();
    result.restored = ChannelTensor(best == 0 ? image : rotate_image(image, back, spec.center_x, spec.center_y));
    return result;
}

std::string nn_classify(std::span<const LabeledTensor> train_set, const ChannelTensor& x) {
    if (train_set.empty()) throw InputError("nearest-neighbour classifier needs a nonempty training set");
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        const double score = inner(train_set[i].tensor, x);
        if (score > best_score) {
            best_score = score;
            best = i;
        }
    }
    return train_set[best].label;
}

std::string AccuracyTable::to_csv() const {
    std::ostringstream out;
    out.precision(10);
    out << "row";
    for (auto s : scopes) out << ',' << s;
    out << "\nwo";
    for (double v : without_restorer) out << ',' << v;
    out << "\nw";
    for (double v : with_restorer) out << ',' << v;
    out << "\neffect";
    for (std::size_t i = 0; i < scopes.size(); ++i) out << ',' << effect(i);
    out << '\n';
    return out.str();
}

AccuracyTable eval_grid(const EquivariantNetwork& net, std::span<const LabeledTensor> dataset,
                        std::size_t max_shift) {
    if (dataset.empty()) throw InputError("evaluation needs a nonempty dataset");
    const Shape& shape = dataset[0].tensor.shape();
    const std::size_t d = shape.arity();
    const auto range = static_cast<std::int64_t>(max_shift);

    // Outcomes depend on the shift only modulo the shape.
    std::map<std::pair<std::size_t, std::size_t>, std::pair<bool, bool>> cache;
    auto outcome = [&](std::size_t e, const TranslationVector& m) {
        const auto key = std::make_pair(e, delta(m.offsets, shape));
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        const auto& item = dataset[e];
        const auto shifted = translate(item.tensor, m);
        const bool plain = nn_classify(dataset, shifted) == item.label;
        const bool restored = nn_classify(dataset, restore(net, shifted).restored) == item.label;
        return cache.emplace(key, std::make_pair(plain, restored)).first->second;
    };

    AccuracyTable table;
    for (std::int64_t scope = 0; scope <= range; ++scope) {
        std::size_t total = 0;
        std::size_t plain_hits = 0;
        std::size_t restored_hits = 0;
        const auto side = static_cast<std::size_t>(2 * scope + 1);
        std::size_t combos = 1;
        for (std::size_t a = 0; a < d; ++a) combos *= side;
        for (std::size_t c = 0; c < combos; ++c) {
            TranslationVector m{Index(d)};
            std::size_t rest = c;
            for (std::size_t a = d; a-- > 0;) {
                m.offsets[a] = static_cast<std::int64_t>(rest % side) - scope;
                rest /= side;
            }
            for (std::size_t e = 0; e < dataset.size(); ++e) {
                const auto [plain, restored] = outcome(e, m);
                ++total;
                plain_hits += plain;
                restored_hits += restored;
            }
        }
        table.scopes.push_back(static_cast<std::size_t>(scope));
        table.without_restorer.push_back(static_cast<double>(plain_hits) / static_cast<double>(total));
        table.with_restorer.push_back(static_cast<double>(restored_hits) / static_cast<double>(total));
    }
    return table;
}

}  // namespace eqr
