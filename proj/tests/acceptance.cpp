// Acceptance checks: one PASS/FAIL line per criterion, with measured values
// and runtimes against their limits. Exit status is nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eqr/constructive.hpp"
#include "eqr/restore.hpp"
#include "eqr/training.hpp"
#include "support/gradcheck.hpp"
#include "support/pairs.hpp"
#include "support/oracles.hpp"
#include "support/roundtrip.hpp"

using namespace eqr;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool ok = o.ok && secs < limit_s;
    failures += !ok;
    std::printf("criterion %2d %s  %s: %s [%.2fs / %.0fs]\n", id, ok ? "PASS" : "FAIL", name, o.detail.c_str(), secs,
                limit_s);
    std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

Shape shape_with_at_most(std::mt19937_64& rng, std::size_t max_side, std::size_t max_n, std::size_t min_n = 1) {
    for (;;) {
        const auto s = oracle::random_shape(rng, max_side);
        if (s.size() <= max_n && s.size() >= min_n) return s;
    }
}

// Grows a random aperiodic set towards `count` elements. Small grids hold few
// aperiodic classes, so the result may be smaller; it is never empty.
std::vector<ChannelTensor> aperiodic_binary(std::mt19937_64& rng, const Shape& s, std::size_t channels,
                                            std::size_t count) {
    std::vector<ChannelTensor> data;
    for (int attempt = 0; data.size() < count && (attempt < 500 || data.empty()); ++attempt) {
        data.push_back(oracle::random_binary(rng, s, channels));
        if (!oracle::is_aperiodic(data, true)) data.pop_back();
    }
    return data;
}

Outcome equivariance_sufficiency() {
    std::mt19937_64 rng(101);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const auto s = oracle::random_shape(rng, 6);
        const auto net = oracle::random_network(rng, s, 3, 3);
        const auto x = oracle::random_tensor(rng, s, net.in_channels());
        worst = std::max(worst, check_equivariance_exhaustive(net, x, 1e-9).max_deviation);
    }
    return {worst <= 1e-9, fmt("max deviation %.3g over 200 nets (<= 1e-9)", worst)};
}

Outcome equivariance_necessity() {
    std::mt19937_64 rng(102);
    std::size_t found = 0;
    double weakest = INFINITY;
    for (int i = 0; i < 50; ++i) {
        const auto s = shape_with_at_most(rng, 6, 36, 2);
        const auto net = oracle::random_network(rng, s, 3, 3);
        std::vector<oracle::DenseLayer> layers;
        for (const auto& layer : net.layers()) {
            layers.push_back(oracle::dense_layer(layer));
            // Identity activations keep a later ReLU from hiding the violation.
            layers.back().relu = false;
        }
        auto& target = layers[rng() % layers.size()];
        const std::size_t n = target.n;
        std::uniform_real_distribution<double> amount(0.5, 2.0);
        if (i % 2 == 0) {
            auto& block = target.blocks[rng() % target.blocks.size()];
            block[(rng() % n) * n + rng() % n] += amount(rng);
        } else {
            target.bias[rng() % target.out][rng() % n] += amount(rng);
        }
        const TensorMap f = [&](const ChannelTensor& in) {
            ChannelTensor y = in;
            for (const auto& d : layers) y = d.apply(y);
            return y;
        };
        const auto x = oracle::random_tensor(rng, s, net.in_channels());
        const auto report = check_equivariance_exhaustive(f, x, 1e-6);
        weakest = std::min(weakest, report.max_deviation);
        found += report.max_deviation > 1e-6;
    }
    return {found == 50, std::to_string(found) + "/50 violations exposed, weakest witness " + fmt("%.3g", weakest)};
}

Outcome binary_decomposition() {
    const Shape s{2, 2};
    const std::size_t p = 2;
    std::size_t bad_bits = 0, bad_depth = 0, bad_width = 0, cases = 0;
    for (std::size_t q = 0; q <= 3; ++q) {
        const BinaryDecompositionSpec spec{q, p};
        const auto net = build_binary_network(spec, s);
        bad_depth += net.depth() != 2 * q + 2;
        // Every layer splits into P independent blocks of at most Q+1 channels.
        for (const auto& layer : net.layers()) {
            if (layer.out_channels() % p || layer.in_channels() % p) {
                ++bad_width;
                continue;
            }
            const std::size_t bo = layer.out_channels() / p, bi = layer.in_channels() / p;
            bad_width += bo > q + 1;
            for (std::size_t k = 0; k < layer.out_channels(); ++k) {
                for (std::size_t r = 0; r < layer.in_channels(); ++r) {
                    if (k / bo == r / bi) continue;
                    for (const auto& t : layer.filter(k, r).taps()) bad_width += t.weight != 0.0;
                }
            }
        }
        const std::size_t limit = std::size_t{1} << (q + 1);
        for (std::size_t v = 0; v < limit; ++v) {
            // Cycling the offset puts every value at every pixel of every channel.
            std::vector<double> values(p * s.size());
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>((v + i) % limit);
            const ChannelTensor x(s, p, values);
            const auto y = forward(net, x);
            for (std::size_t ch = 0; ch < p; ++ch) {
                for (std::size_t i = 0; i < s.size(); ++i) {
                    const auto value = static_cast<std::uint64_t>(x.channel(ch)[i]);
                    for (std::size_t j = 0; j <= q; ++j) {
                        const double out = y.channel(ch * (q + 1) + j)[i];
                        bad_bits += out != static_cast<double>(oracle::bit(value, j));
                        ++cases;
                    }
                }
            }
        }
    }
    return {bad_bits == 0 && bad_depth == 0 && bad_width == 0,
            std::to_string(cases) + " bits checked, " + std::to_string(bad_bits) + " wrong, depth violations " +
                std::to_string(bad_depth) + ", block-width violations " + std::to_string(bad_width)};
}

// Returns the number of failed checks for one dataset.
std::size_t check_restorer(const std::vector<ChannelTensor>& data, std::size_t bits_q) {
    const auto est = build_restorer(data, bits_q);
    const Shape& s = data[0].shape();
    std::size_t bad = 0;
    for (const auto& x : data) {
        const auto y = forward(est.network, x);
        bad += margin_at_zero(y.values()) <= 0.0;
        for (const auto& m : all_translations(s)) {
            const auto shifted = translate(x, m);
            const auto r = restore(est.network, shifted);
            bad += r.shift != m.reduced(s);
            bad += !(r.restored == x);
        }
    }
    return bad;
}

Outcome constructive_estimator() {
    std::mt19937_64 rng(104);
    std::size_t bad = 0, variants = 0;
    for (int i = 0; i < 50; ++i) {
        const auto s = shape_with_at_most(rng, 8, 16);
        const std::size_t g = 1 + rng() % 2;
        const auto data = aperiodic_binary(rng, s, g, 1 + rng() % 8);
        bad += check_restorer(data, 0);
        variants += data.size() * s.size();
    }
    // u8 images, Q = 7.
    const Shape s8{8, 8};
    std::vector<ChannelTensor> u8;
    std::uniform_int_distribution<int> byte(0, 255);
    for (;;) {
        u8.clear();
        for (int i = 0; i < 4; ++i) {
            std::vector<double> v(s8.size());
            for (auto& e : v) e = byte(rng);
            u8.emplace_back(s8, 1, std::move(v));
        }
        if (oracle::is_aperiodic(u8, true)) break;
    }
    bad += check_restorer(u8, 7);
    variants += 4 * s8.size();
    return {bad == 0, std::to_string(variants) + " shifted variants, " + std::to_string(bad) + " failed checks"};
}

Outcome pair_suite() {
    std::mt19937_64 rng(105);
    std::size_t bad = 0, equal_norm = 0, norm_gap = 0;
    for (int i = 0; i < 200; ++i) {
        std::vector<ChannelTensor> pair;
        // Some grids (a single binary channel on two cells) admit only one aperiodic class.
        while (pair.size() < 2) {
            const auto s = shape_with_at_most(rng, 6, 16, 2);
            pair = aperiodic_binary(rng, s, 1 + rng() % 2, 2);
        }
        const auto r = pairs::check_pair(pair[0], pair[1]);
        bad += !r.all();
        equal_norm += r.equal_norm_seen;
        norm_gap += r.norm_gap_seen;
    }
    return {bad == 0, std::to_string(bad) + "/200 pairs violate an item (equal-norm pairs " +
                          std::to_string(equal_norm) + ", unequal " + std::to_string(norm_gap) + ")"};
}

Outcome gradients() {
    std::mt19937_64 rng(106);
    double worst = 0.0;
    std::size_t checked = 0, kinks = 0, unresolved = 0;
    for (int i = 0; i < 100; ++i) {
        const auto s = shape_with_at_most(rng, 5, 25, 2);
        const std::size_t in = 1 + rng() % 2;
        auto net = oracle::random_network(rng, s, 2, 3, in);
        std::vector<CircularFilter> filters;
        for (std::size_t r = 0; r < net.out_channels(); ++r) filters.push_back(oracle::random_filter(rng, s));
        net = net.then(EquivariantNetwork(
            s, {EquivariantLayer(s, net.out_channels(), 1, std::move(filters), {0.1}, Activation::identity)}));
        const auto x = oracle::random_tensor(rng, s, in);
        const auto report = gradcheck::check(net, x);
        worst = std::max(worst, report.max_relative_error);
        checked += report.checked;
        kinks += report.skipped_kinks;
        unresolved += report.unresolved;
    }
    return {worst <= 1e-4 && checked > 0, fmt("max relative error %.3g", worst) + " over " + std::to_string(checked) +
                                              " parameters (" + std::to_string(kinks) + " kinks, " +
                                              std::to_string(unresolved) + " below rounding noise)"};
}

Outcome trained_estimator() {
    std::mt19937_64 rng(0);
    const Shape s{8, 8};
    std::vector<ChannelTensor> data;
    while (data.size() < 20) {
        auto x = oracle::random_binary(rng, s, 1);
        bool fresh = true;
        for (const auto& y : data) fresh = fresh && !(x == y);
        if (fresh) data.push_back(std::move(x));
    }
    TrainConfig cfg;
    const auto result = train(data, cfg);
    const double acc = result.log.empty() ? 0.0 : result.log.back().accuracy;
    std::size_t restored = 0, total = 0;
    for (const auto& x : data) {
        for (const auto& m : all_translations(s)) {
            restored += restore(result.net, translate(x, m)).restored == x;
            ++total;
        }
    }
    const double racc = static_cast<double>(restored) / static_cast<double>(total);
    return {acc >= 0.95 && racc >= 0.95, fmt("argmax-at-0 accuracy %.3f", acc) + fmt(", restoration accuracy %.3f", racc) +
                                             " (both >= 0.95)" + (result.diverged ? ", diverged" : "")};
}

Outcome invariance_table() {
    std::mt19937_64 rng(108);
    const Shape s{8, 8};
    const auto data = aperiodic_binary(rng, s, 1, 10);
    std::vector<LabeledTensor> labeled;
    for (std::size_t i = 0; i < data.size(); ++i) labeled.push_back({data[i], "class" + std::to_string(i)});
    const auto est = build_restorer(data, 0);
    const auto table = eval_grid(est.network, labeled, 8);
    bool ok = table.with_restorer.size() == 9 && table.with_restorer[0] == table.without_restorer[0];
    for (std::size_t i = 0; ok && i < table.scopes.size(); ++i) {
        ok = table.with_restorer[i] == table.with_restorer[0];
        if (i >= 1) ok = ok && table.without_restorer[i] < table.with_restorer[i];
    }
    std::string csv = table.to_csv();
    for (auto& c : csv) {
        if (c == '\n') c = ' ';
    }
    return {ok, csv};
}

// Asymmetric smooth scene with a zero border: blobs of different sizes and
// brightness plus a bar.
CircularTensor synthetic_scene(const Shape& s) {
    CircularTensor img(s);
    struct Blob {
        double x, y, sigma, peak;
    };
    const Blob blobs[] = {{150, 100, 9, 230}, {80, 70, 14, 160}, {100, 160, 6, 255}, {130, 140, 20, 90}};
    const std::size_t rows = s.dim(0), cols = s.dim(1);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
            double v = 0.0;
            for (const auto& b : blobs) {
                const double dx = x - b.x, dy = y - b.y;
                v += b.peak * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
            }
            if (std::abs(y - 90.0) < 3.0 && x > 115.0 && x < 175.0) v += 120.0;
            const double rr = std::hypot(x - 112.0, y - 112.0);
            img[r * cols + c] = rr > 100.0 ? 0.0 : std::round(std::min(v, 255.0));
        }
    }
    return img;
}

Outcome rotation() {
    const Shape s{224, 224};
    const auto scene = synthetic_scene(s);
    auto spec = PolarGridSpec::parse("angular_bins=36\nradial_bins=36\nR=112\na=0.92\ncenter_x=112\ncenter_y=112\n");
    spec.quantize = true;
    const auto est = build_restorer(std::vector{to_polar(scene, spec)}, 7);
    std::size_t aligned_errors = 0, worst = 0;
    for (std::size_t k = 0; k < 36; ++k) {
        const auto turned = rotate_image(scene, static_cast<double>(k) * spec.bin_degrees(), 112.0, 112.0);
        const auto r = restore_rotation(est.network, turned, spec);
        const std::size_t bin = r.bin.value_or(0);
        const std::size_t d = (bin + 36 - k) % 36;
        const std::size_t err = std::min(d, 36 - d);
        if (k % 9 == 0) aligned_errors += err;
        worst = std::max(worst, err);
    }
    return {aligned_errors == 0 && worst <= 1, "grid-aligned bin error " + std::to_string(aligned_errors) +
                                                   ", worst bin error " + std::to_string(worst) + " (<= 1)"};
}

Outcome round_trips() {
    const auto dir = std::filesystem::temp_directory_path() / "eqr_acceptance_roundtrip";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::size_t t = roundtrip::tensors(100, 110);
    const std::size_t n = roundtrip::networks(100, 111);
    const std::size_t p = roundtrip::pgms(100, 112);
    const std::size_t m = roundtrip::manifests(100, 113, dir);
    std::filesystem::remove_all(dir);
    return {t + n + p + m == 0, "failures: tensor " + std::to_string(t) + ", network " + std::to_string(n) + ", pgm " +
                                    std::to_string(p) + ", manifest " + std::to_string(m) + " (of 100 each)"};
}

}  // namespace

int main() {
    criterion(1, "equivariance of circular-filter networks", 30, equivariance_sufficiency);
    criterion(2, "single-entry violations break equivariance", 30, equivariance_necessity);
    criterion(3, "binary decomposition is exact", 10, binary_decomposition);
    criterion(4, "constructive estimator restores every shift", 120, constructive_estimator);
    criterion(5, "inner-product facts on aperiodic pairs", 60, pair_suite);
    criterion(6, "analytic gradients match finite differences", 60, gradients);
    criterion(7, "trained estimator at desk scale", 300, trained_estimator);
    criterion(8, "restored accuracy is constant across shift scopes", 60, invariance_table);
    criterion(9, "rotation restoration through polar resampling", 120, rotation);
    criterion(10, "serialization round trips", 30, round_trips);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
