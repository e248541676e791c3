#include "eqr/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>

#include <CLI11.hpp>

#include "eqr/config.hpp"
#include "eqr/constructive.hpp"
#include "eqr/dataset.hpp"
#include "eqr/error.hpp"
#include "eqr/io.hpp"
#include "eqr/restore.hpp"
#include "eqr/training.hpp"

namespace eqr {

namespace {

namespace fs = std::filesystem;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return *flag;
    if (const char* env = std::getenv("EQR_SEED"); env && *env) {
        const auto kv = KeyValues::parse(std::string("seed=") + env);
        return kv.get_uint("seed", 0);
    }
    return 0;
}

bool is_pgm(const fs::path& p) { return p.extension() == ".pgm"; }

ChannelTensor load_any(const fs::path& p) { return is_pgm(p) ? ChannelTensor(load_pgm(p)) : load_tensor(p); }

void save_any(const fs::path& p, const ChannelTensor& x) {
    if (is_pgm(p)) {
        if (x.channels() != 1) throw ShapeError("a PGM holds one channel, tensor has " + std::to_string(x.channels()));
        save_pgm(p, x.channel_tensor(0));
    } else {
        save_tensor(p, x);
    }
}

CircularTensor load_image(const fs::path& p) {
    const auto x = load_any(p);
    if (x.channels() != 1 || x.shape().arity() != 2) throw ShapeError("expected a single-channel 2-D image");
    return x.channel_tensor(0);
}

std::string format_shift(const TranslationVector& m) {
    std::string s;
    for (std::size_t i = 0; i < m.offsets.size(); ++i) s += (i ? " " : "") + std::to_string(m.offsets[i]);
    return s;
}

ChannelTensor random_input(const Shape& shape, std::size_t channels, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> values(shape.size() * channels);
    for (auto& v : values) v = dist(rng);
    return ChannelTensor(shape, channels, std::move(values));
}

struct Options {
    std::string net, in, out, dataset, config, log, shape, polar_spec, mode = "translate", classifier = "nn";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> bits;
    std::uint64_t value = 0;
    std::size_t max_shift = 8;
    std::size_t samples = 16;
    std::size_t pad = 0;
    std::string resize;
    double tolerance = 1e-9;
    bool exhaustive = false;
};

int run_verify(const Options& o, std::ostream& out) {
    const auto net = load_network(o.net);
    const auto shape = o.shape.empty() ? net.shape() : Shape::parse(o.shape);
    if (shape != net.shape()) {
        throw ShapeError("network was built for " + net.shape().to_string() + ", not " + shape.to_string());
    }
    const auto seed = resolve_seed(o.seed);
    const auto x = random_input(shape, std::max<std::size_t>(net.in_channels(), 1), seed);
    EquivarianceReport report;
    if (o.exhaustive) {
        report = check_equivariance_exhaustive(net, x, o.tolerance);
    } else {
        std::mt19937_64 rng(seed + 1);
        for (std::size_t i = 0; i < o.samples; ++i) {
            const auto m = TranslationVector{delta_inverse(rng() % shape.size(), shape)};
            const auto r = check_equivariance(net, x, m, o.tolerance);
            if (r.max_deviation > report.max_deviation || std::isnan(r.max_deviation)) report = r;
        }
        report.within_tolerance = report.max_deviation <= o.tolerance;
    }
    out << "max_deviation=" << std::setprecision(6) << report.max_deviation << "\n";
    return report.within_tolerance ? kExitOk : kExitValidation;
}

int run_build(const Options& o, std::ostream& out, std::ostream& err) {
    const auto ds = load_manifest(o.dataset);
    const auto q = o.bits ? o.bits : ds.manifest.bits_q();
    if (!q) throw InputError("range f64 has no bit width; pass --bits");
    const auto tensors = ds.tensors();
    try {
        const auto est = build_restorer(tensors, *q, o.dataset);
        save_network(o.out, est.network);
        out << est.certificate.describe() << "\n";
        out << "depth=" << est.depth() << " width_channels=" << est.width() << " alpha=" << std::setprecision(17)
            << est.alpha << "\n";
        out << "element\tlabel\tmargin\n" << std::setprecision(6);
        for (std::size_t i = 0; i < tensors.size(); ++i) {
            const auto y = forward(est.network, tensors[i]);
            out << i << '\t' << ds.items[i].label << '\t' << margin_at_zero(y.values()) << "\n";
        }
    } catch (const PreconditionError& e) {
        err << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}

int run_train(const Options& o, std::ostream& out, std::ostream& err) {
    const auto ds = load_manifest(o.dataset);
    auto cfg = o.config.empty() ? TrainConfig{} : TrainConfig::parse(read_text_file(o.config));
    if (o.seed || std::getenv("EQR_SEED")) cfg.seed = resolve_seed(o.seed);
    const auto tensors = ds.tensors();
    const auto result = train(tensors, cfg);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    if (!o.log.empty()) {
        const auto csv = format_training_log(result.log);
        write_file(o.log, {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
    }
    if (result.diverged) {
        err << result.message << "\n";
        return kExitValidation;
    }
    save_network(o.out, result.net);
    const auto stats = evaluate_estimator(result.net, tensors);
    out << "argmax0_accuracy=" << stats.accuracy << " min_margin=" << stats.min_margin << "\n";
    return kExitOk;
}

int run_estimate(const Options& o, std::ostream& out) {
    const auto net = load_network(o.net);
    const auto r = restore(net, load_any(o.in));
    out << "shift=" << format_shift(r.shift) << " margin=" << std::setprecision(6) << r.margin
        << (r.degenerate ? " degenerate" : "") << "\n";
    return kExitOk;
}

int run_restore(const Options& o, std::ostream& out) {
    const auto net = load_network(o.net);
    RestorationResult r;
    if (o.mode == "translate") {
        r = restore(net, load_any(o.in));
    } else {
        if (o.polar_spec.empty()) throw InputError("--mode rotate needs --polar-spec");
        const auto spec = PolarGridSpec::parse(read_text_file(o.polar_spec));
        r = restore_rotation(net, load_image(o.in), spec);
    }
    save_any(o.out, r.restored);
    if (r.bin) {
        out << "bin=" << *r.bin;
    } else {
        out << "shift=" << format_shift(r.shift);
    }
    out << " margin=" << std::setprecision(6) << r.margin << (r.degenerate ? " degenerate" : "") << "\n";
    return kExitOk;
}

int run_eval(const Options& o, std::ostream& out) {
    if (o.classifier != "nn") throw InputError("unknown classifier '" + o.classifier + "'");
    const auto net = load_network(o.net);
    const auto ds = load_manifest(o.dataset);
    const auto table = eval_grid(net, ds.items, o.max_shift);
    const auto csv = table.to_csv();
    if (o.out.empty()) {
        out << csv;
    } else {
        write_file(o.out, {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
    }
    return kExitOk;
}

int run_polar(const Options& o) {
    const auto spec = PolarGridSpec::parse(read_text_file(o.polar_spec));
    save_tensor(o.out, to_polar(load_image(o.in), spec));
    return kExitOk;
}

int run_bits(const Options& o, std::ostream& out) {
    const std::size_t q = o.bits.value_or(7);
    const BinaryDecompositionSpec spec{q, 1};
    if (o.value >= spec.value_limit()) {
        throw RangeError("value " + std::to_string(o.value) + " needs more than " + std::to_string(q + 1) + " bits");
    }
    const auto net = build_binary_network(spec, Shape({1}));
    const auto bits = forward(net, ChannelTensor(Shape({1}), 1, {static_cast<double>(o.value)}));
    for (std::size_t j = 0; j < bits.channels(); ++j) out << (j ? " " : "") << bits.channel(j)[0];
    out << "\n";
    return kExitOk;
}

// Nearest-neighbour resize followed by a constant zero border.
int run_prep(const Options& o) {
    auto img = load_image(o.in);
    if (!o.resize.empty()) {
        const auto target = Shape::parse(o.resize);
        if (target.arity() != 2) throw ShapeError("--resize expects HxW");
        CircularTensor resized(target);
        const auto h = img.shape().dim(0), w = img.shape().dim(1);
        for (std::size_t r = 0; r < target.dim(0); ++r) {
            for (std::size_t c = 0; c < target.dim(1); ++c) {
                resized[r * target.dim(1) + c] = img[(r * h / target.dim(0)) * w + c * w / target.dim(1)];
            }
        }
        img = std::move(resized);
    }
    if (o.pad > 0) {
        const auto h = img.shape().dim(0), w = img.shape().dim(1);
        CircularTensor padded(Shape({h + 2 * o.pad, w + 2 * o.pad}));
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) padded[(r + o.pad) * (w + 2 * o.pad) + c + o.pad] = img[r * w + c];
        }
        img = std::move(padded);
    }
    save_any(o.out, ChannelTensor(img));
    return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Translation and rotation restoration with strictly equivariant networks", "eqr"};
    app.require_subcommand(1);
    Options o;

    auto seed = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "Random seed (falls back to EQR_SEED)");
    };

    auto* verify = app.add_subcommand("verify-equivariance", "Check F(T^M x) = T^M F(x) on a random input");
    verify->add_option("--net", o.net, "Network file (.eqn)")->required();
    verify->add_option("--shape", o.shape, "Spatial shape, e.g. 6x6");
    verify->add_flag("--exhaustive", o.exhaustive, "Check every translation");
    verify->add_option("--samples", o.samples, "Random translations when not exhaustive");
    verify->add_option("--tol", o.tolerance, "Maximum allowed deviation");
    seed(verify);

    auto* build = app.add_subcommand("build-constructive", "Build the training-free restorer for a dataset");
    build->add_option("--dataset", o.dataset, "Manifest")->required();
    build->add_option("--out", o.out, "Output network (.eqn)")->required();
    build->add_option("--bits", o.bits, "Override Q (values lie in [0, 2^(Q+1)))");

    auto* trainc = app.add_subcommand("train", "Train an estimator by gradient descent");
    trainc->add_option("--dataset", o.dataset, "Manifest")->required();
    trainc->add_option("--config", o.config, "key=value training config");
    trainc->add_option("--out", o.out, "Output network (.eqn)")->required();
    trainc->add_option("--log", o.log, "Per-epoch CSV log");
    seed(trainc);

    auto* estimate = app.add_subcommand("estimate", "Print the estimated translation of an input");
    estimate->add_option("--net", o.net, "Network file (.eqn)")->required();
    estimate->add_option("--in", o.in, "Input (.pgm or .eqt)")->required();

    auto* restorec = app.add_subcommand("restore", "Undo the estimated translation or rotation");
    restorec->add_option("--net", o.net, "Network file (.eqn)")->required();
    restorec->add_option("--in", o.in, "Input (.pgm or .eqt)")->required();
    restorec->add_option("--out", o.out, "Restored output (.pgm or .eqt)")->required();
    restorec->add_option("--mode", o.mode, "translate or rotate")->check(CLI::IsMember({"translate", "rotate"}));
    restorec->add_option("--polar-spec", o.polar_spec, "Polar grid spec for --mode rotate");

    auto* eval = app.add_subcommand("eval", "Accuracy with and without restoration per shift scope");
    eval->add_option("--net", o.net, "Network file (.eqn)")->required();
    eval->add_option("--dataset", o.dataset, "Manifest")->required();
    eval->add_option("--classifier", o.classifier, "Classifier (nn)");
    eval->add_option("--max-shift", o.max_shift, "Largest shift scope");
    eval->add_option("--out", o.out, "CSV output (stdout when omitted)");

    auto* polar = app.add_subcommand("polar", "Resample an image on a polar grid");
    polar->add_option("--in", o.in, "Input image")->required();
    polar->add_option("--polar-spec", o.polar_spec, "Polar grid spec")->required();
    polar->add_option("--out", o.out, "Output tensor (.eqt)")->required();

    auto* bits = app.add_subcommand("decompose-bits", "Print the bits of a value, LSB first");
    bits->add_option("--value", o.value, "Non-negative integer")->required();
    bits->add_option("--bits", o.bits, "Q; the value must be below 2^(Q+1)");

    auto* prep = app.add_subcommand("prep", "Resize (nearest neighbour) and zero-pad an image");
    prep->add_option("--in", o.in, "Input image")->required();
    prep->add_option("--out", o.out, "Output image")->required();
    prep->add_option("--resize", o.resize, "Target HxW");
    prep->add_option("--pad", o.pad, "Border width");

    if (args.empty()) {
        err << app.help();
        return kExitUsage;
    }
    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*verify) return run_verify(o, out);
        if (*build) return run_build(o, out, err);
        if (*trainc) return run_train(o, out, err);
        if (*estimate) return run_estimate(o, out);
        if (*restorec) return run_restore(o, out);
        if (*eval) return run_eval(o, out);
        if (*polar) return run_polar(o);
        if (*bits) return run_bits(o, out);
        if (*prep) return run_prep(o);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitUsage;
}

}  // namespace eqr
