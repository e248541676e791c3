#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eqr/cli.hpp"
#include "eqr/dataset.hpp"
#include "eqr/io.hpp"

using namespace eqr;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch() {
    auto dir = fs::temp_directory_path() / "eqr_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Three 6x6 binary images with different pixel counts, so none is a
// translate of another.
fs::path write_toy_dataset(const fs::path& dir) {
    DatasetManifest m;
    m.shape = Shape{6, 6};
    m.range = "binary";
    for (std::size_t i = 0; i < 3; ++i) {
        CircularTensor img(m.shape);
        for (std::size_t k = 0; k <= i; ++k) img[k * 7] = 1.0;
        img[5] = 1.0;
        const std::string name = "toy" + std::to_string(i) + ".pgm";
        save_pgm(dir / name, img);
        m.entries.push_back({name, "class" + std::to_string(i)});
    }
    save_manifest(dir / "toy.tsv", m);
    return dir / "toy.tsv";
}

std::string slurp(const fs::path& p) {
    const auto b = read_file(p);
    return {b.begin(), b.end()};
}

}  // namespace

TEST_CASE("usage errors") {
    const auto none = run({});
    CHECK(none.code == kExitUsage);
    CHECK(none.err.find("Usage") != std::string::npos);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"decompose-bits", "--value", "5", "--bogus"}).code == kExitUsage);
    CHECK(run({"decompose-bits"}).code == kExitUsage);
}

TEST_CASE("decompose-bits") {
    const auto r = run({"decompose-bits", "--value", "5", "--bits", "2"});
    CHECK(r.code == kExitOk);
    CHECK(r.out == "1 0 1\n");
    CHECK(run({"decompose-bits", "--value", "8", "--bits", "2"}).code == kExitValidation);
}

TEST_CASE("end to end") {
    const auto dir = scratch();
    const auto manifest = write_toy_dataset(dir);
    const auto net = (dir / "net.eqn").string();

    const auto built = run({"build-constructive", "--dataset", manifest.string(), "--out", net});
    REQUIRE(built.code == kExitOk);
    CHECK(built.out.find("aperiodic") != std::string::npos);
    CHECK(built.out.find("class2") != std::string::npos);

    const auto verified = run({"verify-equivariance", "--net", net, "--shape", "6x6", "--exhaustive", "--seed", "3"});
    CHECK(verified.code == kExitOk);
    CHECK(verified.out.rfind("max_deviation=", 0) == 0);
    CHECK(run({"verify-equivariance", "--net", net, "--shape", "5x5"}).code == kExitValidation);

    // Shift one image by (2, 3) and restore it.
    const auto img = load_pgm(dir / "toy1.pgm");
    save_pgm(dir / "shifted.pgm", translate(img, TranslationVector{{2, 3}}));
    const auto est = run({"estimate", "--net", net, "--in", (dir / "shifted.pgm").string()});
    CHECK(est.code == kExitOk);
    CHECK(est.out.rfind("shift=2 3 ", 0) == 0);
    const auto restored = run({"restore", "--net", net, "--in", (dir / "shifted.pgm").string(), "--out",
                               (dir / "restored.pgm").string()});
    CHECK(restored.code == kExitOk);
    CHECK(load_pgm(dir / "restored.pgm") == img);

    const auto table = run({"eval", "--net", net, "--dataset", manifest.string(), "--max-shift", "2"});
    CHECK(table.code == kExitOk);
    CHECK(table.out.rfind("row,0,1,2\n", 0) == 0);
}

TEST_CASE("periodic datasets fail validation") {
    const auto dir = scratch();
    DatasetManifest m;
    m.shape = Shape{4};
    m.range = "binary";
    save_tensor(dir / "a.eqt", ChannelTensor(m.shape, 1, {1, 0, 1, 0}));
    m.entries.push_back({"a.eqt", "a"});
    save_manifest(dir / "p.tsv", m);
    const auto r = run({"build-constructive", "--dataset", (dir / "p.tsv").string(), "--out",
                        (dir / "p.eqn").string()});
    CHECK(r.code == kExitValidation);
    CHECK_FALSE(r.err.empty());
}

TEST_CASE("training is reproducible and honours EQR_SEED") {
    const auto dir = scratch();
    const auto manifest = write_toy_dataset(dir);
    std::ofstream(dir / "cfg.txt") << "depth=2\nepochs=3\n";
    auto train_with = [&](const std::string& tag, std::vector<std::string> extra) {
        std::vector<std::string> args{"train", "--dataset", manifest.string(), "--config", (dir / "cfg.txt").string(),
                                      "--out", (dir / (tag + ".eqn")).string(), "--log",
                                      (dir / (tag + ".csv")).string()};
        args.insert(args.end(), extra.begin(), extra.end());
        return run(args);
    };
    const auto a = train_with("a", {"--seed", "7"});
    const auto b = train_with("b", {"--seed", "7"});
    REQUIRE(a.code == kExitOk);
    CHECK(a.out == b.out);
    CHECK(slurp(dir / "a.eqn") == slurp(dir / "b.eqn"));
    CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));

    ::setenv("EQR_SEED", "7", 1);
    const auto c = train_with("c", {});
    ::unsetenv("EQR_SEED");
    CHECK(c.code == kExitOk);
    CHECK(slurp(dir / "c.eqn") == slurp(dir / "a.eqn"));
    const auto d = train_with("d", {"--seed", "8"});
    CHECK(slurp(dir / "d.eqn") != slurp(dir / "a.eqn"));
}

TEST_CASE("polar and prep") {
    const auto dir = scratch();
    CircularTensor img(Shape{20, 20});
    img[5 * 20 + 14] = 255.0;
    save_pgm(dir / "img.pgm", img);
    std::ofstream(dir / "spec.txt") << "angular_bins=8\nradial_bins=3\nR=10\na=0.5\ncenter_x=10\ncenter_y=10\n";
    CHECK(run({"polar", "--in", (dir / "img.pgm").string(), "--polar-spec", (dir / "spec.txt").string(), "--out",
               (dir / "p.eqt").string()})
              .code == kExitOk);
    const auto polar = load_tensor(dir / "p.eqt");
    CHECK(polar.shape() == Shape{8});
    CHECK(polar.channels() == 3);

    CHECK(run({"prep", "--in", (dir / "img.pgm").string(), "--out", (dir / "big.pgm").string(), "--resize", "40x40",
               "--pad", "4"})
              .code == kExitOk);
    const auto big = load_pgm(dir / "big.pgm");
    CHECK(big.shape() == Shape{48, 48});
    CHECK(big[(4 + 10) * 48 + 4 + 28] == 255.0);
    CHECK(big[0] == 0.0);
}
