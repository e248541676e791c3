#pragma once

// Randomized byte-exact round trips for every file format. Each function
// runs `count` instances and returns how many failed.

#include <filesystem>
#include <random>
#include <string>

#include "eqr/dataset.hpp"
#include "eqr/io.hpp"
#include "support/oracles.hpp"

namespace roundtrip {

inline std::size_t tensors(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto shape = oracle::random_shape(rng, 7, 3);
        const std::size_t channels = 1 + rng() % 3;
        const bool as_u8 = rng() % 2 == 0;
        eqr::ChannelTensor x = as_u8 ? oracle::random_tensor(rng, shape, channels, 0.0, 256.0)
                                     : oracle::random_tensor(rng, shape, channels, -1e6, 1e6);
        if (as_u8) {
            for (auto& v : x.values()) v = std::floor(v);
        }
        const auto dtype = as_u8 ? eqr::DType::u8 : eqr::DType::f64;
        const auto bytes = eqr::encode_tensor(x, dtype);
        const auto back = eqr::decode_tensor(bytes);
        if (!(back == x) || eqr::encode_tensor(back, dtype) != bytes) ++failures;
    }
    return failures;
}

inline std::size_t networks(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const auto shape = oracle::random_shape(rng, 5, 2);
        const auto net = oracle::random_network(rng, shape, 3, 3);
        const auto bytes = eqr::encode_network(net);
        const auto back = eqr::decode_network(bytes);
        if (!(back == net) || eqr::encode_network(back) != bytes) ++failures;
    }
    return failures;
}

inline std::size_t pgms(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::size_t failures = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const eqr::Shape shape{1 + rng() % 40, 1 + rng() % 40};
        eqr::CircularTensor img(shape);
        for (auto& v : img.values()) v = static_cast<double>(rng() % 256);
        const auto bytes = eqr::encode_pgm(img);
        const auto back = eqr::decode_pgm(bytes);
        if (!(back == img) || eqr::encode_pgm(back) != bytes) ++failures;
    }
    return failures;
}

// Writes real files into `dir` so loading exercises path resolution too.
inline std::size_t manifests(std::size_t count, std::uint64_t seed, const std::filesystem::path& dir) {
    std::mt19937_64 rng(seed);
    std::size_t failures = 0;
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < count; ++i) {
        eqr::DatasetManifest m;
        m.shape = eqr::Shape{1 + rng() % 6, 1 + rng() % 6};
        const bool pgm = rng() % 2 == 0;
        m.channels = pgm ? 1 : 1 + rng() % 3;
        m.range = pgm ? "u8" : (rng() % 2 ? "binary" : "f64");
        if (rng() % 2) m.certificate = rng() % 2 ? "aperiodic" : "periodic";
        std::vector<eqr::ChannelTensor> items;
        const std::size_t n = 1 + rng() % 4;
        for (std::size_t e = 0; e < n; ++e) {
            eqr::ChannelTensor x(m.shape, m.channels);
            for (auto& v : x.values()) {
                v = m.range == "u8" ? static_cast<double>(rng() % 256)
                    : m.range == "binary" ? static_cast<double>(rng() % 2)
                                          : std::ldexp(static_cast<double>(rng() % 2000000) - 1e6, -7);
            }
            const std::string name = "m" + std::to_string(i) + "_" + std::to_string(e) + (pgm ? ".pgm" : ".eqt");
            if (pgm) {
                eqr::save_pgm(dir / name, x.channel_tensor(0));
            } else {
                eqr::save_tensor(dir / name, x);
            }
            m.entries.push_back({name, "label " + std::to_string(rng() % 10)});
            items.push_back(std::move(x));
        }
        const auto path = dir / ("m" + std::to_string(i) + ".tsv");
        eqr::save_manifest(path, m);
        const auto text = m.to_text();
        const auto bytes = eqr::read_file(path);
        bool ok = std::string(bytes.begin(), bytes.end()) == text;
        const auto ds = eqr::load_manifest(path);
        ok = ok && ds.manifest == m && ds.manifest.to_text() == text && ds.items.size() == items.size();
        for (std::size_t e = 0; ok && e < items.size(); ++e) {
            ok = ds.items[e].tensor == items[e] && ds.items[e].label == m.entries[e].label;
        }
        if (!ok) ++failures;
    }
    return failures;
}

}  // namespace roundtrip
