#pragma once

// Dataset manifests: a tab-separated list of tensor files with labels.
//
//   #version=1
//   #shape=8x8
//   #channels=1
//   #range=u8            (binary | u8 | q<Q> | f64)
//   #certificate=aperiodic   (optional cache)
//   img0.pgm<TAB>zero
//
// Paths are resolved relative to the manifest's directory. Files ending in
// .pgm are read as single-channel images, anything else as EQT1 tensors.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eqr/restore.hpp"
#include "eqr/tensor.hpp"

namespace eqr {

struct ManifestEntry {
    std::string path;
    std::string label;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::string version = "1";
    Shape shape{{1}};
    std::size_t channels = 1;
    std::string range = "f64";
    std::optional<std::string> certificate;
    std::vector<ManifestEntry> entries;

    // Q such that values lie in [0, 2^{Q+1}); nullopt for f64.
    std::optional<std::size_t> bits_q() const;

    static DatasetManifest parse(std::string_view text);
    std::string to_text() const;

    friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<LabeledTensor> items;

    std::vector<ChannelTensor> tensors() const;
};

// Loads and validates every entry. All problems are collected and reported
// together: RangeError when every problem is a value-range violation,
// InputError otherwise.
Dataset load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

}  // namespace eqr
