#pragma once

// Binary file formats. All multi-byte fields are little-endian.
//
// Tensor  (EQT1): "EQT1" | d:u32 | n_1..n_d:u32 | P:u32 | dtype:u8 | P*N values,
//                 channel-major then row-major; dtype 0 = f64, 1 = u8.
// Network (EQN1): "EQN1" | d:u32 | n_1..n_d:u32 | L:u32 | per layer:
//                 n_in:u32 | n_out:u32 | activation:u8 | per filter (k, r):
//                 sparse:u8 | support:u32 | sparse ? (offset:u32, weight:f64)*
//                 : weight:f64 * N | then n_out biases:f64.
// Image   (PGM):  binary P5, maxval <= 255.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "eqr/equi_net.hpp"
#include "eqr/tensor.hpp"

namespace eqr {

using Bytes = std::vector<std::uint8_t>;

enum class DType : std::uint8_t { f64 = 0, u8 = 1 };

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// u8 requires every value to be an integer in [0, 255].
Bytes encode_tensor(const ChannelTensor& x, DType dtype = DType::f64);
ChannelTensor decode_tensor(std::span<const std::uint8_t> bytes);
void save_tensor(const std::filesystem::path& path, const ChannelTensor& x, DType dtype = DType::f64);
ChannelTensor load_tensor(const std::filesystem::path& path);

Bytes encode_network(const EquivariantNetwork& net);
EquivariantNetwork decode_network(std::span<const std::uint8_t> bytes);
void save_network(const std::filesystem::path& path, const EquivariantNetwork& net);
EquivariantNetwork load_network(const std::filesystem::path& path);

// Rows x cols grayscale image. Saving clamps to [0, 255] and rounds half away
// from zero.
CircularTensor decode_pgm(std::span<const std::uint8_t> bytes);
Bytes encode_pgm(const CircularTensor& image);
CircularTensor load_pgm(const std::filesystem::path& path);
void save_pgm(const std::filesystem::path& path, const CircularTensor& image);

}  // namespace eqr
