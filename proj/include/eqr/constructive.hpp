#pragma once

// Training-free translation restorers for aperiodic integer datasets: a
// ReLU network that extracts bit planes, stacked with a two-layer head whose
// filters are the (scaled, normalized) binary data themselves.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqr/equi_net.hpp"
#include "eqr/tensor.hpp"

namespace eqr {

// T^{(shift, channel_shift)}(dataset[source]) == dataset[target].
struct AperiodicityWitness {
    std::size_t source = 0;
    std::size_t target = 0;
    TranslationVector shift;
    std::int64_t channel_shift = 0;
};

struct AperiodicityCertificate {
    std::string dataset_id;
    bool aperiodic = false;
    std::optional<AperiodicityWitness> witness;
    std::optional<std::size_t> zero_element;  // index of an all-zero element

    std::string describe() const;
};

enum class ShiftDomain {
    spatial,              // translations of the spatial grid only
    spatial_and_channel,  // plus cyclic shifts of the channel axis
};

// Exhaustive search over all ordered pairs and all shifts in the domain.
// Throws InputError on an empty dataset or mixed shapes.
AperiodicityCertificate check_aperiodic(std::span<const ChannelTensor> dataset,
                                        ShiftDomain domain = ShiftDomain::spatial_and_channel,
                                        std::string dataset_id = {});

// Values lie in [0, 2^(bits_q + 1)); each of the `channels` input channels
// expands into bits_q + 1 binary channels.
struct BinaryDecompositionSpec {
    std::size_t bits_q = 0;
    std::size_t channels = 1;

    std::size_t bit_count() const noexcept { return bits_q + 1; }
    std::size_t binary_channels() const noexcept { return channels * bit_count(); }
    double value_limit() const;
};

inline constexpr std::size_t kMaxBitsQ = 30;

// 2Q+2 ReLU layers of pointwise filters. Output channel p * (Q+1) + j holds
// bit j (LSB first) of input channel p, exactly, for admissible inputs.
EquivariantNetwork build_binary_network(const BinaryDecompositionSpec& spec, const Shape& shape);

// Smallest admissible head scale: 1 + GN + 2 G^2 N^2.
double minimal_alpha(std::size_t binary_channels, std::size_t n);

struct EstimatorHead {
    EquivariantNetwork net;
    std::vector<std::size_t> order;  // head channel s -> dataset index, by nondecreasing norm
    std::vector<double> norms;       // ||Z_s|| in head order
    double alpha = 0.0;
    AperiodicityCertificate certificate;
};

// Two layers: S channels of sigma(alpha^{s-1} Z_s / ||Z_s|| (*) X + C_s), then
// a 1/S average. Requires binary, spatially aperiodic data and
// S (2GN+1) alpha^{S-1} < 2^1024.
EstimatorHead build_estimator_head(std::span<const ChannelTensor> binary_dataset);

struct ConstructiveEstimator {
    BinaryDecompositionSpec spec;
    EquivariantNetwork decomposition;
    EquivariantNetwork head;
    EquivariantNetwork network;  // head after decomposition
    std::vector<std::size_t> order;
    double alpha = 0.0;
    AperiodicityCertificate certificate;

    std::size_t depth() const noexcept { return network.depth(); }
    // Widest layer, counted in channels (multiply by N for neurons).
    std::size_t width() const noexcept { return network.max_channels(); }
};

// Throws RangeError for non-integer or out-of-range values and
// PreconditionError for periodic datasets.
ConstructiveEstimator build_restorer(std::span<const ChannelTensor> dataset, std::size_t bits_q,
                                     std::string dataset_id = {});

}  // namespace eqr
