#include "eqr/constructive.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eqr/error.hpp"

namespace eqr {

namespace {

void require_uniform(std::span<const ChannelTensor> dataset) {
    if (dataset.empty()) throw InputError("dataset is empty");
    for (std::size_t s = 1; s < dataset.size(); ++s) {
        if (dataset[s].shape() != dataset[0].shape() || dataset[s].channels() != dataset[0].channels()) {
            throw InputError("dataset element " + std::to_string(s) + " has shape " +
                             std::to_string(dataset[s].channels()) + "x" + dataset[s].shape().to_string() +
                             ", expected " + std::to_string(dataset[0].channels()) + "x" +
                             dataset[0].shape().to_string());
        }
    }
}

// Does T^{(m, c)}(x) equal y? `table` is the gather table of m.
bool shifted_equals(const ChannelTensor& x, const ChannelTensor& y, const std::vector<std::size_t>& table,
                    std::size_t channel_shift) {
    const std::size_t p = x.channels();
    for (std::size_t c = 0; c < p; ++c) {
        auto src = x.channel((c + p - channel_shift) % p);
        auto dst = y.channel(c);
        for (std::size_t k = 0; k < dst.size(); ++k) {
            if (src[table[k]] != dst[k]) return false;
        }
    }
    return true;
}

// Row-major K_out x K_in scalar layer, lifted channelwise below.
struct ScalarLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> biases;

    ScalarLayer(std::size_t in_, std::size_t out_) : in(in_), out(out_), weights(in_ * out_, 0.0), biases(out_, 0.0) {}
    double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
    void pass_through(std::size_t rows) {
        for (std::size_t i = 0; i < rows; ++i) w(i, i) = 1.0;
    }
};

// Scalar bit extractor on x in [0, 2^{Q+1}): state (x, x_Q, ..., x_{Q-q}),
// ending in (x_0, x_Q, ..., x_1).
std::vector<ScalarLayer> scalar_bit_layers(std::size_t q_bits) {
    const auto pow2 = [](std::size_t e) { return std::ldexp(1.0, static_cast<int>(e)); };
    std::vector<ScalarLayer> layers;
    for (std::size_t q = 0; q < q_bits; ++q) {
        // u = sigma(2^{Q-q} + sum_{j>Q-q} 2^j x_j - x)
        ScalarLayer extract(q + 1, q + 2);
        extract.pass_through(q + 1);
        extract.w(q + 1, 0) = -1.0;
        for (std::size_t i = 1; i <= q; ++i) extract.w(q + 1, i) = pow2(q_bits - i + 1);
        extract.biases[q + 1] = pow2(q_bits - q);
        layers.push_back(std::move(extract));
        // x_{Q-q} = sigma(1 - u)
        ScalarLayer flip(q + 2, q + 2);
        flip.pass_through(q + 1);
        flip.w(q + 1, q + 1) = -1.0;
        flip.biases[q + 1] = 1.0;
        layers.push_back(std::move(flip));
    }
    // 1 - x_0 = sigma(1 - x + sum_{j>=1} 2^j x_j), then x_0 = sigma(1 - (1 - x_0)).
    ScalarLayer low(q_bits + 1, q_bits + 1);
    low.pass_through(q_bits + 1);
    low.w(0, 0) = -1.0;
    for (std::size_t i = 1; i <= q_bits; ++i) low.w(0, i) = pow2(q_bits - i + 1);
    low.biases[0] = 1.0;
    layers.push_back(std::move(low));
    ScalarLayer last(q_bits + 1, q_bits + 1);
    last.pass_through(q_bits + 1);
    last.w(0, 0) = -1.0;
    last.biases[0] = 1.0;
    layers.push_back(std::move(last));
    return layers;
}

// Lift a scalar layer to P independent channel groups of pointwise filters.
// `row_order[k]` picks which scalar row feeds output slot k within a group.
EquivariantLayer lift(const ScalarLayer& scalar, std::size_t groups, const Shape& shape,
                      const std::vector<std::size_t>& row_order) {
    const std::size_t in = scalar.in * groups;
    const std::size_t out = scalar.out * groups;
    std::vector<CircularFilter> filters(in * out, CircularFilter::zero(shape));
    std::vector<double> biases(out, 0.0);
    for (std::size_t p = 0; p < groups; ++p) {
        for (std::size_t k = 0; k < scalar.out; ++k) {
            const std::size_t row = row_order[k];
            const std::size_t oc = p * scalar.out + k;
            biases[oc] = scalar.biases[row];
            for (std::size_t j = 0; j < scalar.in; ++j) {
                const double w = scalar.weights[row * scalar.in + j];
                if (w != 0.0) filters[oc * in + p * scalar.in + j] = CircularFilter::pointwise(shape, w);
            }
        }
    }
    return EquivariantLayer(shape, in, out, std::move(filters), std::move(biases), Activation::relu);
}

CircularFilter data_filter(std::span<const double> plane, const Shape& shape, double scale) {
    std::vector<Tap> taps;
    for (std::size_t k = 0; k < plane.size(); ++k) {
        if (plane[k] != 0.0) taps.push_back({k, plane[k] * scale});
    }
    if (taps.size() * 2 <= plane.size()) return CircularFilter::sparse(shape, std::move(taps));
    CircularTensor base(shape);
    for (std::size_t k = 0; k < plane.size(); ++k) base[k] = plane[k] * scale;
    return CircularFilter::dense(std::move(base));
}

}  // namespace

std::string AperiodicityCertificate::describe() const {
    std::string id = dataset_id.empty() ? std::string("dataset") : "dataset '" + dataset_id + "'";
    if (aperiodic) return id + ": aperiodic";
    if (zero_element) return id + ": periodic (element " + std::to_string(*zero_element) + " is all zero)";
    if (witness) {
        return id + ": periodic (T^" + to_string(witness->shift) + " with channel shift " +
               std::to_string(witness->channel_shift) + " maps element " + std::to_string(witness->source) +
               " onto element " + std::to_string(witness->target) + ")";
    }
    return id + ": periodic";
}

AperiodicityCertificate check_aperiodic(std::span<const ChannelTensor> dataset, ShiftDomain domain,
                                        std::string dataset_id) {
    require_uniform(dataset);
    AperiodicityCertificate cert;
    cert.dataset_id = std::move(dataset_id);

    for (std::size_t s = 0; s < dataset.size(); ++s) {
        const auto v = dataset[s].values();
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) {
            cert.zero_element = s;
            return cert;
        }
    }

    // Translations permute values, so differing sorted multisets never match.
    std::vector<std::vector<double>> multisets;
    multisets.reserve(dataset.size());
    for (const auto& x : dataset) {
        std::vector<double> sorted(x.values().begin(), x.values().end());
        std::sort(sorted.begin(), sorted.end());
        multisets.push_back(std::move(sorted));
    }

    const Shape& shape = dataset[0].shape();
    const std::size_t channel_shifts = domain == ShiftDomain::spatial_and_channel ? dataset[0].channels() : 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        const TranslationVector m{delta_inverse(k, shape)};
        const auto table = translation_table(shape, m);
        for (std::size_t c = 0; c < channel_shifts; ++c) {
            for (std::size_t s = 0; s < dataset.size(); ++s) {
                for (std::size_t t = s; t < dataset.size(); ++t) {
                    if (s == t && k == 0 && c == 0) continue;
                    if (multisets[s] != multisets[t]) continue;
                    if (shifted_equals(dataset[s], dataset[t], table, c)) {
                        cert.witness = AperiodicityWitness{s, t, m, static_cast<std::int64_t>(c)};
                        return cert;
                    }
                }
            }
        }
    }
    cert.aperiodic = true;
    return cert;
}

double BinaryDecompositionSpec::value_limit() const { return std::ldexp(1.0, static_cast<int>(bits_q + 1)); }

EquivariantNetwork build_binary_network(const BinaryDecompositionSpec& spec, const Shape& shape) {
    if (spec.bits_q > kMaxBitsQ) {
        throw CapacityError("bit depth Q=" + std::to_string(spec.bits_q) + " exceeds " + std::to_string(kMaxBitsQ));
    }
    if (spec.channels == 0) throw InputError("binary decomposition needs at least one channel");
    const auto scalar = scalar_bit_layers(spec.bits_q);
    std::vector<EquivariantLayer> layers;
    layers.reserve(scalar.size());
    for (std::size_t l = 0; l < scalar.size(); ++l) {
        std::vector<std::size_t> order(scalar[l].out);
        std::iota(order.begin(), order.end(), 0);
        if (l + 1 == scalar.size()) {
            // (x_0, x_Q, ..., x_1) -> (x_0, x_1, ..., x_Q)
            for (std::size_t j = 1; j <= spec.bits_q; ++j) order[j] = spec.bits_q - j + 1;
        }
        layers.push_back(lift(scalar[l], spec.channels, shape, order));
    }
    return EquivariantNetwork(shape, std::move(layers));
}

double minimal_alpha(std::size_t binary_channels, std::size_t n) {
    const double gn = static_cast<double>(binary_channels) * static_cast<double>(n);
    return 1.0 + gn + 2.0 * gn * gn;
}

EstimatorHead build_estimator_head(std::span<const ChannelTensor> binary_dataset) {
    require_uniform(binary_dataset);
    const Shape& shape = binary_dataset[0].shape();
    const std::size_t g = binary_dataset[0].channels();
    const std::size_t n = shape.size();
    const std::size_t count = binary_dataset.size();

    for (std::size_t s = 0; s < count; ++s) {
        for (double v : binary_dataset[s].values()) {
            if (v != 0.0 && v != 1.0) {
                throw PreconditionError("estimator head needs binary data; element " + std::to_string(s) +
                                        " holds " + std::to_string(v));
            }
        }
    }
    EstimatorHead head;
    // Only spatial coincidences break the construction; channel shifts are irrelevant here.
    head.certificate = check_aperiodic(binary_dataset, ShiftDomain::spatial, "binary decomposition");
    if (!head.certificate.aperiodic) {
        throw PreconditionError("estimator head requires an aperiodic dataset: " + head.certificate.describe());
    }

    head.alpha = minimal_alpha(g, n);
    const double gn2 = 2.0 * static_cast<double>(g) * static_cast<double>(n) + 1.0;
    const double log2_peak = std::log2(static_cast<double>(count)) + std::log2(gn2) +
                             static_cast<double>(count - 1) * std::log2(head.alpha);
    if (log2_peak >= 1024.0) {
        throw CapacityError("alpha^(S-1) = 2^" + std::to_string((count - 1) * std::log2(head.alpha)) +
                            " leaves no double headroom for S = " + std::to_string(count));
    }

    std::vector<double> norms(count);
    for (std::size_t s = 0; s < count; ++s) norms[s] = std::sqrt(inner(binary_dataset[s], binary_dataset[s]));
    head.order.resize(count);
    std::iota(head.order.begin(), head.order.end(), 0);
    std::stable_sort(head.order.begin(), head.order.end(), [&](auto a, auto b) { return norms[a] < norms[b]; });

    std::vector<CircularFilter> first_filters;
    first_filters.reserve(count * g);
    std::vector<double> first_biases(count);
    double previous_norm = 1.0 / gn2;
    for (std::size_t s = 0; s < count; ++s) {
        const auto& z = binary_dataset[head.order[s]];
        const double norm = norms[head.order[s]];
        const double scale = std::pow(head.alpha, static_cast<double>(s));
        for (std::size_t r = 0; r < g; ++r) first_filters.push_back(data_filter(z.channel(r), shape, scale / norm));
        // The per-input-channel biases C^{s,r} sum to one constant per output channel.
        first_biases[s] = scale / gn2 - scale * previous_norm;
        head.norms.push_back(norm);
        previous_norm = norm;
    }

    std::vector<CircularFilter> average(count, CircularFilter::pointwise(shape, 1.0 / static_cast<double>(count)));
    std::vector<EquivariantLayer> layers;
    layers.emplace_back(shape, g, count, std::move(first_filters), std::move(first_biases), Activation::relu);
    layers.emplace_back(shape, count, 1, std::move(average), std::vector<double>{0.0}, Activation::relu);
    head.net = EquivariantNetwork(shape, std::move(layers));
    return head;
}

ConstructiveEstimator build_restorer(std::span<const ChannelTensor> dataset, std::size_t bits_q,
                                     std::string dataset_id) {
    require_uniform(dataset);
    ConstructiveEstimator est;
    est.spec = BinaryDecompositionSpec{bits_q, dataset[0].channels()};
    if (bits_q > kMaxBitsQ) throw CapacityError("bit depth Q=" + std::to_string(bits_q) + " is too large");
    const double limit = est.spec.value_limit();
    for (std::size_t s = 0; s < dataset.size(); ++s) {
        for (double v : dataset[s].values()) {
            if (!(v >= 0.0 && v < limit) || std::floor(v) != v) {
                throw RangeError("element " + std::to_string(s) + " holds " + std::to_string(v) +
                                 ", outside the integer range [0, " + std::to_string(static_cast<long long>(limit)) +
                                 ")");
            }
        }
    }
    est.certificate = check_aperiodic(dataset, ShiftDomain::spatial_and_channel, std::move(dataset_id));
    if (!est.certificate.aperiodic) {
        throw PreconditionError("restorer requires an aperiodic dataset: " + est.certificate.describe());
    }

    const Shape& shape = dataset[0].shape();
    est.decomposition = build_binary_network(est.spec, shape);
    std::vector<ChannelTensor> binary;
    binary.reserve(dataset.size());
    for (const auto& x : dataset) binary.push_back(forward(est.decomposition, x));

    auto head = build_estimator_head(binary);
    est.head = std::move(head.net);
    est.order = std::move(head.order);
    est.alpha = head.alpha;
    est.network = est.decomposition.then(est.head);
    return est;
}

}  // namespace eqr
