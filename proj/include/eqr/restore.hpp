#pragma once

// Restoration: read the translation off an estimator's argmax and undo it;
// rotations go through a log-polar resampling that turns them into shifts
// along the angular axis.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eqr/equi_net.hpp"
#include "eqr/tensor.hpp"

namespace eqr {

// Estimates at or below this margin are flagged as degenerate.
inline constexpr double kDegenerateMargin = 1e-6;

struct RestorationResult {
    TranslationVector shift;            // translation mode: M-hat
    std::optional<std::size_t> bin;     // rotation mode: angular bin k-hat
    ChannelTensor restored;
    std::vector<double> estimator_output;
    double margin = 0.0;                // output at the argmax minus the runner-up
    bool degenerate = false;
};

// M-hat = delta^{-1}(argmax F(X')), ties to the smallest flat index.
TranslationVector estimate_translation(const EquivariantNetwork& net, const ChannelTensor& x);
// Total: always returns a result; callers may reject on `degenerate`.
RestorationResult restore(const EquivariantNetwork& net, const ChannelTensor& x);

enum class RadialSpacing { logarithmic, linear };

// Polar sampling grid for 2-D images. Channel i holds radius R a^i (or
// i R / radial_bins when linear); position j holds angle 2 pi j / angular_bins.
struct PolarGridSpec {
    std::size_t angular_bins = 36;
    std::size_t radial_bins = 36;
    double radius = 112.0;
    double decay = 0.92;
    double center_x = 0.0;  // continuous image coordinates; pixel (r, c) is centred at (c + 0.5, r + 0.5)
    double center_y = 0.0;
    RadialSpacing spacing = RadialSpacing::logarithmic;
    // Round polar samples to integers (for estimators built on integer data).
    bool quantize = false;

    void validate() const;
    double sample_radius(std::size_t ring) const;
    double bin_degrees() const { return 360.0 / static_cast<double>(angular_bins); }

    // Keys: angular_bins, radial_bins, R, a, center_x, center_y, radial
    // (log|linear), quantize.
    static PolarGridSpec parse(std::string_view text);
    std::string to_text() const;
    // Centred on the image with the largest radius that fits.
    static PolarGridSpec centered(const Shape& image, std::size_t angular_bins, std::size_t radial_bins,
                                  double decay);
};

// Bilinear sample of a rows x cols image at continuous (x, y); neighbours
// outside the image read 0.
double sample_bilinear(const CircularTensor& image, double x, double y);

// radial_bins channels x angular_bins positions. Throws InputError when the
// outer radius leaves the image.
ChannelTensor to_polar(const CircularTensor& image, const PolarGridSpec& spec);

// out(p) = image(center + R_{-theta}(p - center)), so that
// to_polar(rotate_image(x, k * bin)) is to_polar(x) shifted by k.
CircularTensor rotate_image(const CircularTensor& image, double degrees, double center_x, double center_y);

// Estimate the angular bin from the polar tensor and rotate the image back.
RestorationResult restore_rotation(const EquivariantNetwork& net, const CircularTensor& image,
                                   const PolarGridSpec& spec);

struct LabeledTensor {
    ChannelTensor tensor;
    std::string label;
};

// Label of the training element with the largest inner product; ties go to
// the earliest element.
std::string nn_classify(std::span<const LabeledTensor> train_set, const ChannelTensor& x);

struct AccuracyTable {
    std::vector<std::size_t> scopes;
    std::vector<double> without_restorer;
    std::vector<double> with_restorer;

    double effect(std::size_t i) const { return with_restorer[i] - without_restorer[i]; }
    // Rows wo, w, effect; header lists the shift scopes.
    std::string to_csv() const;
};

// For each scope s in [0, max_shift], every element is presented at every
// shift with all |m_i| <= s and classified with and without restoration.
AccuracyTable eval_grid(const EquivariantNetwork& net, std::span<const LabeledTensor> dataset,
                        std::size_t max_shift);

}  // namespace eqr
