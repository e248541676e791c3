#pragma once

// Gradient-trained translation estimators: a stack of sparse circular
// filters trained so that output component 0 dominates on every sample.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "eqr/equi_net.hpp"
#include "eqr/tensor.hpp"

namespace eqr {

struct TrainConfig {
    std::size_t depth = 6;
    std::size_t channels = 1;  // output channels of every hidden layer
    std::size_t support = 0;   // taps per filter, a k^d patch; 0 means 3^d
    double learning_rate = 1e-2;
    std::size_t epochs = 200;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    std::string loss = "softmax_ce";
    bool bias_free = true;
    // Present each sample at a random translation with the target moved along.
    bool augment = false;
    // Check equivariance on a probe input after every epoch.
    bool probe_equivariance = false;

    void validate() const;
    // Flat key=value lines; unknown keys are rejected.
    static TrainConfig parse(std::string_view text);
    std::string to_text() const;
};

// Softmax cross-entropy towards `target`: -out[target] + log sum_i exp(out[i]).
double loss(std::span<const double> output, std::size_t target = 0);
// d loss / d output.
std::vector<double> loss_gradient(std::span<const double> output, std::size_t target = 0);

struct LayerGradient {
    std::vector<std::vector<double>> taps;  // per filter, aligned with CircularFilter::taps()
    std::vector<double> biases;
};
using NetworkGradient = std::vector<LayerGradient>;

// Records one forward pass so reverse-mode gradients can be pulled back.
class GradientTape {
public:
    explicit GradientTape(const EquivariantNetwork& net) : net_(&net) {}

    const ChannelTensor& forward(const ChannelTensor& x);
    // Gradients of <output_grad, F(x)> for the recorded x. Throws
    // NumericError naming the layer and tap if anything is non-finite.
    NetworkGradient backward(std::span<const double> output_grad) const;

private:
    const EquivariantNetwork* net_;
    std::vector<ChannelTensor> inputs_;  // input of each layer
    std::vector<ChannelTensor> pre_;     // pre-activation of each layer
    ChannelTensor output_;
};

struct LossAndGradient {
    double loss = 0.0;
    NetworkGradient gradient;
};

// Loss of the single-channel output and its gradient w.r.t. every weight.
LossAndGradient grad(const EquivariantNetwork& net, const ChannelTensor& x, std::size_t target = 0);

NetworkGradient zero_gradient(const EquivariantNetwork& net);
void accumulate(NetworkGradient& into, const NetworkGradient& g, double scale = 1.0);
// w <- w - lr * g; biases move only when update_biases is set.
EquivariantNetwork sgd_step(const EquivariantNetwork& net, const NetworkGradient& g, double lr, bool update_biases);

// Offsets of the centred k^d patch used by trained filters.
std::vector<std::size_t> patch_offsets(const Shape& shape, std::size_t support);

// Uniform fan-in initialization of the configured architecture.
EquivariantNetwork init_network(const Shape& shape, std::size_t in_channels, const TrainConfig& config);

struct EpochRecord {
    std::size_t epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;  // fraction whose output has a strict maximum at 0
    double min_margin = 0.0;
};

struct TrainResult {
    EquivariantNetwork net;
    std::vector<EpochRecord> log;
    std::vector<std::string> warnings;
    bool diverged = false;
    std::string message;
};

TrainResult train(std::span<const ChannelTensor> dataset, const TrainConfig& config);

// CSV: epoch,loss,argmax0_accuracy,min_margin
std::string format_training_log(std::span<const EpochRecord> log);

struct EstimatorStats {
    std::size_t count = 0;
    double accuracy = 0.0;
    double min_margin = 0.0;
    double mean_margin = 0.0;
};

// Throws InputError on an empty dataset.
EstimatorStats evaluate_estimator(const EquivariantNetwork& net, std::span<const ChannelTensor> dataset);

}  // namespace eqr
