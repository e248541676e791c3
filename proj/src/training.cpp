#include "eqr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "eqr/config.hpp"
#include "eqr/constructive.hpp"
#include "eqr/error.hpp"

namespace eqr {

namespace {

// Portable uniform double in [0, 1) from the raw 64-bit stream.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<std::size_t> gather_for_offset(const Shape& shape, std::size_t offset) {
    return translation_table(shape, -TranslationVector{delta_inverse(offset, shape)});
}

std::size_t integer_root(std::size_t value, std::size_t degree) {
    for (std::size_t k = 1;; ++k) {
        std::size_t p = 1;
        for (std::size_t i = 0; i < degree; ++i) p *= k;
        if (p == value) return k;
        if (p > value) return 0;
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (depth == 0) throw InputError("train config: depth must be at least 1");
    if (channels == 0) throw InputError("train config: channels must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw InputError("train config: learning_rate must be positive");
    }
    if (batch_size == 0) throw InputError("train config: batch_size must be at least 1");
    if (loss != "softmax_ce") throw InputError("train config: unsupported loss '" + loss + "'");
}

TrainConfig TrainConfig::parse(std::string_view text) {
    const auto kv = KeyValues::parse(text);
    kv.reject_unknown({"depth", "channels", "support", "learning_rate", "epochs", "batch_size", "seed", "loss",
                       "bias_free", "augment", "probe_equivariance"});
    TrainConfig c;
    c.depth = kv.get_uint("depth", c.depth);
    c.channels = kv.get_uint("channels", c.channels);
    c.support = kv.get_uint("support", c.support);
    c.learning_rate = kv.get_double("learning_rate", c.learning_rate);
    c.epochs = kv.get_uint("epochs", c.epochs);
    c.batch_size = kv.get_uint("batch_size", c.batch_size);
    c.seed = kv.get_uint("seed", c.seed);
    c.loss = kv.get_string("loss", c.loss);
    c.bias_free = kv.get_bool("bias_free", c.bias_free);
    c.augment = kv.get_bool("augment", c.augment);
    c.probe_equivariance = kv.get_bool("probe_equivariance", c.probe_equivariance);
    c.validate();
    return c;
}

std::string TrainConfig::to_text() const {
    std::ostringstream out;
    out.precision(17);
    out << "depth=" << depth << "\nchannels=" << channels << "\nsupport=" << support
        << "\nlearning_rate=" << learning_rate << "\nepochs=" << epochs << "\nbatch_size=" << batch_size
        << "\nseed=" << seed << "\nloss=" << loss << "\nbias_free=" << (bias_free ? "true" : "false")
        << "\naugment=" << (augment ? "true" : "false")
        << "\nprobe_equivariance=" << (probe_equivariance ? "true" : "false") << "\n";
    return out.str();
}

double loss(std::span<const double> output, std::size_t target) {
    if (output.size() < 2) throw ShapeError("loss needs at least two output components");
    if (target >= output.size()) throw RangeError("loss target out of range");
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : output) {
        if (!std::isfinite(v)) throw NumericError("non-finite network output");
        peak = std::max(peak, v);
    }
    double sum = 0.0;
    for (double v : output) sum += std::exp(v - peak);
    return peak + std::log(sum) - output[target];
}

std::vector<double> loss_gradient(std::span<const double> output, std::size_t target) {
    if (output.size() < 2) throw ShapeError("loss needs at least two output components");
    if (target >= output.size()) throw RangeError("loss target out of range");
    double peak = -std::numeric_limits<double>::infinity();
    for (double v : output) {
        if (!std::isfinite(v)) throw NumericError("non-finite network output");
        peak = std::max(peak, v);
    }
    std::vector<double> g(output.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < output.size(); ++i) sum += g[i] = std::exp(output[i] - peak);
    for (auto& v : g) v /= sum;
    g[target] -= 1.0;
    return g;
}

const ChannelTensor& GradientTape::forward(const ChannelTensor& x) {
    inputs_.clear();
    pre_.clear();
    ChannelTensor h = x;
    for (const auto& layer : net_->layers()) {
        inputs_.push_back(h);
        pre_.push_back(pre_activation(layer, h));
        h = pre_.back();
        if (layer.activation() == Activation::relu) {
            for (auto& v : h.values()) v = std::max(v, 0.0);
        }
    }
    output_ = std::move(h);
    return output_;
}

NetworkGradient GradientTape::backward(std::span<const double> output_grad) const {
    if (inputs_.size() != net_->depth()) throw InputError("backward called before forward");
    if (output_grad.size() != output_.size()) throw ShapeError("output gradient has the wrong size");
    const Shape& shape = net_->shape();
    const std::size_t n = shape.size();

    NetworkGradient grads(net_->depth());
    ChannelTensor g(output_.shape(), output_.channels(), std::vector<double>(output_grad.begin(), output_grad.end()));
    for (std::size_t l = net_->depth(); l-- > 0;) {
        const auto& layer = net_->layer(l);
        if (layer.activation() == Activation::relu) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(pre_[l][i] > 0.0)) g[i] = 0.0;
            }
        }
        const auto& x = inputs_[l];
        ChannelTensor gin(shape, layer.in_channels());
        auto& lg = grads[l];
        lg.taps.resize(layer.filters().size());
        lg.biases.assign(layer.out_channels(), 0.0);
        for (std::size_t k = 0; k < layer.out_channels(); ++k) {
            auto gk = g.channel(k);
            double bias_grad = 0.0;
            for (double v : gk) bias_grad += v;
            lg.biases[k] = bias_grad;
            for (std::size_t r = 0; r < layer.in_channels(); ++r) {
                const auto& f = layer.filter(k, r);
                auto xr = x.channel(r);
                auto gr = gin.channel(r);
                auto& tap_grads = lg.taps[k * layer.in_channels() + r];
                tap_grads.assign(f.taps().size(), 0.0);
                for (std::size_t t = 0; t < f.taps().size(); ++t) {
                    const auto& tap = f.taps()[t];
                    const auto table = gather_for_offset(shape, tap.offset);
                    double dw = 0.0;
                    for (std::size_t m = 0; m < n; ++m) {
                        dw += gk[m] * xr[table[m]];
                        gr[table[m]] += tap.weight * gk[m];
                    }
                    if (!std::isfinite(dw)) {
                        throw NumericError("non-finite gradient at layer " + std::to_string(l) + ", filter (" +
                                           std::to_string(k) + "," + std::to_string(r) + "), offset " +
                                           std::to_string(tap.offset));
                    }
                    tap_grads[t] = dw;
                }
            }
        }
        g = std::move(gin);
    }
    return grads;
}

LossAndGradient grad(const EquivariantNetwork& net, const ChannelTensor& x, std::size_t target) {
    GradientTape tape(net);
    const auto& out = tape.forward(x);
    if (out.channels() != 1) throw ShapeError("estimator networks must emit exactly one channel");
    LossAndGradient result;
    result.loss = loss(out.values(), target);
    result.gradient = tape.backward(loss_gradient(out.values(), target));
    return result;
}

NetworkGradient zero_gradient(const EquivariantNetwork& net) {
    NetworkGradient g(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& layer = net.layer(l);
        for (const auto& f : layer.filters()) g[l].taps.emplace_back(f.taps().size(), 0.0);
        g[l].biases.assign(layer.out_channels(), 0.0);
    }
    return g;
}

void accumulate(NetworkGradient& into, const NetworkGradient& g, double scale) {
    if (into.size() != g.size()) throw ShapeError("gradient depth mismatch");
    for (std::size_t l = 0; l < g.size(); ++l) {
        for (std::size_t f = 0; f < g[l].taps.size(); ++f) {
            for (std::size_t t = 0; t < g[l].taps[f].size(); ++t) into[l].taps[f][t] += scale * g[l].taps[f][t];
        }
        for (std::size_t k = 0; k < g[l].biases.size(); ++k) into[l].biases[k] += scale * g[l].biases[k];
    }
}

EquivariantNetwork sgd_step(const EquivariantNetwork& net, const NetworkGradient& g, double lr, bool update_biases) {
    if (g.size() != net.depth()) throw ShapeError("gradient depth mismatch");
    std::vector<EquivariantLayer> layers;
    layers.reserve(net.depth());
    for (std::size_t l = 0; l < net.depth(); ++l) {
        const auto& layer = net.layer(l);
        std::vector<CircularFilter> filters;
        filters.reserve(layer.filters().size());
        for (std::size_t f = 0; f < layer.filters().size(); ++f) {
            const auto& old = layer.filters()[f];
            std::vector<Tap> taps(old.taps().begin(), old.taps().end());
            for (std::size_t t = 0; t < taps.size(); ++t) taps[t].weight -= lr * g[l].taps[f][t];
            if (old.is_sparse()) {
                filters.push_back(CircularFilter::sparse(net.shape(), std::move(taps)));
            } else {
                CircularTensor base(net.shape());
                for (const auto& tap : taps) base[tap.offset] = tap.weight;
                filters.push_back(CircularFilter::dense(std::move(base)));
            }
        }
        std::vector<double> biases(layer.biases().begin(), layer.biases().end());
        if (update_biases) {
            for (std::size_t k = 0; k < biases.size(); ++k) biases[k] -= lr * g[l].biases[k];
        }
        layers.emplace_back(net.shape(), layer.in_channels(), layer.out_channels(), std::move(filters),
                            std::move(biases), layer.activation());
    }
    return EquivariantNetwork(net.shape(), std::move(layers));
}

std::vector<std::size_t> patch_offsets(const Shape& shape, std::size_t support) {
    const std::size_t d = shape.arity();
    std::size_t extent = 3;
    if (support != 0) {
        extent = integer_root(support, d);
        if (extent == 0 || extent % 2 == 0) {
            throw InputError("support " + std::to_string(support) + " is not an odd " + std::to_string(d) +
                             "-th power");
        }
    }
    for (auto n : shape.dims()) {
        if (n < extent) {
            throw InputError("patch of extent " + std::to_string(extent) + " does not fit shape " + shape.to_string());
        }
    }
    const auto radius = static_cast<std::int64_t>(extent / 2);
    std::size_t count = 1;
    for (std::size_t i = 0; i < d; ++i) count *= extent;
    std::vector<std::size_t> offsets;
    offsets.reserve(count);
    Index idx(d);
    for (std::size_t k = 0; k < count; ++k) {
        std::size_t rest = k;
        for (std::size_t a = d; a-- > 0;) {
            idx[a] = static_cast<std::int64_t>(rest % extent) - radius;
            rest /= extent;
        }
        offsets.push_back(delta(idx, shape));
    }
    return offsets;
}

EquivariantNetwork init_network(const Shape& shape, std::size_t in_channels, const TrainConfig& config) {
    config.validate();
    if (in_channels == 0) throw InputError("input must have at least one channel");
    const auto offsets = patch_offsets(shape, config.support);
    std::mt19937_64 rng(config.seed);
    std::vector<EquivariantLayer> layers;
    std::size_t in = in_channels;
    for (std::size_t l = 0; l < config.depth; ++l) {
        const std::size_t out = l + 1 == config.depth ? 1 : config.channels;
        const double bound = 1.0 / std::sqrt(static_cast<double>(offsets.size() * in));
        std::vector<CircularFilter> filters;
        filters.reserve(in * out);
        for (std::size_t f = 0; f < in * out; ++f) {
            std::vector<Tap> taps;
            taps.reserve(offsets.size());
            for (auto o : offsets) taps.push_back({o, (2.0 * uniform01(rng) - 1.0) * bound});
            filters.push_back(CircularFilter::sparse(shape, std::move(taps)));
        }
        layers.emplace_back(shape, in, out, std::move(filters), std::vector<double>(out, 0.0), Activation::relu);
        in = out;
    }
    return EquivariantNetwork(shape, std::move(layers));
}

EstimatorStats evaluate_estimator(const EquivariantNetwork& net, std::span<const ChannelTensor> dataset) {
    if (dataset.empty()) throw InputError("cannot evaluate an estimator on an empty dataset");
    EstimatorStats stats;
    stats.count = dataset.size();
    stats.min_margin = std::numeric_limits<double>::infinity();
    std::size_t hits = 0;
    double margin_sum = 0.0;
    for (const auto& x : dataset) {
        const auto out = forward(net, x);
        const double m = margin_at_zero(out.values());
        // A tie at the top is not an estimate; dead nets would otherwise score 1.
        if (m > 0.0) ++hits;
        stats.min_margin = std::min(stats.min_margin, m);
        margin_sum += m;
    }
    stats.accuracy = static_cast<double>(hits) / static_cast<double>(dataset.size());
    stats.mean_margin = margin_sum / static_cast<double>(dataset.size());
    return stats;
}

TrainResult train(std::span<const ChannelTensor> dataset, const TrainConfig& config) {
    config.validate();
    if (dataset.empty()) throw InputError("cannot train on an empty dataset");
    const auto cert = check_aperiodic(dataset);
    TrainResult result;
    if (!cert.aperiodic) {
        result.warnings.push_back("dataset is not aperiodic, no estimator can be exact on it: " + cert.describe());
    }
    const Shape& shape = dataset[0].shape();
    result.net = init_network(shape, dataset[0].channels(), config);

    std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 probe_rng(config.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle(order, rng);
        try {
            for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
                const std::size_t stop = std::min(order.size(), start + config.batch_size);
                auto total = zero_gradient(result.net);
                for (std::size_t i = start; i < stop; ++i) {
                    const auto& x = dataset[order[i]];
                    LossAndGradient lg;
                    if (config.augment) {
                        const std::size_t shift = uniform_index(rng, shape.size());
                        lg = grad(result.net, translate(x, TranslationVector{delta_inverse(shift, shape)}), shift);
                    } else {
                        lg = grad(result.net, x);
                    }
                    accumulate(total, lg.gradient, 1.0 / static_cast<double>(stop - start));
                }
                result.net = sgd_step(result.net, total, config.learning_rate, !config.bias_free);
            }
        } catch (const NumericError& e) {
            result.diverged = true;
            result.message = "diverged in epoch " + std::to_string(epoch) + ": " + e.what();
            return result;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        for (const auto& x : dataset) loss_sum += loss(forward(result.net, x).values());
        rec.loss = loss_sum / static_cast<double>(dataset.size());
        if (!std::isfinite(rec.loss)) {
            result.diverged = true;
            result.message = "non-finite loss after epoch " + std::to_string(epoch);
            result.log.push_back(rec);
            return result;
        }
        const auto stats = evaluate_estimator(result.net, dataset);
        rec.accuracy = stats.accuracy;
        rec.min_margin = stats.min_margin;
        result.log.push_back(rec);

        if (config.probe_equivariance) {
            ChannelTensor probe(shape, dataset[0].channels());
            for (auto& v : probe.values()) v = uniform01(probe_rng);
            const auto report = check_equivariance_exhaustive(result.net, probe, 1e-9);
            if (!report.within_tolerance) {
                result.warnings.push_back("epoch " + std::to_string(epoch) + ": equivariance deviation " +
                                          std::to_string(report.max_deviation));
            }
        }
    }
    return result;
}

std::string format_training_log(std::span<const EpochRecord> log) {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,loss,argmax0_accuracy,min_margin\n";
    for (const auto& r : log) out << r.epoch << ',' << r.loss << ',' << r.accuracy << ',' << r.min_margin << '\n';
    return out.str();
}

}  // namespace eqr
