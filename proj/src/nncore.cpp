#include "fsn/nncore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fsn {

bool SeqTensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fsn

namespace fsn::nn {

ConvLayer1D::ConvLayer1D(std::size_t out, std::size_t in, std::size_t kernel, std::size_t dil)
    : out_channels(out), in_channels(in), kernel_size(kernel), dilation(dil),
      weights(out * in * kernel, 0.0), bias(out, 0.0) {
    validate();
}

void ConvLayer1D::validate() const {
    if (out_channels == 0 || in_channels == 0) {
        throw std::invalid_argument("ConvLayer1D: channel counts must be >= 1");
    }
    if (kernel_size == 0 || kernel_size % 2 == 0) {
        throw std::invalid_argument("ConvLayer1D: kernel size must be odd, got " +
                                    std::to_string(kernel_size));
    }
    if (dilation == 0) throw std::invalid_argument("ConvLayer1D: dilation must be >= 1");
    if (weights.size() != out_channels * in_channels * kernel_size || bias.size() != out_channels) {
        throw std::invalid_argument("ConvLayer1D: parameter buffers do not match shape");
    }
}

namespace {

// Weights regrouped per tap as contiguous (out x in) matrices.
std::vector<double> taps_major(const ConvLayer1D& layer) {
    std::vector<double> taps(layer.weights.size());
    const std::size_t plane = layer.out_channels * layer.in_channels;
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        for (std::size_t i = 0; i < layer.in_channels; ++i) {
            for (std::size_t j = 0; j < layer.kernel_size; ++j) {
                taps[j * plane + o * layer.in_channels + i] = layer.weight(o, i, j);
            }
        }
    }
    return taps;
}

}  // namespace

SeqTensor dilated_conv1d_forward(const SeqTensor& x, const ConvLayer1D& layer) {
    layer.validate();
    if (x.channels() != layer.in_channels) {
        throw std::invalid_argument("dilated_conv1d_forward: input has " +
                                    std::to_string(x.channels()) + " channels, layer expects " +
                                    std::to_string(layer.in_channels));
    }
    const auto len = static_cast<std::ptrdiff_t>(x.time_len());
    const auto pad = static_cast<std::ptrdiff_t>(layer.padding());
    const auto dil = static_cast<std::ptrdiff_t>(layer.dilation);
    const std::size_t n_in = layer.in_channels;
    const std::size_t plane = layer.out_channels * n_in;
    const std::vector<double> taps = taps_major(layer);
    SeqTensor out(x.time_len(), layer.out_channels);
    for (std::ptrdiff_t t = 0; t < len; ++t) {
        auto out_row = out.row(static_cast<std::size_t>(t));
        std::copy(layer.bias.begin(), layer.bias.end(), out_row.begin());
        for (std::size_t j = 0; j < layer.kernel_size; ++j) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) * dil - pad;
            if (src < 0 || src >= len) continue;
            const double* in_row = x.row(static_cast<std::size_t>(src)).data();
            const double* w = taps.data() + j * plane;
            for (std::size_t o = 0; o < layer.out_channels; ++o, w += n_in) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in_row[i];
                out_row[o] += acc;
            }
        }
    }
    return out;
}

ConvBackward dilated_conv1d_backward(const SeqTensor& grad_out, const SeqTensor& x,
                                     const ConvLayer1D& layer) {
    layer.validate();
    if (x.channels() != layer.in_channels || grad_out.time_len() != x.time_len() ||
        grad_out.channels() != layer.out_channels) {
        throw std::invalid_argument("dilated_conv1d_backward: grad " + shape_string(grad_out) +
                                    " does not match forward input " + shape_string(x));
    }
    const auto len = static_cast<std::ptrdiff_t>(x.time_len());
    const auto pad = static_cast<std::ptrdiff_t>(layer.padding());
    const auto dil = static_cast<std::ptrdiff_t>(layer.dilation);
    const std::size_t n_in = layer.in_channels;
    const std::size_t plane = layer.out_channels * n_in;
    const std::vector<double> taps = taps_major(layer);
    std::vector<double> grad_taps(taps.size(), 0.0);

    ConvBackward result{SeqTensor(x.time_len(), x.channels()),
                        {std::vector<double>(layer.weights.size(), 0.0),
                         std::vector<double>(layer.bias.size(), 0.0)}};
    auto& gb = result.grads.bias;
    for (std::ptrdiff_t t = 0; t < len; ++t) {
        const auto g_row = grad_out.row(static_cast<std::size_t>(t));
        for (std::size_t o = 0; o < layer.out_channels; ++o) gb[o] += g_row[o];
        for (std::size_t j = 0; j < layer.kernel_size; ++j) {
            const std::ptrdiff_t src = t + static_cast<std::ptrdiff_t>(j) * dil - pad;
            if (src < 0 || src >= len) continue;
            const double* in_row = x.row(static_cast<std::size_t>(src)).data();
            double* gx_row = result.grad_x.row(static_cast<std::size_t>(src)).data();
            const double* w = taps.data() + j * plane;
            double* gw = grad_taps.data() + j * plane;
            for (std::size_t o = 0; o < layer.out_channels; ++o, w += n_in, gw += n_in) {
                const double g = g_row[o];
                if (g == 0.0) continue;
                for (std::size_t i = 0; i < n_in; ++i) {
                    gw[i] += g * in_row[i];
                    gx_row[i] += g * w[i];
                }
            }
        }
    }
    auto& gw = result.grads.weights;
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        for (std::size_t i = 0; i < n_in; ++i) {
            for (std::size_t j = 0; j < layer.kernel_size; ++j) {
                gw[(o * n_in + i) * layer.kernel_size + j] = grad_taps[j * plane + o * n_in + i];
            }
        }
    }
    return result;
}

SeqTensor relu(const SeqTensor& x) {
    SeqTensor out = x;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

SeqTensor relu_backward(const SeqTensor& grad_out, const SeqTensor& x) {
    if (!grad_out.same_shape(x)) throw std::invalid_argument("relu_backward: shape mismatch");
    SeqTensor out = grad_out;
    const auto xv = x.values();
    auto ov = out.values();
    for (std::size_t n = 0; n < ov.size(); ++n) {
        if (!(xv[n] > 0.0)) ov[n] = 0.0;
    }
    return out;
}

namespace {

struct Tap {
    std::size_t lo;
    std::size_t hi;
    double alpha;
};

// Source rows and blend weight feeding output row t.
Tap upsample_tap(std::size_t t, std::size_t source_len, std::size_t target_len) {
    if (source_len == 1 || target_len == 1) return {0, 0, 0.0};
    const double s = static_cast<double>(t) * static_cast<double>(source_len - 1) /
                     static_cast<double>(target_len - 1);
    auto lo = static_cast<std::size_t>(std::floor(s));
    lo = std::min(lo, source_len - 1);
    const double alpha = s - static_cast<double>(lo);
    const std::size_t hi = alpha > 0.0 ? std::min(lo + 1, source_len - 1) : lo;
    return {lo, hi, alpha};
}

}  // namespace

SeqTensor bilinear_upsample_1d(const SeqTensor& x, std::size_t target_len) {
    if (target_len < x.time_len()) {
        throw std::invalid_argument("bilinear_upsample_1d: target length " +
                                    std::to_string(target_len) + " < source length " +
                                    std::to_string(x.time_len()));
    }
    SeqTensor out(target_len, x.channels());
    for (std::size_t t = 0; t < target_len; ++t) {
        const Tap tap = upsample_tap(t, x.time_len(), target_len);
        const auto lo = x.row(tap.lo);
        const auto hi = x.row(tap.hi);
        auto dst = out.row(t);
        for (std::size_t c = 0; c < x.channels(); ++c) {
            dst[c] = (1.0 - tap.alpha) * lo[c] + tap.alpha * hi[c];
        }
    }
    return out;
}

SeqTensor bilinear_upsample_1d_backward(const SeqTensor& grad_out, std::size_t source_len) {
    if (source_len == 0 || grad_out.time_len() < source_len) {
        throw std::invalid_argument("bilinear_upsample_1d_backward: bad source length");
    }
    SeqTensor grad_x(source_len, grad_out.channels());
    for (std::size_t t = 0; t < grad_out.time_len(); ++t) {
        const Tap tap = upsample_tap(t, source_len, grad_out.time_len());
        const auto g = grad_out.row(t);
        auto lo = grad_x.row(tap.lo);
        auto hi = grad_x.row(tap.hi);
        for (std::size_t c = 0; c < g.size(); ++c) {
            lo[c] += (1.0 - tap.alpha) * g[c];
            hi[c] += tap.alpha * g[c];
        }
    }
    return grad_x;
}

namespace {

void softmax_into(std::span<const double> in, std::span<double> out) {
    const double peak = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        out[k] = std::exp(in[k] - peak);
        sum += out[k];
    }
    for (double& v : out) v /= sum;
}

double log_sum_exp(std::span<const double> in) {
    const double peak = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (double v : in) sum += std::exp(v - peak);
    return peak + std::log(sum);
}

}  // namespace

SeqTensor framewise_softmax(const SeqTensor& x) {
    SeqTensor out(x.time_len(), x.channels());
    for (std::size_t t = 0; t < x.time_len(); ++t) softmax_into(x.row(t), out.row(t));
    return out;
}

std::vector<double> softmax_vec(std::span<const double> x) {
    if (x.empty()) throw std::invalid_argument("softmax_vec: empty input");
    std::vector<double> out(x.size());
    softmax_into(x, out);
    return out;
}

LossResult framewise_cross_entropy(const LossInput& input) {
    if (input.logits.empty() || input.logits.size() != input.labels.size()) {
        throw std::invalid_argument("framewise_cross_entropy: batch size mismatch");
    }
    const double inv_batch = 1.0 / static_cast<double>(input.logits.size());
    LossResult result;
    result.grad_logits.reserve(input.logits.size());
    for (std::size_t b = 0; b < input.logits.size(); ++b) {
        const SeqTensor& logits = input.logits[b];
        const SeqTensor& labels = input.labels[b];
        if (!logits.same_shape(labels)) {
            throw std::invalid_argument("framewise_cross_entropy: labels " + shape_string(labels) +
                                        " vs logits " + shape_string(logits));
        }
        SeqTensor grad(logits.time_len(), logits.channels());
        for (std::size_t t = 0; t < logits.time_len(); ++t) {
            const auto y = labels.row(t);
            std::size_t hot = y.size();
            for (std::size_t k = 0; k < y.size(); ++k) {
                if (y[k] == 1.0 && hot == y.size()) {
                    hot = k;
                } else if (y[k] != 0.0) {
                    hot = y.size() + 1;
                    break;
                }
            }
            if (hot >= y.size()) {
                throw std::invalid_argument("framewise_cross_entropy: label row " +
                                            std::to_string(t) + " of sample " + std::to_string(b) +
                                            " is not one-hot");
            }
            const auto o = logits.row(t);
            result.loss += inv_batch * (log_sum_exp(o) - o[hot]);
            auto g = grad.row(t);
            softmax_into(o, g);
            g[hot] -= 1.0;
            for (double& v : g) v *= inv_batch;
        }
        result.grad_logits.push_back(std::move(grad));
    }
    return result;
}

SeqTensor one_hot(std::span<const int> class_ids, std::size_t num_classes) {
    SeqTensor out(class_ids.size(), num_classes);
    for (std::size_t t = 0; t < class_ids.size(); ++t) {
        if (class_ids[t] < 0 || static_cast<std::size_t>(class_ids[t]) >= num_classes) {
            throw std::invalid_argument("one_hot: class id " + std::to_string(class_ids[t]) +
                                        " out of range");
        }
        out(t, static_cast<std::size_t>(class_ids[t])) = 1.0;
    }
    return out;
}

std::string to_string(PoolMode mode) { return mode == PoolMode::Max ? "gmp" : "gap"; }

PoolMode parse_pool_mode(const std::string& text) {
    if (text == "gmp" || text == "max") return PoolMode::Max;
    if (text == "gap" || text == "avg" || text == "average") return PoolMode::Average;
    throw std::invalid_argument("unknown pooling mode '" + text + "' (expected gmp or gap)");
}

std::vector<double> temporal_pool(const SeqTensor& x, PoolMode mode) {
    std::vector<double> pooled(x.row(0).begin(), x.row(0).end());
    for (std::size_t t = 1; t < x.time_len(); ++t) {
        const auto r = x.row(t);
        for (std::size_t c = 0; c < pooled.size(); ++c) {
            pooled[c] = mode == PoolMode::Max ? std::max(pooled[c], r[c]) : pooled[c] + r[c];
        }
    }
    if (mode == PoolMode::Average) {
        for (double& v : pooled) v /= static_cast<double>(x.time_len());
    }
    return pooled;
}

SeqTensor temporal_pool_backward(std::span<const double> grad_pooled, const SeqTensor& x,
                                 PoolMode mode) {
    if (grad_pooled.size() != x.channels()) {
        throw std::invalid_argument("temporal_pool_backward: channel mismatch");
    }
    SeqTensor grad(x.time_len(), x.channels());
    if (mode == PoolMode::Average) {
        const double scale = 1.0 / static_cast<double>(x.time_len());
        for (std::size_t t = 0; t < x.time_len(); ++t) {
            for (std::size_t c = 0; c < x.channels(); ++c) grad(t, c) = grad_pooled[c] * scale;
        }
        return grad;
    }
    for (std::size_t c = 0; c < x.channels(); ++c) {
        std::size_t best = 0;
        for (std::size_t t = 1; t < x.time_len(); ++t) {
            if (x(t, c) > x(best, c)) best = t;
        }
        grad(best, c) = grad_pooled[c];
    }
    return grad;
}

OptimizerState::OptimizerState(double learning_rate, double momentum, double weight_decay)
    : learning_rate_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("OptimizerState: learning rate < 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("OptimizerState: momentum must lie in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("OptimizerState: weight decay < 0");
}

void sgd_update(std::span<const ParamSlot> params, OptimizerState& state) {
    if (state.velocity_.empty()) {
        state.velocity_.reserve(params.size());
        for (const auto& p : params) state.velocity_.emplace_back(p.value.size(), 0.0);
    }
    if (state.velocity_.size() != params.size()) {
        throw std::invalid_argument("sgd_update: parameter count changed between steps");
    }
    for (std::size_t s = 0; s < params.size(); ++s) {
        const ParamSlot& slot = params[s];
        auto& vel = state.velocity_[s];
        if (slot.grad.size() != slot.value.size() || vel.size() != slot.value.size()) {
            throw std::invalid_argument("sgd_update: shape mismatch in slot " + std::to_string(s));
        }
        const double decay = slot.decay ? state.weight_decay_ : 0.0;
        for (std::size_t n = 0; n < slot.value.size(); ++n) {
            vel[n] = state.momentum_ * vel[n] -
                     state.learning_rate_ * (slot.grad[n] + decay * slot.value[n]);
            slot.value[n] += vel[n];
        }
    }
}

GradCheckReport gradient_check(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> params, std::span<const double> analytic,
                               double tolerance, double step, double abs_floor) {
    if (params.size() != analytic.size()) {
        throw std::invalid_argument("gradient_check: analytic gradient size mismatch");
    }
    GradCheckReport report;
    report.tolerance = tolerance;
    std::vector<double> probe(params.begin(), params.end());
    for (std::size_t n = 0; n < probe.size(); ++n) {
        const double saved = probe[n];
        probe[n] = saved + step;
        const double up = loss(probe);
        probe[n] = saved - step;
        const double down = loss(probe);
        probe[n] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::runtime_error("gradient_check: non-finite loss at parameter " +
                                     std::to_string(n));
        }
        const double numeric = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(numeric), std::abs(analytic[n]), abs_floor});
        const double rel = std::abs(numeric - analytic[n]) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_index = n;
        }
        ++report.checked;
    }
    return report;
}

}  // namespace fsn::nn
