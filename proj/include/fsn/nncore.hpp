#pragma once

// Differentiable primitives of the temporal head. Every forward function is
// pure; the matching backward takes the forward inputs back as its cache.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fsn/seq_tensor.hpp"

namespace fsn::nn {

// One temporal convolution: weights laid out (out, in, kernel), stride 1.
struct ConvLayer1D {
    std::size_t out_channels = 0;
    std::size_t in_channels = 0;
    std::size_t kernel_size = 3;
    std::size_t dilation = 1;
    std::vector<double> weights;
    std::vector<double> bias;

    ConvLayer1D() = default;
    ConvLayer1D(std::size_t out, std::size_t in, std::size_t kernel, std::size_t dilation);

    double& weight(std::size_t o, std::size_t i, std::size_t j) {
        return weights[(o * in_channels + i) * kernel_size + j];
    }
    double weight(std::size_t o, std::size_t i, std::size_t j) const {
        return weights[(o * in_channels + i) * kernel_size + j];
    }

    // Zero frames added on each side so the output keeps the input length.
    std::size_t padding() const { return dilation * (kernel_size - 1) / 2; }
    std::size_t param_count() const { return out_channels * (in_channels * kernel_size + 1); }

    // Throws if the layer violates its shape invariants.
    void validate() const;

    friend bool operator==(const ConvLayer1D&, const ConvLayer1D&) = default;
};

struct ConvGrads {
    std::vector<double> weights;
    std::vector<double> bias;
};

struct ConvBackward {
    SeqTensor grad_x;
    ConvGrads grads;
};

SeqTensor dilated_conv1d_forward(const SeqTensor& x, const ConvLayer1D& layer);
ConvBackward dilated_conv1d_backward(const SeqTensor& grad_out, const SeqTensor& x,
                                     const ConvLayer1D& layer);

SeqTensor relu(const SeqTensor& x);
// Gradient is passed only where the forward input was strictly positive.
SeqTensor relu_backward(const SeqTensor& grad_out, const SeqTensor& x);

// Endpoint-aligned linear interpolation along time: output row t reads source
// coordinate t*(N-1)/(T-1). A single source row is replicated.
SeqTensor bilinear_upsample_1d(const SeqTensor& x, std::size_t target_len);
SeqTensor bilinear_upsample_1d_backward(const SeqTensor& grad_out, std::size_t source_len);

SeqTensor framewise_softmax(const SeqTensor& x);
std::vector<double> softmax_vec(std::span<const double> x);

// Batch of per-frame logits with one-hot targets of identical shape.
struct LossInput {
    std::vector<SeqTensor> logits;
    std::vector<SeqTensor> labels;
};

struct LossResult {
    double loss = 0.0;
    std::vector<SeqTensor> grad_logits;
};

// Summed over frames and classes, averaged over the batch.
LossResult framewise_cross_entropy(const LossInput& input);

// One-hot rows from class ids in [0, num_classes).
SeqTensor one_hot(std::span<const int> class_ids, std::size_t num_classes);

enum class PoolMode { Average, Max };

std::string to_string(PoolMode mode);
PoolMode parse_pool_mode(const std::string& text);

std::vector<double> temporal_pool(const SeqTensor& x, PoolMode mode);
// Max pooling routes each channel's gradient to its earliest maximal row.
SeqTensor temporal_pool_backward(std::span<const double> grad_pooled, const SeqTensor& x,
                                 PoolMode mode);

// Classical momentum SGD. `decay` selects whether weight decay applies to the
// slot (weights yes, biases no).
struct ParamSlot {
    std::span<double> value;
    std::span<const double> grad;
    bool decay = true;
};

class OptimizerState {
public:
    OptimizerState(double learning_rate, double momentum, double weight_decay);

    double learning_rate() const { return learning_rate_; }
    double momentum() const { return momentum_; }
    double weight_decay() const { return weight_decay_; }
    const std::vector<std::vector<double>>& velocity() const { return velocity_; }

    friend void sgd_update(std::span<const ParamSlot> params, OptimizerState& state);

private:
    double learning_rate_;
    double momentum_;
    double weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

void sgd_update(std::span<const ParamSlot> params, OptimizerState& state);

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
    double tolerance = 0.0;

    bool passed() const { return max_rel_error < tolerance; }
};

// Compares `analytic` against central differences of `loss` around `params`.
// Relative error is |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport gradient_check(const std::function<double(std::span<const double>)>& loss,
                               std::span<const double> params, std::span<const double> analytic,
                               double tolerance, double step = 1e-4, double abs_floor = 1e-6);

}  // namespace fsn::nn
