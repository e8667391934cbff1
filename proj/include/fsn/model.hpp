#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fsn/nncore.hpp"
#include "fsn/types.hpp"

namespace fsn {

struct ModelConfig {
    std::size_t num_classes = 1;       // K action classes, background excluded
    std::size_t feature_dim = 1;       // D
    std::size_t hidden_channels = 256;
    std::size_t snippet_len = 5;       // frames per snippet
    std::size_t clip_len = 35;         // T frames per window
    std::vector<std::size_t> dilations{1, 2, 4};

    void validate() const;
    std::size_t snippets_per_clip() const { return clip_len / snippet_len; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class HeadKind : std::uint32_t {
    Fsn = 1,       // dilated stack + (K+1)-way classifier, frame-wise softmax
    Wfsn = 2,      // dilated stack + K-way classifier, pooled video softmax
    Ablation = 3,  // single kernel-1 (K+1)-way classifier
};

const char* to_string(HeadKind kind);

// A temporal head is a stack of convolutions; hidden layers are followed by
// ReLU, the last layer is the linear classifier.
struct Head {
    HeadKind kind = HeadKind::Fsn;
    ModelConfig config;
    nn::PoolMode pooling = nn::PoolMode::Max;  // used by Wfsn only
    std::vector<nn::ConvLayer1D> layers;

    const nn::ConvLayer1D& classifier() const { return layers.back(); }
    std::size_t output_channels() const { return layers.back().out_channels; }
    std::size_t param_count() const;

    friend bool operator==(const Head&, const Head&) = default;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
void init_params(Head& head, std::uint64_t seed);

Head make_fsn_head(const ModelConfig& config, std::uint64_t seed);
Head make_wfsn_head(const ModelConfig& config, nn::PoolMode pooling, std::uint64_t seed);
Head make_ablation_head(const ModelConfig& config, std::uint64_t seed);

struct ReceptiveField {
    std::size_t snippets = 1;
    std::size_t frames = 1;
};

ReceptiveField receptive_field(const Head& head);

// Activations retained by a forward pass through the conv stack.
struct StackTrace {
    std::vector<SeqTensor> layer_inputs;  // input to layer l
    std::vector<SeqTensor> pre_activations;  // hidden layer outputs before ReLU
    SeqTensor logits;  // classifier output, one row per input position
};

StackTrace stack_forward(const Head& head, const SeqTensor& features);

using HeadGrads = std::vector<nn::ConvGrads>;

HeadGrads zero_grads(const Head& head);
// Accumulates parameter gradients of the stack given d(loss)/d(logits).
void stack_backward(const Head& head, const StackTrace& trace, const SeqTensor& grad_logits,
                    HeadGrads& grads);

// Per-frame logits before the softmax: stack -> upsample to target_len.
SeqTensor fsn_logits(const SeqTensor& features, const Head& head, std::size_t target_len);
// Per-frame class probabilities, (target_len) x (K+1).
SeqTensor fsn_forward(const SeqTensor& features, const Head& head, std::size_t target_len);

struct LossAndGrads {
    double loss = 0.0;
    HeadGrads grads;
};

// Frame-wise cross-entropy over a batch of clips and its exact gradient.
LossAndGrads fsn_loss_and_grads(std::span<const ClipSample> batch, const Head& head);
// One SGD step; returns the loss before the update. Throws on a non-finite loss.
double fsn_train_step(std::span<const ClipSample> batch, Head& head, nn::OptimizerState& state);

std::vector<double> wfsn_forward_train(const SeqTensor& features, const Head& head);
SeqTensor wfsn_forward_predict(const SeqTensor& features, const Head& head);
// Video-level cross-entropy, averaged over the positive classes of each sample.
LossAndGrads wfsn_loss_and_grads(std::span<const WeakSample> batch, const Head& head);
double wfsn_train_step(std::span<const WeakSample> batch, Head& head, nn::OptimizerState& state);

// Flat parameter views in declaration order: per layer, weights then bias.
std::vector<double> flatten_params(const Head& head);
void assign_params(Head& head, std::span<const double> flat);
std::vector<double> flatten_grads(const HeadGrads& grads);
std::vector<nn::ParamSlot> param_slots(Head& head, const HeadGrads& grads);

// Binary model file, little-endian. See README for the layout.
void save_model(const Head& head, const std::filesystem::path& path);
Head load_model(const std::filesystem::path& path);
// As above, and rejects a model whose K or D differ from the expected values.
Head load_model(const std::filesystem::path& path, std::size_t expected_classes,
                std::size_t expected_feature_dim);

// Convex combination weight*a + (1-weight)*b of two score tracks.
FrameScoreTrack fuse_streams(const FrameScoreTrack& a, const FrameScoreTrack& b, double weight = 0.5);

}  // namespace fsn
