#include "fsn/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "fsn/random.hpp"

namespace fsn {

namespace {

constexpr std::uint32_t kModelVersion = 1;

void require_feature_dim(const Head& head, const SeqTensor& features) {
    if (features.channels() != head.config.feature_dim) {
        throw std::invalid_argument("feature dim " + std::to_string(features.channels()) +
                                    " does not match model D=" +
                                    std::to_string(head.config.feature_dim));
    }
}

Head build_stack(HeadKind kind, const ModelConfig& config, std::size_t classifier_out) {
    config.validate();
    Head head;
    head.kind = kind;
    head.config = config;
    std::size_t in = config.feature_dim;
    for (std::size_t d : config.dilations) {
        head.layers.emplace_back(config.hidden_channels, in, 3, d);
        in = config.hidden_channels;
    }
    head.layers.emplace_back(classifier_out, in, 3, 1);
    return head;
}

}  // namespace

void ModelConfig::validate() const {
    if (num_classes < 1) throw std::invalid_argument("ModelConfig: K must be >= 1");
    if (feature_dim < 1) throw std::invalid_argument("ModelConfig: D must be >= 1");
    if (hidden_channels < 1) throw std::invalid_argument("ModelConfig: hidden_channels must be >= 1");
    if (snippet_len < 1 || clip_len < snippet_len || clip_len % snippet_len != 0) {
        throw std::invalid_argument("ModelConfig: clip_len " + std::to_string(clip_len) +
                                    " is not a multiple of snippet_len " +
                                    std::to_string(snippet_len));
    }
    for (std::size_t d : dilations) {
        if (d < 1) throw std::invalid_argument("ModelConfig: dilations must be >= 1");
    }
}

const char* to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::Fsn: return "fsn";
        case HeadKind::Wfsn: return "wfsn";
        case HeadKind::Ablation: return "ablation";
    }
    return "unknown";
}

std::size_t Head::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

void init_params(Head& head, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& layer : head.layers) {
        const double fan_in = static_cast<double>(layer.in_channels * layer.kernel_size);
        const double fan_out = static_cast<double>(layer.out_channels * layer.kernel_size);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : layer.weights) w = rng.uniform(-limit, limit);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
}

Head make_fsn_head(const ModelConfig& config, std::uint64_t seed) {
    Head head = build_stack(HeadKind::Fsn, config, config.num_classes + 1);
    init_params(head, seed);
    return head;
}

Head make_wfsn_head(const ModelConfig& config, nn::PoolMode pooling, std::uint64_t seed) {
    Head head = build_stack(HeadKind::Wfsn, config, config.num_classes);
    head.pooling = pooling;
    init_params(head, seed);
    return head;
}

Head make_ablation_head(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Head head;
    head.kind = HeadKind::Ablation;
    head.config = config;
    head.config.dilations.clear();
    head.layers.emplace_back(config.num_classes + 1, config.feature_dim, 1, 1);
    init_params(head, seed);
    return head;
}

ReceptiveField receptive_field(const Head& head) {
    ReceptiveField rf;
    for (const auto& l : head.layers) rf.snippets += (l.kernel_size - 1) * l.dilation;
    rf.frames = rf.snippets * head.config.snippet_len;
    return rf;
}

StackTrace stack_forward(const Head& head, const SeqTensor& features) {
    require_feature_dim(head, features);
    StackTrace trace;
    trace.layer_inputs.reserve(head.layers.size());
    SeqTensor current = features;
    for (std::size_t l = 0; l + 1 < head.layers.size(); ++l) {
        SeqTensor pre = nn::dilated_conv1d_forward(current, head.layers[l]);
        trace.layer_inputs.push_back(std::move(current));
        current = nn::relu(pre);
        trace.pre_activations.push_back(std::move(pre));
    }
    trace.logits = nn::dilated_conv1d_forward(current, head.layers.back());
    trace.layer_inputs.push_back(std::move(current));
    return trace;
}

HeadGrads zero_grads(const Head& head) {
    HeadGrads grads;
    grads.reserve(head.layers.size());
    for (const auto& l : head.layers) {
        grads.push_back({std::vector<double>(l.weights.size(), 0.0),
                         std::vector<double>(l.bias.size(), 0.0)});
    }
    return grads;
}

void stack_backward(const Head& head, const StackTrace& trace, const SeqTensor& grad_logits,
                    HeadGrads& grads) {
    if (grads.size() != head.layers.size()) {
        throw std::invalid_argument("stack_backward: gradient buffer does not match head");
    }
    SeqTensor grad = grad_logits;
    for (std::size_t l = head.layers.size(); l-- > 0;) {
        if (l + 1 < head.layers.size()) grad = nn::relu_backward(grad, trace.pre_activations[l]);
        auto back = nn::dilated_conv1d_backward(grad, trace.layer_inputs[l], head.layers[l]);
        for (std::size_t n = 0; n < back.grads.weights.size(); ++n) {
            grads[l].weights[n] += back.grads.weights[n];
        }
        for (std::size_t n = 0; n < back.grads.bias.size(); ++n) grads[l].bias[n] += back.grads.bias[n];
        if (l > 0) grad = std::move(back.grad_x);
    }
}

SeqTensor fsn_logits(const SeqTensor& features, const Head& head, std::size_t target_len) {
    return nn::bilinear_upsample_1d(stack_forward(head, features).logits, target_len);
}

SeqTensor fsn_forward(const SeqTensor& features, const Head& head, std::size_t target_len) {
    return nn::framewise_softmax(fsn_logits(features, head, target_len));
}

LossAndGrads fsn_loss_and_grads(std::span<const ClipSample> batch, const Head& head) {
    if (batch.empty()) throw std::invalid_argument("fsn_loss_and_grads: empty batch");
    const std::size_t classes = head.output_channels();
    std::vector<StackTrace> traces;
    nn::LossInput input;
    traces.reserve(batch.size());
    for (const auto& clip : batch) {
        traces.push_back(stack_forward(head, clip.features));
        input.logits.push_back(nn::bilinear_upsample_1d(traces.back().logits, clip.labels.size()));
        input.labels.push_back(nn::one_hot(clip.labels, classes));
    }
    nn::LossResult loss = nn::framewise_cross_entropy(input);
    LossAndGrads result{loss.loss, zero_grads(head)};
    for (std::size_t b = 0; b < batch.size(); ++b) {
        SeqTensor g = nn::bilinear_upsample_1d_backward(loss.grad_logits[b],
                                                        traces[b].logits.time_len());
        stack_backward(head, traces[b], g, result.grads);
    }
    return result;
}

namespace {

double apply_step(Head& head, LossAndGrads&& lg, nn::OptimizerState& state) {
    if (!std::isfinite(lg.loss)) throw std::runtime_error("training step produced a non-finite loss");
    auto slots = param_slots(head, lg.grads);
    nn::sgd_update(slots, state);
    return lg.loss;
}

}  // namespace

double fsn_train_step(std::span<const ClipSample> batch, Head& head, nn::OptimizerState& state) {
    return apply_step(head, fsn_loss_and_grads(batch, head), state);
}

std::vector<double> wfsn_forward_train(const SeqTensor& features, const Head& head) {
    return nn::softmax_vec(nn::temporal_pool(stack_forward(head, features).logits, head.pooling));
}

SeqTensor wfsn_forward_predict(const SeqTensor& features, const Head& head) {
    return nn::framewise_softmax(stack_forward(head, features).logits);
}

LossAndGrads wfsn_loss_and_grads(std::span<const WeakSample> batch, const Head& head) {
    if (batch.empty()) throw std::invalid_argument("wfsn_loss_and_grads: empty batch");
    const std::size_t classes = head.output_channels();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    LossAndGrads result{0.0, zero_grads(head)};
    for (const auto& sample : batch) {
        if (sample.video_label.size() != classes) {
            throw std::invalid_argument("wfsn_loss_and_grads: label has " +
                                        std::to_string(sample.video_label.size()) +
                                        " entries, head emits " + std::to_string(classes));
        }
        std::size_t positives = 0;
        for (int y : sample.video_label) positives += y != 0 ? 1 : 0;
        if (positives == 0) throw std::invalid_argument("wfsn_loss_and_grads: sample without a positive class");

        StackTrace trace = stack_forward(head, sample.features);
        const std::vector<double> pooled = nn::temporal_pool(trace.logits, head.pooling);
        const std::vector<double> prob = nn::softmax_vec(pooled);
        std::vector<double> grad_pooled(classes);
        const double inv_pos = 1.0 / static_cast<double>(positives);
        for (std::size_t k = 0; k < classes; ++k) {
            const double target = sample.video_label[k] != 0 ? inv_pos : 0.0;
            if (target > 0.0) result.loss -= inv_batch * inv_pos * std::log(prob[k]);
            grad_pooled[k] = inv_batch * (prob[k] - target);
        }
        SeqTensor g = nn::temporal_pool_backward(grad_pooled, trace.logits, head.pooling);
        stack_backward(head, trace, g, result.grads);
    }
    return result;
}

double wfsn_train_step(std::span<const WeakSample> batch, Head& head, nn::OptimizerState& state) {
    return apply_step(head, wfsn_loss_and_grads(batch, head), state);
}

std::vector<double> flatten_params(const Head& head) {
    std::vector<double> flat;
    flat.reserve(head.param_count());
    for (const auto& l : head.layers) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void assign_params(Head& head, std::span<const double> flat) {
    if (flat.size() != head.param_count()) throw std::invalid_argument("assign_params: size mismatch");
    std::size_t pos = 0;
    for (auto& l : head.layers) {
        for (double& w : l.weights) w = flat[pos++];
        for (double& b : l.bias) b = flat[pos++];
    }
}

std::vector<double> flatten_grads(const HeadGrads& grads) {
    std::vector<double> flat;
    for (const auto& g : grads) {
        flat.insert(flat.end(), g.weights.begin(), g.weights.end());
        flat.insert(flat.end(), g.bias.begin(), g.bias.end());
    }
    return flat;
}

std::vector<nn::ParamSlot> param_slots(Head& head, const HeadGrads& grads) {
    if (grads.size() != head.layers.size()) throw std::invalid_argument("param_slots: layer count mismatch");
    std::vector<nn::ParamSlot> slots;
    slots.reserve(2 * head.layers.size());
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        slots.push_back({head.layers[l].weights, grads[l].weights, true});
        slots.push_back({head.layers[l].bias, grads[l].bias, false});
    }
    return slots;
}

void save_model(const Head& head, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    io::write_magic(out, "FSN1");
    io::write_u32(out, kModelVersion);
    io::write_u32(out, static_cast<std::uint32_t>(head.kind));
    io::write_u32(out, head.pooling == nn::PoolMode::Max ? 1u : 0u);
    const ModelConfig& c = head.config;
    io::write_u32(out, static_cast<std::uint32_t>(c.num_classes));
    io::write_u32(out, static_cast<std::uint32_t>(c.feature_dim));
    io::write_u32(out, static_cast<std::uint32_t>(c.hidden_channels));
    io::write_u32(out, static_cast<std::uint32_t>(c.snippet_len));
    io::write_u32(out, static_cast<std::uint32_t>(c.clip_len));
    io::write_u32(out, static_cast<std::uint32_t>(c.dilations.size()));
    for (std::size_t d : c.dilations) io::write_u32(out, static_cast<std::uint32_t>(d));
    io::write_u32(out, static_cast<std::uint32_t>(head.layers.size()));
    for (const auto& l : head.layers) {
        io::write_u32(out, static_cast<std::uint32_t>(l.kernel_size));
        io::write_u32(out, static_cast<std::uint32_t>(l.dilation));
        io::write_u32(out, static_cast<std::uint32_t>(l.in_channels));
        io::write_u32(out, static_cast<std::uint32_t>(l.out_channels));
    }
    for (double v : flatten_params(head)) io::write_f64(out, v);

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw std::runtime_error("write failed: " + path.string());
}

Head load_model(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open model file " + path.string());
    io::Reader in(file, path.string());
    in.expect_magic("FSN1");
    const std::uint32_t version = in.u32();
    if (version != kModelVersion) {
        in.fail("unsupported model format version " + std::to_string(version));
    }
    Head head;
    const std::uint32_t kind = in.u32();
    if (kind < 1 || kind > 3) in.fail("unknown head kind " + std::to_string(kind));
    head.kind = static_cast<HeadKind>(kind);
    head.pooling = in.u32() == 1 ? nn::PoolMode::Max : nn::PoolMode::Average;
    ModelConfig& c = head.config;
    c.num_classes = in.u32();
    c.feature_dim = in.u32();
    c.hidden_channels = in.u32();
    c.snippet_len = in.u32();
    c.clip_len = in.u32();
    const std::uint32_t n_dil = in.u32();
    if (n_dil > 64) in.fail("implausible dilation count");
    c.dilations.assign(n_dil, 0);
    for (auto& d : c.dilations) d = in.u32();
    try {
        c.validate();
    } catch (const std::exception& e) {
        in.fail(e.what());
    }
    const std::uint32_t n_layers = in.u32();
    if (n_layers == 0 || n_layers > 64) in.fail("implausible layer count");
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::size_t kernel = in.u32();
        const std::size_t dilation = in.u32();
        const std::size_t in_ch = in.u32();
        const std::size_t out_ch = in.u32();
        if (in_ch * out_ch * kernel > (std::size_t{1} << 28)) in.fail("implausible layer shape");
        try {
            head.layers.emplace_back(out_ch, in_ch, kernel, dilation);
        } catch (const std::exception& e) {
            in.fail("layer " + std::to_string(l) + ": " + e.what());
        }
    }

    // The layer table must agree with the declared configuration.
    const std::size_t expected_out = head.kind == HeadKind::Wfsn ? c.num_classes : c.num_classes + 1;
    if (head.layers.front().in_channels != c.feature_dim) {
        in.fail("first layer expects " + std::to_string(head.layers.front().in_channels) +
                " inputs but D=" + std::to_string(c.feature_dim));
    }
    if (head.classifier().out_channels != expected_out) {
        in.fail("classifier emits " + std::to_string(head.classifier().out_channels) +
                " channels, expected " + std::to_string(expected_out) + " for K=" +
                std::to_string(c.num_classes));
    }
    for (std::size_t l = 1; l < head.layers.size(); ++l) {
        if (head.layers[l].in_channels != head.layers[l - 1].out_channels) {
            in.fail("layer " + std::to_string(l) + " input width disagrees with previous layer");
        }
    }

    for (auto& l : head.layers) {
        for (double& w : l.weights) w = in.f64();
        for (double& b : l.bias) b = in.f64();
    }
    in.expect_end();
    return head;
}

Head load_model(const std::filesystem::path& path, std::size_t expected_classes,
                std::size_t expected_feature_dim) {
    Head head = load_model(path);
    if (head.config.num_classes != expected_classes || head.config.feature_dim != expected_feature_dim) {
        throw std::runtime_error(path.string() + ": model has K=" + std::to_string(head.config.num_classes) +
                                 ", D=" + std::to_string(head.config.feature_dim) + " but K=" +
                                 std::to_string(expected_classes) + ", D=" +
                                 std::to_string(expected_feature_dim) + " was expected");
    }
    return head;
}

FrameScoreTrack fuse_streams(const FrameScoreTrack& a, const FrameScoreTrack& b, double weight) {
    if (!a.scores.same_shape(b.scores) || a.has_background != b.has_background) {
        throw std::invalid_argument("fuse_streams: tracks " + shape_string(a.scores) + " and " +
                                    shape_string(b.scores) + " differ in shape");
    }
    if (!(weight >= 0.0 && weight <= 1.0)) throw std::invalid_argument("fuse_streams: weight outside [0, 1]");
    FrameScoreTrack out = a;
    auto ov = out.scores.values();
    const auto bv = b.scores.values();
    for (std::size_t n = 0; n < ov.size(); ++n) ov[n] = weight * ov[n] + (1.0 - weight) * bv[n];
    return out;
}

}  // namespace fsn
