#include "fsn/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "fsn/model.hpp"
#include "fsn/nncore.hpp"
#include "fsn/random.hpp"

namespace fsn {

namespace {

struct Problem {
    std::vector<double> params;
    std::function<double(std::span<const double>)> loss;
    std::vector<double> analytic;
};

using ProblemFactory = std::function<Problem(Rng&)>;

SeqTensor random_tensor(Rng& rng, std::size_t t, std::size_t c, double min_abs = 0.0) {
    SeqTensor x(t, c);
    for (double& v : x.values()) {
        do {
            v = rng.normal();
        } while (std::abs(v) < min_abs);
    }
    return x;
}

double dot(const SeqTensor& a, const SeqTensor& b) {
    double s = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) s += a.values()[n] * b.values()[n];
    return s;
}

Problem conv_problem(Rng& rng) {
    const std::size_t len = 1 + rng.index(9);
    const std::size_t c_in = 1 + rng.index(4);
    const std::size_t c_out = 1 + rng.index(4);
    const std::size_t dils[] = {1, 2, 4};
    nn::ConvLayer1D layer(c_out, c_in, 3, dils[rng.index(3)]);
    for (double& w : layer.weights) w = rng.normal();
    for (double& b : layer.bias) b = rng.normal();
    const SeqTensor x = random_tensor(rng, len, c_in);
    const SeqTensor proj = random_tensor(rng, len, c_out);

    auto unpack = [=](std::span<const double> p) {
        SeqTensor xi(len, c_in, std::vector<double>(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(len * c_in)));
        nn::ConvLayer1D li = layer;
        auto it = p.begin() + static_cast<std::ptrdiff_t>(len * c_in);
        std::copy(it, it + static_cast<std::ptrdiff_t>(li.weights.size()), li.weights.begin());
        it += static_cast<std::ptrdiff_t>(li.weights.size());
        std::copy(it, it + static_cast<std::ptrdiff_t>(li.bias.size()), li.bias.begin());
        return std::pair{xi, li};
    };
    Problem pr;
    pr.params.assign(x.values().begin(), x.values().end());
    pr.params.insert(pr.params.end(), layer.weights.begin(), layer.weights.end());
    pr.params.insert(pr.params.end(), layer.bias.begin(), layer.bias.end());
    pr.loss = [=](std::span<const double> p) {
        auto [xi, li] = unpack(p);
        return dot(nn::dilated_conv1d_forward(xi, li), proj);
    };
    const auto back = nn::dilated_conv1d_backward(proj, x, layer);
    pr.analytic.assign(back.grad_x.values().begin(), back.grad_x.values().end());
    pr.analytic.insert(pr.analytic.end(), back.grads.weights.begin(), back.grads.weights.end());
    pr.analytic.insert(pr.analytic.end(), back.grads.bias.begin(), back.grads.bias.end());
    return pr;
}

Problem relu_problem(Rng& rng) {
    const std::size_t len = 1 + rng.index(9);
    const std::size_t ch = 1 + rng.index(4);
    // Keep inputs away from the kink so the central difference is exact.
    const SeqTensor x = random_tensor(rng, len, ch, 1e-2);
    const SeqTensor proj = random_tensor(rng, len, ch);
    Problem pr;
    pr.params.assign(x.values().begin(), x.values().end());
    pr.loss = [=](std::span<const double> p) {
        return dot(nn::relu(SeqTensor(len, ch, std::vector<double>(p.begin(), p.end()))), proj);
    };
    const SeqTensor g = nn::relu_backward(proj, x);
    pr.analytic.assign(g.values().begin(), g.values().end());
    return pr;
}

Problem upsample_problem(Rng& rng) {
    const std::size_t n = 1 + rng.index(7);
    const std::size_t t = n + rng.index(30);
    const std::size_t ch = 1 + rng.index(4);
    const SeqTensor x = random_tensor(rng, n, ch);
    const SeqTensor proj = random_tensor(rng, t, ch);
    Problem pr;
    pr.params.assign(x.values().begin(), x.values().end());
    pr.loss = [=](std::span<const double> p) {
        return dot(nn::bilinear_upsample_1d(SeqTensor(n, ch, std::vector<double>(p.begin(), p.end())), t), proj);
    };
    const SeqTensor g = nn::bilinear_upsample_1d_backward(proj, n);
    pr.analytic.assign(g.values().begin(), g.values().end());
    return pr;
}

Problem cross_entropy_problem(Rng& rng) {
    const std::size_t batch = 1 + rng.index(3);
    const std::size_t len = 1 + rng.index(6);
    const std::size_t classes = 2 + rng.index(4);
    nn::LossInput input;
    for (std::size_t b = 0; b < batch; ++b) {
        input.logits.push_back(random_tensor(rng, len, classes));
        std::vector<int> ids(len);
        for (int& id : ids) id = static_cast<int>(rng.index(classes));
        input.labels.push_back(nn::one_hot(ids, classes));
    }
    Problem pr;
    for (const auto& l : input.logits) pr.params.insert(pr.params.end(), l.values().begin(), l.values().end());
    pr.loss = [=](std::span<const double> p) {
        nn::LossInput in = input;
        std::size_t pos = 0;
        for (auto& l : in.logits) {
            for (double& v : l.values()) v = p[pos++];
        }
        return nn::framewise_cross_entropy(in).loss;
    };
    for (const auto& g : nn::framewise_cross_entropy(input).grad_logits) {
        pr.analytic.insert(pr.analytic.end(), g.values().begin(), g.values().end());
    }
    return pr;
}

ProblemFactory pool_problem(nn::PoolMode mode) {
    return [mode](Rng& rng) {
        const std::size_t len = 1 + rng.index(9);
        const std::size_t ch = 1 + rng.index(4);
        const SeqTensor x = random_tensor(rng, len, ch);
        std::vector<double> proj(ch);
        for (double& v : proj) v = rng.normal();
        Problem pr;
        pr.params.assign(x.values().begin(), x.values().end());
        pr.loss = [=](std::span<const double> p) {
            const auto pooled = nn::temporal_pool(SeqTensor(len, ch, std::vector<double>(p.begin(), p.end())), mode);
            double s = 0.0;
            for (std::size_t c = 0; c < ch; ++c) s += pooled[c] * proj[c];
            return s;
        };
        const SeqTensor g = nn::temporal_pool_backward(proj, x, mode);
        pr.analytic.assign(g.values().begin(), g.values().end());
        return pr;
    };
}

ModelConfig small_config() {
    ModelConfig c;
    c.num_classes = 2;
    c.feature_dim = 8;
    c.hidden_channels = 16;
    c.snippet_len = 5;
    c.clip_len = 35;
    return c;
}

ClipSample random_clip(Rng& rng, const ModelConfig& c) {
    ClipSample clip{random_tensor(rng, c.snippets_per_clip(), c.feature_dim), std::vector<int>(c.clip_len)};
    for (int& l : clip.labels) l = static_cast<int>(rng.index(c.num_classes + 1));
    return clip;
}

// Hidden biases of +-[1, 2] keep every ReLU input well away from zero, so the
// central difference never straddles a kink.
void push_off_kinks(Head& head, Rng& rng) {
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        const bool hidden = l + 1 < head.layers.size();
        for (double& b : head.layers[l].bias) {
            b = hidden ? (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 2.0) : 0.1 * rng.normal();
        }
    }
}

// Smallest distance of any ReLU input, or of any max-pool runner-up, from a
// non-differentiable point.
double kink_margin(const Head& head, const SeqTensor& features) {
    const StackTrace trace = stack_forward(head, features);
    double margin = 1e300;
    for (const auto& z : trace.pre_activations) {
        for (double v : z.values()) margin = std::min(margin, std::abs(v));
    }
    if (head.kind == HeadKind::Wfsn && head.pooling == nn::PoolMode::Max) {
        const SeqTensor& s = trace.logits;
        for (std::size_t c = 0; c < s.channels() && s.time_len() > 1; ++c) {
            std::vector<double> col(s.time_len());
            for (std::size_t t = 0; t < s.time_len(); ++t) col[t] = s(t, c);
            std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
            margin = std::min(margin, col[0] - col[1]);
        }
    }
    return margin;
}

constexpr double kMinKinkMargin = 1e-3;
constexpr int kMaxDraws = 1000;

ProblemFactory strong_head_problem(HeadKind kind) {
    return [kind](Rng& rng) {
        const ModelConfig c = small_config();
        Head head;
        std::vector<ClipSample> batch;
        for (int draw = 0;; ++draw) {
            if (draw == kMaxDraws) throw std::runtime_error("gradient suite: no kink-free instance found");
            head = kind == HeadKind::Ablation ? make_ablation_head(c, rng.next_u64()) : make_fsn_head(c, rng.next_u64());
            push_off_kinks(head, rng);
            batch = {random_clip(rng, c), random_clip(rng, c)};
            if (std::min(kink_margin(head, batch[0].features), kink_margin(head, batch[1].features)) > kMinKinkMargin) break;
        }
        Problem pr;
        pr.params = flatten_params(head);
        pr.loss = [head, batch](std::span<const double> p) mutable {
            assign_params(head, p);
            return fsn_loss_and_grads(batch, head).loss;
        };
        pr.analytic = flatten_grads(fsn_loss_and_grads(batch, head).grads);
        return pr;
    };
}

ProblemFactory weak_head_problem(nn::PoolMode mode) {
    return [mode](Rng& rng) {
        const ModelConfig c = small_config();
        Head head;
        std::vector<WeakSample> batch;
        for (int draw = 0;; ++draw) {
            if (draw == kMaxDraws) throw std::runtime_error("gradient suite: no kink-free instance found");
            head = make_wfsn_head(c, mode, rng.next_u64());
            push_off_kinks(head, rng);
            batch.clear();
            double margin = 1e300;
            for (int n = 0; n < 2; ++n) {
                WeakSample s{random_tensor(rng, 10, c.feature_dim), std::vector<int>(c.num_classes, 0)};
                s.video_label[rng.index(c.num_classes)] = 1;
                if (n == 1) s.video_label.assign(c.num_classes, 1);  // multi-label branch
                margin = std::min(margin, kink_margin(head, s.features));
                batch.push_back(std::move(s));
            }
            if (margin > kMinKinkMargin) break;
        }
        Problem pr;
        pr.params = flatten_params(head);
        pr.loss = [head, batch](std::span<const double> p) mutable {
            assign_params(head, p);
            return wfsn_loss_and_grads(batch, head).loss;
        };
        pr.analytic = flatten_grads(wfsn_loss_and_grads(batch, head).grads);
        return pr;
    };
}

GradSuiteEntry run_check(const std::string& name, const ProblemFactory& factory, const GradSuiteOptions& options,
                         std::uint64_t stream, bool corrupt) {
    GradSuiteEntry entry{name, 0.0, options.seeds, true};
    for (std::size_t s = 0; s < options.seeds; ++s) {
        Rng rng(Rng::derive(Rng::derive(options.seed, stream), s));
        Problem pr = factory(rng);
        if (corrupt) {
            for (double& g : pr.analytic) g *= 1.0 + 1e-3;
        }
        const auto report = nn::gradient_check(pr.loss, pr.params, pr.analytic, options.tolerance, options.step,
                                                  options.abs_floor);
        entry.max_rel_error = std::max(entry.max_rel_error, report.max_rel_error);
        entry.passed = entry.passed && report.passed();
    }
    return entry;
}

}  // namespace

std::vector<GradSuiteEntry> run_gradient_suite(const GradSuiteOptions& options) {
    const std::vector<std::pair<std::string, ProblemFactory>> checks = {
        {"dilated_conv1d", conv_problem},
        {"relu", relu_problem},
        {"bilinear_upsample_1d", upsample_problem},
        {"framewise_cross_entropy", cross_entropy_problem},
        {"temporal_pool_gap", pool_problem(nn::PoolMode::Average)},
        {"temporal_pool_gmp", pool_problem(nn::PoolMode::Max)},
        {"fsn_head_loss", strong_head_problem(HeadKind::Fsn)},
        {"ablation_head_loss", strong_head_problem(HeadKind::Ablation)},
        {"wfsn_gmp_loss", weak_head_problem(nn::PoolMode::Max)},
        {"wfsn_gap_loss", weak_head_problem(nn::PoolMode::Average)},
    };
    std::vector<GradSuiteEntry> entries;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        entries.push_back(run_check(checks[i].first, checks[i].second, options, i + 1, options.corrupt));
    }
    return entries;
}

GradSuiteEntry run_negative_control(const GradSuiteOptions& options) {
    GradSuiteEntry e = run_check("negative_control_fsn", strong_head_problem(HeadKind::Fsn), options, 1000, true);
    e.passed = !e.passed;
    return e;
}

}  // namespace fsn
