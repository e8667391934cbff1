#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "fsn/model.hpp"
#include "fsn/random.hpp"
#include "oracles.hpp"

using namespace fsn;

namespace {

ModelConfig small(std::size_t k = 2, std::size_t d = 8, std::size_t hidden = 16) {
    ModelConfig c;
    c.num_classes = k;
    c.feature_dim = d;
    c.hidden_channels = hidden;
    return c;
}

std::filesystem::path temp_file(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "fsn_model_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Init, DeterministicWithZeroBiases) {
    const Head a = make_fsn_head(small(), 9);
    const Head b = make_fsn_head(small(), 9);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, make_fsn_head(small(), 10));
    for (const auto& layer : a.layers) {
        for (double v : layer.bias) EXPECT_EQ(v, 0.0);
    }
}

TEST(Init, GlorotVariance) {
    ModelConfig c = small(4, 256, 256);
    const Head h = make_fsn_head(c, 1);
    for (std::size_t l = 0; l + 1 < h.layers.size(); ++l) {
        const auto& layer = h.layers[l];
        double sq = 0.0;
        for (double w : layer.weights) sq += w * w;
        const double var = sq / static_cast<double>(layer.weights.size());
        const double fan_in = static_cast<double>(layer.in_channels * layer.kernel_size);
        const double fan_out = static_cast<double>(layer.out_channels * layer.kernel_size);
        EXPECT_NEAR(var / (2.0 / (fan_in + fan_out)), 1.0, 0.2);
    }
}

TEST(Heads, Geometry) {
    const Head fsn = make_fsn_head(small(3, 5, 7), 1);
    ASSERT_EQ(fsn.layers.size(), 4u);
    const std::size_t dil[] = {1, 2, 4, 1};
    for (std::size_t l = 0; l < 4; ++l) {
        EXPECT_EQ(fsn.layers[l].kernel_size, 3u);
        EXPECT_EQ(fsn.layers[l].dilation, dil[l]);
    }
    EXPECT_EQ(fsn.output_channels(), 4u);
    EXPECT_EQ(make_wfsn_head(small(3, 5, 7), nn::PoolMode::Max, 1).output_channels(), 3u);
    const Head abl = make_ablation_head(small(3, 5, 7), 1);
    ASSERT_EQ(abl.layers.size(), 1u);
    EXPECT_EQ(abl.layers[0].kernel_size, 1u);
    EXPECT_EQ(abl.output_channels(), 4u);
}

TEST(ReceptiveField, Recurrence) {
    ModelConfig c = small();
    EXPECT_EQ(receptive_field(make_fsn_head(c, 1)).snippets, 17u);
    EXPECT_EQ(receptive_field(make_fsn_head(c, 1)).frames, 85u);
    EXPECT_EQ(receptive_field(make_ablation_head(c, 1)).snippets, 1u);
    c.dilations = {};
    EXPECT_EQ(receptive_field(make_fsn_head(c, 1)).snippets, 3u);
}

TEST(ReceptiveField, MatchesPerturbationProbe) {
    Rng rng(3);
    const Head fsn = make_fsn_head(small(2, 4, 24), 5);
    const auto hits = oracle::probe_receptive_field(fsn, 41, 20, rng);
    ASSERT_FALSE(hits.empty());
    EXPECT_EQ(hits.size(), 17u);
    EXPECT_EQ(hits.front(), 12u);
    EXPECT_EQ(hits.back(), 28u);
    EXPECT_EQ(oracle::probe_receptive_field(make_ablation_head(small(), 5), 9, 4, rng),
              std::vector<std::size_t>{4});
}

TEST(FsnForward, ShapesAndNormalization) {
    Rng rng(4);
    ModelConfig c = small(3, 6, 8);
    const Head h = make_fsn_head(c, 2);
    const SeqTensor p = fsn_forward(oracle::random_seq(rng, 7, 6), h, 35);
    EXPECT_EQ(p.time_len(), 35u);
    EXPECT_EQ(p.channels(), 4u);
    for (std::size_t t = 0; t < 35; ++t) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += p(t, k);
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
    // N = T: the upsampling step is the identity.
    const SeqTensor x = oracle::random_seq(rng, 7, 6);
    EXPECT_EQ(fsn_forward(x, h, 7), nn::framewise_softmax(stack_forward(h, x).logits));
    EXPECT_THROW(fsn_forward(oracle::random_seq(rng, 7, 5), h, 35), std::invalid_argument);
}

TEST(FsnForward, ZeroParametersGiveUniform) {
    Head h = make_fsn_head(small(3, 4, 8), 1);
    for (auto& l : h.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
    Rng rng(5);
    const SeqTensor p = fsn_forward(oracle::random_seq(rng, 7, 4), h, 35);
    for (double v : p.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(FsnTraining, LossMatchesIndependentForward) {
    Rng rng(6);
    const ModelConfig c = small();
    const Head h = make_fsn_head(c, 3);
    std::vector<ClipSample> batch;
    for (int n = 0; n < 3; ++n) {
        ClipSample s{oracle::random_seq(rng, 7, 8), std::vector<int>(35)};
        for (int& l : s.labels) l = static_cast<int>(rng.index(3));
        batch.push_back(s);
    }
    double want = 0.0;
    for (const auto& s : batch) {
        const SeqTensor p = fsn_forward(s.features, h, 35);
        for (std::size_t t = 0; t < 35; ++t) want -= std::log(p(t, static_cast<std::size_t>(s.labels[t])));
    }
    want /= 3.0;
    EXPECT_NEAR(fsn_loss_and_grads(batch, h).loss, want, 1e-10);

    Head frozen = h;
    nn::OptimizerState zero_lr(0.0, 0.9, 5e-4);
    fsn_train_step(batch, frozen, zero_lr);
    EXPECT_EQ(frozen, h);
}

TEST(FsnTraining, ToyProblemConverges) {
    // Two classes with separable per-snippet features; background never used.
    Rng rng(7);
    ModelConfig c = small(2, 4, 16);
    Head h = make_fsn_head(c, 8);
    std::vector<ClipSample> data;
    for (int n = 0; n < 24; ++n) {
        const int cls = 1 + n % 2;
        SeqTensor x(7, 4);
        for (std::size_t t = 0; t < 7; ++t) {
            for (std::size_t d = 0; d < 4; ++d) x(t, d) = (cls == 1 ? 1.0 : -1.0) * (d % 2 ? 1.0 : 0.5) + 0.1 * rng.normal();
        }
        data.push_back({x, std::vector<int>(35, cls)});
    }
    nn::OptimizerState state(0.01, 0.9, 0.0);
    const double first = fsn_loss_and_grads(data, h).loss;
    for (int step = 0; step < 200; ++step) fsn_train_step(std::span(data).subspan((step % 4) * 6, 6), h, state);
    EXPECT_LT(fsn_loss_and_grads(data, h).loss, 0.1 * first);
}

TEST(Wfsn, TrainAndPredictModesAgree) {
    Rng rng(8);
    for (nn::PoolMode mode : {nn::PoolMode::Max, nn::PoolMode::Average}) {
        const Head h = make_wfsn_head(small(3, 5, 8), mode, 4);
        const SeqTensor x = oracle::random_seq(rng, 100, 5);
        const SeqTensor pre = stack_forward(h, x).logits;
        const auto want = nn::softmax_vec(nn::temporal_pool(pre, mode));
        const auto got = wfsn_forward_train(x, h);
        double sum = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_DOUBLE_EQ(got[k], want[k]);
            sum += got[k];
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        const SeqTensor per_pos = wfsn_forward_predict(x, h);
        EXPECT_EQ(per_pos.time_len(), 100u);
        EXPECT_EQ(per_pos.channels(), 3u);
    }
}

TEST(Wfsn, ConstantScoresPoolIdentically) {
    Head gmp = make_wfsn_head(small(3, 2, 4), nn::PoolMode::Max, 1);
    for (auto& l : gmp.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
    gmp.layers.back().bias = {0.3, -1.0, 2.0};
    Head gap = gmp;
    gap.pooling = nn::PoolMode::Average;
    Rng rng(9);
    const SeqTensor x = oracle::random_seq(rng, 10, 2);
    const auto a = wfsn_forward_train(x, gmp);
    const auto b = wfsn_forward_train(x, gap);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-15);
}

TEST(Wfsn, SingleActivePositionDrivesMaxPooling) {
    // Without hidden layers the classifier reads the input directly; one
    // bright position makes class 2 the pooled argmax under GMP.
    ModelConfig c = small(3, 1, 1);
    c.dilations = {};
    Head h = make_wfsn_head(c, nn::PoolMode::Max, 1);
    ASSERT_EQ(h.layers.size(), 1u);
    h.layers[0].weights.assign(h.layers[0].weights.size(), 0.0);
    h.layers[0].weight(1, 0, 1) = 1.0;
    h.layers[0].bias = {0.5, 0.0, 0.5};
    SeqTensor x(20, 1);
    x(7, 0) = 10.0;
    const auto v = wfsn_forward_train(x, h);
    EXPECT_EQ(std::max_element(v.begin(), v.end()) - v.begin(), 1);
}

TEST(Wfsn, MultiLabelLossAveragesPositives) {
    Head h = make_wfsn_head(small(3, 2, 4), nn::PoolMode::Max, 2);
    Rng rng(10);
    WeakSample s{oracle::random_seq(rng, 10, 2), {1, 0, 1}};
    const auto p = wfsn_forward_train(s.features, h);
    const double want = -0.5 * (std::log(p[0]) + std::log(p[2]));
    EXPECT_NEAR(wfsn_loss_and_grads(std::vector<WeakSample>{s}, h).loss, want, 1e-12);
    s.video_label = {0, 0, 0};
    EXPECT_THROW(wfsn_loss_and_grads(std::vector<WeakSample>{s}, h), std::invalid_argument);
}

TEST(Serialization, RoundTripIsExact) {
    Rng rng(11);
    for (const Head& h : {make_fsn_head(small(), 1), make_wfsn_head(small(), nn::PoolMode::Average, 2),
                          make_ablation_head(small(), 3)}) {
        Head trained = h;
        for (auto& l : trained.layers) {
            for (double& b : l.bias) b = rng.normal();
        }
        const auto a = temp_file("a.fsn"), b = temp_file("b.fsn");
        save_model(trained, a);
        const Head loaded = load_model(a);
        EXPECT_EQ(loaded, trained);
        save_model(loaded, b);
        EXPECT_EQ(read_bytes(a), read_bytes(b));
        const SeqTensor x = oracle::random_seq(rng, 7, 8);
        EXPECT_EQ(stack_forward(loaded, x).logits, stack_forward(trained, x).logits);
    }
}

TEST(Serialization, RejectsMismatchAndCorruption) {
    const auto path = temp_file("m.fsn");
    save_model(make_fsn_head(small(2, 8, 4), 1), path);
    EXPECT_THROW(load_model(path, 3, 8), std::runtime_error);
    EXPECT_THROW(load_model(path, 2, 9), std::runtime_error);
    EXPECT_NO_THROW(load_model(path, 2, 8));

    std::string bytes = read_bytes(path);
    const auto bad = temp_file("bad.fsn");
    {
        std::ofstream out(bad, std::ios::binary);
        out << bytes.substr(0, bytes.size() - 3);
    }
    EXPECT_THROW(load_model(bad), std::runtime_error);
    {
        std::ofstream out(bad, std::ios::binary);
        out << bytes << 'x';
    }
    EXPECT_THROW(load_model(bad), std::runtime_error);
    {
        std::string v = bytes;
        v[4] = 9;  // format version
        std::ofstream out(bad, std::ios::binary);
        out << v;
    }
    EXPECT_THROW(load_model(bad), std::runtime_error);
    {
        std::string v = bytes;
        v[0] = 'X';
        std::ofstream out(bad, std::ios::binary);
        out << v;
    }
    EXPECT_THROW(load_model(bad), std::runtime_error);
}

TEST(Serialization, PoolingRoundTrips) {
    const auto path = temp_file("w.fsn");
    save_model(make_wfsn_head(small(), nn::PoolMode::Average, 1), path);
    EXPECT_EQ(load_model(path).pooling, nn::PoolMode::Average);
    save_model(make_wfsn_head(small(), nn::PoolMode::Max, 1), path);
    EXPECT_EQ(load_model(path).pooling, nn::PoolMode::Max);
}

TEST(FuseStreams, ConvexCombination) {
    Rng rng(12);
    const Head h = make_fsn_head(small(), 1);
    FrameScoreTrack a{"v", fsn_forward(oracle::random_seq(rng, 7, 8), h, 35), true};
    FrameScoreTrack b{"v", fsn_forward(oracle::random_seq(rng, 7, 8), h, 35), true};
    EXPECT_EQ(fuse_streams(a, b, 1.0).scores, a.scores);
    EXPECT_EQ(fuse_streams(a, a).scores, a.scores);
    const auto f = fuse_streams(a, b);
    for (std::size_t t = 0; t < 35; ++t) {
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) s += f.scores(t, k);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    b.scores = SeqTensor(34, 3);
    EXPECT_THROW(fuse_streams(a, b), std::invalid_argument);
}
