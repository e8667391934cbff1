#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <functional>

#include "fsn/localize.hpp"
#include "fsn/random.hpp"
#include "oracles.hpp"

using namespace fsn;

namespace {

// Track with background column 0 and one action class in column 1.
FrameScoreTrack single_class_track(const std::vector<double>& scores, const std::string& id = "v") {
    SeqTensor s(scores.size(), 2);
    for (std::size_t t = 0; t < scores.size(); ++t) {
        s(t, 1) = scores[t];
        s(t, 0) = 1.0 - scores[t];
    }
    return {id, s, true};
}

ModelConfig small() {
    ModelConfig c;
    c.num_classes = 2;
    c.feature_dim = 3;
    c.hidden_channels = 6;
    return c;
}

std::vector<SegmentPrediction> random_segments(Rng& rng, std::size_t n, std::size_t span) {
    std::vector<SegmentPrediction> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = rng.index(span), len = 1 + rng.index(span / 2);
        // Coarse confidences so ties actually occur.
        out.push_back({rng.index(3) ? "a" : "b", a, a + len, static_cast<int>(1 + rng.index(2)),
                       static_cast<double>(rng.index(4)) / 4.0});
    }
    return out;
}

}  // namespace

TEST(ThresholdGroup, HandExample) {
    const auto segs = threshold_group(single_class_track({.1, .8, .9, .2}), 1, 0.5);
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].start, 1u);
    EXPECT_EQ(segs[0].end, 3u);
    EXPECT_DOUBLE_EQ(segs[0].confidence, 0.85);
    EXPECT_TRUE(threshold_group(single_class_track({.1, 1.0, .9}), 1, 1.0).empty());
    const auto all = threshold_group(single_class_track({.1, .2, .3}), 1, 0.0);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_EQ(all[0].start, 0u);
    EXPECT_EQ(all[0].end, 3u);
}

TEST(ThresholdGroup, RunsMatchBruteScan) {
    Rng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> s(1 + rng.index(30));
        for (double& v : s) v = static_cast<double>(rng.index(11)) / 10.0;
        const double theta = static_cast<double>(rng.index(11)) / 10.0;
        const auto segs = threshold_group(single_class_track(s), 1, theta);
        std::vector<bool> covered(s.size(), false);
        std::size_t prev_end = 0;
        for (const auto& g : segs) {
            EXPECT_GE(g.start, prev_end);
            EXPECT_LT(g.start, g.end);
            // Maximal: neighbours fall at or below the threshold.
            if (g.start > 0) EXPECT_LE(s[g.start - 1], theta);
            if (g.end < s.size()) EXPECT_LE(s[g.end], theta);
            double mean = 0;
            for (std::size_t t = g.start; t < g.end; ++t) {
                covered[t] = true;
                mean += s[t];
            }
            EXPECT_NEAR(g.confidence, mean / static_cast<double>(g.end - g.start), 1e-12);
            prev_end = g.end;
        }
        for (std::size_t t = 0; t < s.size(); ++t) EXPECT_EQ(covered[t], s[t] > theta);
    }
}

TEST(ThresholdGroup, RaisingThresholdOnlyShrinks) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(40);
        for (double& v : s) v = rng.uniform();
        const auto loose = threshold_group(single_class_track(s), 1, 0.3);
        for (const auto& tight : threshold_group(single_class_track(s), 1, 0.6)) {
            bool inside = false;
            for (const auto& l : loose) inside = inside || (l.start <= tight.start && tight.end <= l.end);
            EXPECT_TRUE(inside);
        }
    }
}

TEST(MultiThreshold, NestedBumpAndFlatBackground) {
    const auto bump = multi_threshold_group(single_class_track({0.05, 0.15, 0.35, 0.75, 0.35, 0.15, 0.05}), 1);
    // Distinct super-threshold runs: theta 0 -> [0,7), 0.1 -> [1,6), 0.2/0.3 -> [2,5), 0.4..0.7 -> [3,4).
    ASSERT_EQ(bump.size(), 4u);
    for (std::size_t i = 1; i < bump.size(); ++i) {
        bool nested = false;
        for (std::size_t j = 0; j < bump.size(); ++j) {
            nested = nested || (bump[j].start <= bump[i].start && bump[i].end <= bump[j].end && i != j);
        }
        EXPECT_TRUE(nested || bump[i].end - bump[i].start == 7);
    }
    const auto flat = multi_threshold_group(single_class_track({0.05, 0.02, 0.08}), 1);
    ASSERT_EQ(flat.size(), 1u);
    EXPECT_EQ(flat[0].end - flat[0].start, 3u);
}

TEST(MultiThreshold, CountBound) {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(50);
        for (double& v : s) v = rng.uniform();
        std::size_t runs = 0;
        for (int i = 0; i <= 10; ++i) runs += threshold_group(single_class_track(s), 1, i / 10.0).size();
        EXPECT_LE(multi_threshold_group(single_class_track(s), 1).size(), runs);

        // Unimodal tracks never split a run, so 11 per loosest run is a bound.
        std::sort(s.begin(), s.begin() + 25);
        std::sort(s.begin() + 25, s.end(), std::greater<>());
        const auto track = single_class_track(s);
        EXPECT_LE(multi_threshold_group(track, 1).size(), 11 * threshold_group(track, 1, 0.0).size());
    }
}

TEST(TemporalIou, ExamplesAndOracle) {
    EXPECT_EQ(temporal_iou(3, 9, 3, 9), 1.0);
    EXPECT_DOUBLE_EQ(temporal_iou(10, 20, 15, 25), 5.0 / 15.0);
    EXPECT_EQ(temporal_iou(0, 5, 5, 9), 0.0);
    EXPECT_THROW(temporal_iou(4, 4, 1, 3), std::invalid_argument);
    Rng rng(4);
    for (int trial = 0; trial < 2000; ++trial) {
        const std::size_t a = rng.index(40), b = rng.index(40);
        const std::size_t ae = a + 1 + rng.index(20), be = b + 1 + rng.index(20);
        const double iou = temporal_iou(a, ae, b, be);
        ASSERT_EQ(iou, oracle::frame_set_iou(a, ae, b, be));
        ASSERT_EQ(iou, temporal_iou(b, be, a, ae));
        ASSERT_EQ(iou == 1.0, a == b && ae == be);
    }
}

TEST(Nms, Examples) {
    const SegmentPrediction s{"v", 0, 10, 1, 0.9};
    EXPECT_EQ(nms({s, s}, 0.4).size(), 1u);
    const std::vector<SegmentPrediction> disjoint{{"v", 0, 5, 1, 0.2}, {"v", 5, 9, 1, 0.9}, {"v", 20, 30, 1, 0.5}};
    EXPECT_EQ(nms(disjoint, 0.0).size(), 3u);
    // Same interval, different class or video: both kept.
    EXPECT_EQ(nms({s, {"v", 0, 10, 2, 0.5}, {"w", 0, 10, 1, 0.5}}, 0.1).size(), 3u);
}

TEST(Nms, MatchesExhaustiveGreedy) {
    Rng rng(5);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto segs = random_segments(rng, 1 + rng.index(8), 30);
        const double thr = static_cast<double>(rng.index(8)) / 10.0;
        const auto got = nms(segs, thr);
        ASSERT_EQ(got, oracle::greedy_nms(segs, thr));
        for (std::size_t i = 0; i < got.size(); ++i) {
            for (std::size_t j = i + 1; j < got.size(); ++j) {
                if (got[i].video_id == got[j].video_id && got[i].class_id == got[j].class_id) {
                    EXPECT_LE(temporal_iou(got[i], got[j]), thr);
                }
            }
        }
    }
}

TEST(Nms, ThresholdIsEvalIouMinusPointOne) {
    EXPECT_NEAR(nms_threshold_for(0.5), 0.4, 1e-15);
    EXPECT_NEAR(nms_threshold_for(0.3), 0.2, 1e-15);
}

TEST(SlidePredict, LengthsAndPadding) {
    const Head head = make_fsn_head(small(), 1);
    Rng rng(6);
    for (std::size_t frames : {70u, 36u, 35u, 12u, 5u}) {
        const VideoFeatures v{"v", oracle::random_seq(rng, frames, 3)};
        const FrameScoreTrack track = slide_predict(head, v);
        ASSERT_EQ(track.frame_count(), frames);
        EXPECT_EQ(track.scores.channels(), 3u);
        for (std::size_t t = 0; t < frames; ++t) {
            double s = 0;
            for (std::size_t k = 0; k < 3; ++k) s += track.scores(t, k);
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
    // The frame after the first window is scored by a window padded with
    // copies of the last frame's descriptor.
    const VideoFeatures v{"v", oracle::random_seq(rng, 36, 3)};
    SeqTensor padded(7, 3);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t d = 0; d < 3; ++d) padded(i, d) = v.features(35, d);
    }
    const SeqTensor want = fsn_forward(padded, head, 35);
    const FrameScoreTrack track = slide_predict(head, v);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(track.scores(35, k), want(0, k));

    EXPECT_THROW(slide_predict(head, {"v", SeqTensor(4, 3)}), std::invalid_argument);
    EXPECT_THROW(slide_predict(make_wfsn_head(small(), nn::PoolMode::Max, 1), v), std::invalid_argument);
}

TEST(SlidePredict, TwoFullWindowsNeedNoPadding) {
    const Head head = make_fsn_head(small(), 2);
    Rng rng(7);
    const VideoFeatures v{"v", oracle::random_seq(rng, 70, 3)};
    const FrameScoreTrack track = slide_predict(head, v);
    SeqTensor second(7, 3);
    for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t d = 0; d < 3; ++d) second(i, d) = v.features(35 + i * 5 + 2, d);
    }
    const SeqTensor want = fsn_forward(second, head, 35);
    for (std::size_t t = 0; t < 35; ++t) EXPECT_EQ(track.scores(35 + t, 1), want(t, 1));
}

TEST(WeakPredict, IdentityAndSpans) {
    Head head = make_wfsn_head(small(), nn::PoolMode::Max, 3);
    Rng rng(8);
    const VideoFeatures v{"v", oracle::random_seq(rng, 50, 3)};
    const FrameScoreTrack full = weak_predict_track(head, v, 50);
    EXPECT_FALSE(full.has_background);
    EXPECT_EQ(full.scores, wfsn_forward_predict(v.features, head));
    // M larger than the video is clamped.
    EXPECT_EQ(weak_predict_track(head, v, 80).scores, full.scores);

    // One strongly activated position covers exactly its span.
    ModelConfig c = small();
    c.dilations = {};
    Head lone = make_wfsn_head(c, nn::PoolMode::Max, 1);
    lone.layers[0].weights.assign(lone.layers[0].weights.size(), 0.0);
    lone.layers[0].weight(0, 0, 1) = 1.0;
    VideoFeatures spike{"s", SeqTensor(100, 3)};
    for (std::size_t t = 40; t < 50; ++t) spike.features(t, 0) = 20.0;
    const FrameScoreTrack track = weak_predict_track(lone, spike, 10);
    const auto segs = threshold_group(track, 1, 0.9);
    ASSERT_EQ(segs.size(), 1u);
    EXPECT_EQ(segs[0].start, 40u);
    EXPECT_EQ(segs[0].end, 50u);
    for (const auto& s : multi_threshold_group(track, 1)) {
        EXPECT_EQ(s.start % 10, 0u);
        EXPECT_EQ(s.end % 10, 0u);
    }
}

TEST(Localize, EmptyAndConfidenceRange) {
    const Head head = make_fsn_head(small(), 4);
    EXPECT_TRUE(localize_strong(head, {}, 0.5).empty());
    Rng rng(9);
    std::vector<VideoFeatures> videos{{"a", oracle::random_seq(rng, 120, 3)}, {"b", oracle::random_seq(rng, 80, 3)}};
    const auto preds = localize_strong(head, videos, 0.5, 2);
    EXPECT_FALSE(preds.empty());
    for (const auto& p : preds) {
        EXPECT_GE(p.confidence, 0.0);
        EXPECT_LE(p.confidence, 1.0);
    }
    EXPECT_EQ(preds, localize_strong(head, videos, 0.5, 1));
}

TEST(PredictionFiles, RoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "fsn_localize_tests";
    std::filesystem::create_directories(dir);
    std::vector<SegmentPrediction> preds{{"b", 3, 9, 2, 0.5}, {"a", 0, 4, 1, 0.125}};
    sort_predictions(preds);
    EXPECT_EQ(preds.front().video_id, "a");
    write_predictions(preds, dir / "p.tsv");
    EXPECT_EQ(load_predictions(dir / "p.tsv"), preds);
    write_predictions({}, dir / "empty.tsv");
    EXPECT_TRUE(load_predictions(dir / "empty.tsv").empty());

    Rng rng(10);
    std::vector<FrameScoreTrack> tracks{single_class_track({.1, .7, .2}, "a"), {"b", oracle::random_seq(rng, 4, 3), false}};
    write_tracks(tracks, dir / "t.fsnt");
    const auto back = load_tracks(dir / "t.fsnt");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].scores, tracks[1].scores);
    EXPECT_FALSE(back[1].has_background);
    EXPECT_EQ(back[0].video_id, "a");
}
