#pragma once

// Plain data carriers shared by the data, model, localize and eval layers.

#include <cstddef>
#include <string>
#include <vector>

#include "fsn/seq_tensor.hpp"

namespace fsn {

// Per-frame descriptors of one untrimmed video.
struct VideoFeatures {
    std::string video_id;
    SeqTensor features;  // frame_count x D

    std::size_t frame_count() const { return features.time_len(); }
    std::size_t feature_dim() const { return features.channels(); }
};

// Annotated action instance over frames [start, end).
struct GroundTruthSegment {
    std::string video_id;
    std::size_t start = 0;
    std::size_t end = 0;
    int class_id = 1;

    friend bool operator==(const GroundTruthSegment&, const GroundTruthSegment&) = default;
};

// Strongly supervised training clip: N snippet-center descriptors and T frame labels.
struct ClipSample {
    SeqTensor features;
    std::vector<int> labels;
};

// Weakly supervised sample: M sampled descriptors and a multi-hot video label.
struct WeakSample {
    SeqTensor features;
    std::vector<int> video_label;
};

// Dense per-frame class probabilities for one video. Column 0 is background
// when `has_background` is set; otherwise column k-1 holds action class k.
struct FrameScoreTrack {
    std::string video_id;
    SeqTensor scores;
    bool has_background = true;

    std::size_t frame_count() const { return scores.time_len(); }
    std::size_t num_classes() const { return has_background ? scores.channels() - 1 : scores.channels(); }
    std::size_t column(int class_id) const {
        return has_background ? static_cast<std::size_t>(class_id)
                              : static_cast<std::size_t>(class_id - 1);
    }
};

struct SegmentPrediction {
    std::string video_id;
    std::size_t start = 0;
    std::size_t end = 0;
    int class_id = 1;
    double confidence = 0.0;

    friend bool operator==(const SegmentPrediction&, const SegmentPrediction&) = default;
};

}  // namespace fsn
