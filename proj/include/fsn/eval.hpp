#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsn/types.hpp"

namespace fsn {

struct RankedItem {
    double confidence = 0.0;
    bool true_positive = false;
};

// Non-interpolated AP: mean of precision@rank over the true-positive ranks,
// divided by num_positives. Confidence ties keep input order. 0 when there
// are no positives.
double average_precision(std::span<const RankedItem> ranked, long num_positives);

struct PrPoint {
    double precision = 0.0;
    double recall = 0.0;
};

std::vector<PrPoint> precision_recall_curve(std::span<const RankedItem> ranked, long num_positives);

std::vector<double> strong_iou_thresholds();  // 0.3 .. 0.7
std::vector<double> weak_iou_thresholds();    // 0.1 .. 0.5

struct EvalConfig {
    std::vector<double> iou_thresholds = strong_iou_thresholds();
    std::size_t num_classes = 1;

    void validate() const;
};

struct FrameLevelResult {
    std::vector<double> class_ap;  // index k-1
    double map = 0.0;
};

struct EvalReport {
    std::vector<double> iou_thresholds;
    std::vector<std::vector<double>> class_ap;  // [k-1][threshold]
    std::vector<double> map;                    // per threshold
    std::optional<FrameLevelResult> frame;
};

// Pools every frame of every track; per class, positives are frames labeled k.
// `labels` maps video id to per-frame class ids (0 = background).
FrameLevelResult frame_level_map(std::span<const FrameScoreTrack> tracks,
                                 const std::map<std::string, std::vector<int>>& labels, std::size_t num_classes);

// Greedy matching: predictions in descending confidence take the unmatched
// same-class ground truth in the same video with the highest IoU, provided it
// is strictly above the threshold. `video_ids` lists the evaluated videos; if
// empty, the videos present in `ground_truth` are used.
EvalReport segment_level_map(std::span<const SegmentPrediction> predictions,
                             std::span<const GroundTruthSegment> ground_truth, const EvalConfig& config,
                             std::span<const std::string> video_ids = {});

// Ranked list for one class/threshold; exposed for curve dumps and tests.
std::vector<RankedItem> match_class(std::span<const SegmentPrediction> predictions,
                                    std::span<const GroundTruthSegment> ground_truth, int class_id,
                                    double iou_threshold, long* num_positives);

// Segment-level CSV: header "class,iou_<thr>..."; rows class_1..class_K then
// mAP, 4 decimals. The frame-level result is not part of this file.
void emit_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

// Frame-level CSV: "class,frame_ap", rows class_1..class_K then mAP.
void emit_frame_report(const FrameLevelResult& frame, const std::filesystem::path& path);
FrameLevelResult load_frame_report(const std::filesystem::path& path);

// One CSV per class and threshold: pr_class<k>_iou<thr>.csv with rank,precision,recall.
void emit_pr_curves(std::span<const SegmentPrediction> predictions, std::span<const GroundTruthSegment> ground_truth,
                    const EvalConfig& config, const std::filesystem::path& dir);

}  // namespace fsn
