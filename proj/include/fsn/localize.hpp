#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "fsn/model.hpp"
#include "fsn/types.hpp"

namespace fsn {

// Scores a whole video with consecutive non-overlapping windows of clip_len
// frames. The tail window repeats the last frame's descriptor and its output
// is truncated to the true length.
FrameScoreTrack slide_predict(const Head& head, const VideoFeatures& video);

enum class WeakExpansion { Nearest, Linear };

// Weak head over M positions, one per span [i*len/M, (i+1)*len/M), each
// represented by the span's center frame. M is clamped to the frame count.
FrameScoreTrack weak_predict_track(const Head& head, const VideoFeatures& video, std::size_t m,
                                   WeakExpansion expansion = WeakExpansion::Nearest);

// Maximal runs of frames whose class score is strictly above `threshold`;
// confidence is the mean class score over the run.
std::vector<SegmentPrediction> threshold_group(const FrameScoreTrack& track, int class_id, double threshold);

// Union of threshold_group over thresholds 0.0, 0.1, ..., 1.0 without exact duplicates.
std::vector<SegmentPrediction> multi_threshold_group(const FrameScoreTrack& track, int class_id);

// |a ∩ b| / |a ∪ b| over half-open frame intervals.
double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end);

inline double temporal_iou(const SegmentPrediction& a, const SegmentPrediction& b) {
    return temporal_iou(a.start, a.end, b.start, b.end);
}

// Greedy suppression per (video, class): keeps the best remaining segment and
// drops those overlapping it with IoU > iou_threshold. Order of the result is
// the keep order.
std::vector<SegmentPrediction> nms(std::vector<SegmentPrediction> segments, double iou_threshold);

// Suppression threshold used for a given evaluation IoU.
inline double nms_threshold_for(double eval_iou) { return eval_iou - 0.1; }

// Grouping + per-class NMS for every action class of every track.
std::vector<SegmentPrediction> segments_from_tracks(std::span<const FrameScoreTrack> tracks, double eval_iou,
                                                    std::size_t threads = 1);

std::vector<FrameScoreTrack> predict_tracks(const Head& head, std::span<const VideoFeatures> videos,
                                            std::size_t threads = 1);
std::vector<FrameScoreTrack> predict_weak_tracks(const Head& head, std::span<const VideoFeatures> videos,
                                                 std::size_t m, std::size_t threads = 1);

std::vector<SegmentPrediction> localize_strong(const Head& head, std::span<const VideoFeatures> videos,
                                               double eval_iou, std::size_t threads = 1);
std::vector<SegmentPrediction> localize_weak(const Head& head, std::span<const VideoFeatures> videos,
                                             double eval_iou, std::size_t m = 100, std::size_t threads = 1);

// Sorts by (video_id, class, start, end), then confidence descending.
void sort_predictions(std::vector<SegmentPrediction>& predictions);

// Tab-separated with a header line; confidence printed with 6 decimals.
void write_predictions(const std::vector<SegmentPrediction>& predictions, const std::filesystem::path& path);
std::vector<SegmentPrediction> load_predictions(const std::filesystem::path& path);

// Binary track archive ("FSNT") holding every track of a prediction run.
void write_tracks(std::span<const FrameScoreTrack> tracks, const std::filesystem::path& path);
std::vector<FrameScoreTrack> load_tracks(const std::filesystem::path& path);

}  // namespace fsn
