#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fsn/types.hpp"

namespace fsn {

// ---- feature and annotation files ----

// .fsnf: "FSNF", u32 version, u32 D, u32 frame_count, then frame_count*D
// float32 values, row-major by frame. The video id is the file stem.
void write_features(const VideoFeatures& video, const std::filesystem::path& path);
VideoFeatures load_features(const std::filesystem::path& path);

// Loads every *.fsnf under `dir`, sorted by video id. Rejects mixed D.
std::vector<VideoFeatures> load_feature_dir(const std::filesystem::path& dir);
// Loads the named videos from `dir` (file `<id>.fsnf`), in the given order.
std::vector<VideoFeatures> load_feature_dir(const std::filesystem::path& dir,
                                            const std::vector<std::string>& video_ids);

struct AnnotationSet {
    std::vector<std::string> class_names;  // index k-1 names class k
    std::vector<GroundTruthSegment> segments;

    std::size_t num_classes() const { return class_names.size(); }
    std::vector<GroundTruthSegment> for_video(const std::string& video_id) const;
};

// Tab-separated text. First line: "#K", K, then K class names. Each further
// line: video_id, start, end, class_id with [start, end) 0-based frames.
void write_annotations(const AnnotationSet& annotations, const std::filesystem::path& path);
// When `frame_counts` is given, every segment is checked against its video.
AnnotationSet load_annotations(const std::filesystem::path& path,
                               const std::map<std::string, std::size_t>* frame_counts = nullptr);

// ---- labels and training samples ----

// Class id per frame (0 = background). Overlaps resolve to the earliest-starting segment.
std::vector<int> frame_labels(std::size_t frame_count, const std::vector<GroundTruthSegment>& segments);

// Frame representing snippet i of a window starting at `window_start`.
inline std::size_t snippet_center(std::size_t window_start, std::size_t snippet, std::size_t snippet_len) {
    return window_start + snippet * snippet_len + snippet_len / 2;
}

inline constexpr std::size_t kMinActionFrames = 5;

struct ClipOptions {
    std::size_t clip_len = 35;
    std::size_t snippet_len = 5;
    std::size_t stride = 35;
    std::size_t min_action_frames = kMinActionFrames;
};

// Windows of clip_len frames every `stride` frames that hold at least
// min_action_frames action frames. A video shorter than clip_len yields none.
std::vector<ClipSample> make_clips(const VideoFeatures& video,
                                   const std::vector<GroundTruthSegment>& segments,
                                   const ClipOptions& options = {});

// Majority non-background class of a clip's frame labels (ties to the lower id).
int clip_majority_class(const ClipSample& clip);

// Oversamples clips with replacement until every class reaches the largest class count.
std::vector<ClipSample> rebalance(const std::vector<ClipSample>& clips, std::uint64_t seed);

// Splits the video into M equal spans [i*len/M, (i+1)*len/M) and takes one
// uniformly random frame per span.
WeakSample make_weak_sample(const VideoFeatures& video, const std::vector<int>& video_label,
                            std::size_t m, std::uint64_t seed);
// Frame indices chosen by make_weak_sample for the same arguments.
std::vector<std::size_t> weak_sample_frames(std::size_t frame_count, std::size_t m, std::uint64_t seed);

// Multi-hot label of length K from the classes present in `segments`.
std::vector<int> video_label(const std::vector<GroundTruthSegment>& segments, std::size_t num_classes);

// ---- synthetic data ----

struct SynthConfig {
    std::size_t num_videos = 80;
    std::size_t frames_per_video = 600;
    std::size_t num_classes = 4;
    std::size_t feature_dim = 16;
    double prototype_noise = 0.8;
    bool context_ambiguity = true;
    double instance_density = 0.25;
    std::size_t min_instance_len = 20;
    std::size_t max_instance_len = 40;
    std::size_t min_gap = 10;
    bool single_class_videos = false;
    // Off: background frames are pure noise around the origin.
    bool structured_background = true;
    double train_fraction = 0.75;
    std::uint64_t seed = 42;

    void validate() const;
};

// Feature-space vectors every synthetic video is drawn around.
struct SynthPrototypes {
    std::vector<double> background;
    // phases[k-1] lists the prototype of each phase of a class-k instance.
    std::vector<std::vector<std::vector<double>>> phases;
};

struct SynthDataset {
    SynthConfig config;
    SynthPrototypes prototypes;
    std::vector<VideoFeatures> videos;
    AnnotationSet annotations;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

SynthPrototypes synth_prototypes(const SynthConfig& config);

// Renders one video with the given instances; values are rounded to float32
// so feature-file round trips are exact.
VideoFeatures synth_render(const SynthConfig& config, const SynthPrototypes& prototypes,
                           const std::string& video_id, std::size_t frame_count,
                           const std::vector<GroundTruthSegment>& instances, std::uint64_t seed);

SynthDataset synth_generate(const SynthConfig& config);

// Dataset on disk: features/<id>.fsnf, annotations.tsv, manifest.txt.
void write_dataset(const SynthDataset& dataset, const std::filesystem::path& dir);

struct Manifest {
    std::map<std::string, std::string> config;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

Manifest load_manifest(const std::filesystem::path& path);

}  // namespace fsn
