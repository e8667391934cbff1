#include "fsn/localize.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "binary_io.hpp"
#include "fsn/data.hpp"
#include "fsn/parallel.hpp"

namespace fsn {

FrameScoreTrack slide_predict(const Head& head, const VideoFeatures& video) {
    if (head.kind == HeadKind::Wfsn) throw std::invalid_argument("slide_predict: weak heads use weak_predict_track");
    const std::size_t clip = head.config.clip_len;
    const std::size_t snip = head.config.snippet_len;
    const std::size_t frames = video.frame_count();
    if (frames < snip) {
        throw std::invalid_argument("slide_predict: video " + video.video_id + " has " + std::to_string(frames) +
                                    " frames, fewer than one snippet of " + std::to_string(snip));
    }
    const std::size_t snippets = clip / snip;
    FrameScoreTrack track{video.video_id, SeqTensor(frames, head.output_channels()), true};
    for (std::size_t start = 0; start < frames; start += clip) {
        SeqTensor window(snippets, video.feature_dim());
        for (std::size_t i = 0; i < snippets; ++i) {
            const std::size_t src = std::min(snippet_center(start, i, snip), frames - 1);
            const auto row = video.features.row(src);
            std::copy(row.begin(), row.end(), window.row(i).begin());
        }
        const SeqTensor scores = fsn_forward(window, head, clip);
        for (std::size_t t = 0; t < clip && start + t < frames; ++t) {
            const auto r = scores.row(t);
            std::copy(r.begin(), r.end(), track.scores.row(start + t).begin());
        }
    }
    return track;
}

FrameScoreTrack weak_predict_track(const Head& head, const VideoFeatures& video, std::size_t m,
                                   WeakExpansion expansion) {
    if (head.kind != HeadKind::Wfsn) throw std::invalid_argument("weak_predict_track: head is not a weak head");
    const std::size_t frames = video.frame_count();
    m = std::clamp<std::size_t>(m, 1, frames);
    SeqTensor positions(m, video.feature_dim());
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i * frames / m;
        const std::size_t hi = (i + 1) * frames / m;
        const auto row = video.features.row(lo + (hi - lo - 1) / 2);
        std::copy(row.begin(), row.end(), positions.row(i).begin());
    }
    const SeqTensor scores = wfsn_forward_predict(positions, head);
    FrameScoreTrack track{video.video_id, SeqTensor(frames, head.output_channels()), false};
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i * frames / m;
        const std::size_t hi = (i + 1) * frames / m;
        for (std::size_t t = lo; t < hi; ++t) {
            auto dst = track.scores.row(t);
            if (expansion == WeakExpansion::Nearest || m == 1) {
                const auto src = scores.row(i);
                std::copy(src.begin(), src.end(), dst.begin());
                continue;
            }
            // Linear: blend between neighbouring span centers.
            const double center = 0.5 * static_cast<double>(lo + hi - 1);
            const std::size_t other = static_cast<double>(t) < center ? (i == 0 ? 0 : i - 1) : std::min(i + 1, m - 1);
            const double other_center =
                0.5 * static_cast<double>(other * frames / m + (other + 1) * frames / m - 1);
            const double dist = std::abs(other_center - center);
            const double alpha = dist > 0.0 ? std::abs(static_cast<double>(t) - center) / dist : 0.0;
            const auto a = scores.row(i);
            const auto b = scores.row(other);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = (1.0 - alpha) * a[c] + alpha * b[c];
        }
    }
    return track;
}

std::vector<SegmentPrediction> threshold_group(const FrameScoreTrack& track, int class_id, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw std::invalid_argument("threshold_group: threshold outside [0, 1]");
    if (class_id < 1 || static_cast<std::size_t>(class_id) > track.num_classes()) {
        throw std::invalid_argument("threshold_group: class " + std::to_string(class_id) + " not in track");
    }
    const std::size_t col = track.column(class_id);
    std::vector<SegmentPrediction> out;
    const std::size_t frames = track.frame_count();
    std::size_t t = 0;
    while (t < frames) {
        if (!(track.scores(t, col) > threshold)) {
            ++t;
            continue;
        }
        const std::size_t start = t;
        double sum = 0.0;
        while (t < frames && track.scores(t, col) > threshold) sum += track.scores(t++, col);
        out.push_back({track.video_id, start, t, class_id, sum / static_cast<double>(t - start)});
    }
    return out;
}

std::vector<SegmentPrediction> multi_threshold_group(const FrameScoreTrack& track, int class_id) {
    std::vector<SegmentPrediction> out;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (int step = 0; step <= 10; ++step) {
        for (auto& seg : threshold_group(track, class_id, static_cast<double>(step) / 10.0)) {
            if (seen.emplace(seg.start, seg.end).second) out.push_back(std::move(seg));
        }
    }
    return out;
}

double temporal_iou(std::size_t a_start, std::size_t a_end, std::size_t b_start, std::size_t b_end) {
    if (a_start >= a_end || b_start >= b_end) throw std::invalid_argument("temporal_iou: degenerate interval");
    const std::size_t lo = std::max(a_start, b_start);
    const std::size_t hi = std::min(a_end, b_end);
    const std::size_t inter = hi > lo ? hi - lo : 0;
    const std::size_t uni = (a_end - a_start) + (b_end - b_start) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<SegmentPrediction> nms(std::vector<SegmentPrediction> segments, double iou_threshold) {
    std::stable_sort(segments.begin(), segments.end(), [](const SegmentPrediction& a, const SegmentPrediction& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.start != b.start) return a.start < b.start;
        return (a.end - a.start) < (b.end - b.start);
    });
    std::vector<SegmentPrediction> kept;
    std::vector<bool> removed(segments.size(), false);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (removed[i]) continue;
        kept.push_back(segments[i]);
        for (std::size_t j = i + 1; j < segments.size(); ++j) {
            if (removed[j] || segments[j].class_id != segments[i].class_id ||
                segments[j].video_id != segments[i].video_id) {
                continue;
            }
            if (temporal_iou(segments[i], segments[j]) > iou_threshold) removed[j] = true;
        }
    }
    return kept;
}

void sort_predictions(std::vector<SegmentPrediction>& predictions) {
    std::stable_sort(predictions.begin(), predictions.end(), [](const SegmentPrediction& a, const SegmentPrediction& b) {
        return std::tie(a.video_id, a.class_id, a.start, a.end, b.confidence) <
               std::tie(b.video_id, b.class_id, b.start, b.end, a.confidence);
    });
}

std::vector<SegmentPrediction> segments_from_tracks(std::span<const FrameScoreTrack> tracks, double eval_iou,
                                                    std::size_t threads) {
    const double nms_iou = nms_threshold_for(eval_iou);
    std::vector<std::vector<SegmentPrediction>> per_video(tracks.size());
    parallel_for(tracks.size(), threads, [&](std::size_t v) {
        for (std::size_t k = 1; k <= tracks[v].num_classes(); ++k) {
            auto kept = nms(multi_threshold_group(tracks[v], static_cast<int>(k)), nms_iou);
            per_video[v].insert(per_video[v].end(), kept.begin(), kept.end());
        }
    });
    std::vector<SegmentPrediction> all;
    for (auto& segs : per_video) all.insert(all.end(), segs.begin(), segs.end());
    sort_predictions(all);
    return all;
}

std::vector<FrameScoreTrack> predict_tracks(const Head& head, std::span<const VideoFeatures> videos,
                                            std::size_t threads) {
    std::vector<FrameScoreTrack> tracks(videos.size());
    parallel_for(videos.size(), threads, [&](std::size_t v) { tracks[v] = slide_predict(head, videos[v]); });
    return tracks;
}

std::vector<FrameScoreTrack> predict_weak_tracks(const Head& head, std::span<const VideoFeatures> videos,
                                                 std::size_t m, std::size_t threads) {
    std::vector<FrameScoreTrack> tracks(videos.size());
    parallel_for(videos.size(), threads, [&](std::size_t v) { tracks[v] = weak_predict_track(head, videos[v], m); });
    return tracks;
}

std::vector<SegmentPrediction> localize_strong(const Head& head, std::span<const VideoFeatures> videos,
                                               double eval_iou, std::size_t threads) {
    const auto tracks = predict_tracks(head, videos, threads);
    return segments_from_tracks(tracks, eval_iou, threads);
}

std::vector<SegmentPrediction> localize_weak(const Head& head, std::span<const VideoFeatures> videos,
                                             double eval_iou, std::size_t m, std::size_t threads) {
    const auto tracks = predict_weak_tracks(head, videos, m, threads);
    return segments_from_tracks(tracks, eval_iou, threads);
}

void write_predictions(const std::vector<SegmentPrediction>& predictions, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "video_id\tstart\tend\tclass_id\tconfidence\n";
    char conf[32];
    for (const auto& p : predictions) {
        std::snprintf(conf, sizeof conf, "%.6f", p.confidence);
        out << p.video_id << '\t' << p.start << '\t' << p.end << '\t' << p.class_id << '\t' << conf << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SegmentPrediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prediction file " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("video_id\t", 0) != 0) {
        throw std::runtime_error(path.string() + ":1: missing prediction header");
    }
    std::vector<SegmentPrediction> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        SegmentPrediction p;
        std::string conf;
        if (!std::getline(fields, p.video_id, '\t') || !(fields >> p.start >> p.end >> p.class_id >> conf)) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed prediction");
        }
        p.confidence = std::stod(conf);
        if (p.start >= p.end) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": empty segment");
        out.push_back(std::move(p));
    }
    return out;
}

void write_tracks(std::span<const FrameScoreTrack> tracks, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    io::write_magic(out, "FSNT");
    io::write_u32(out, 1);
    io::write_u32(out, static_cast<std::uint32_t>(tracks.size()));
    for (const auto& t : tracks) {
        io::write_u32(out, static_cast<std::uint32_t>(t.video_id.size()));
        out.write(t.video_id.data(), static_cast<std::streamsize>(t.video_id.size()));
        io::write_u32(out, t.has_background ? 1u : 0u);
        io::write_u32(out, static_cast<std::uint32_t>(t.scores.time_len()));
        io::write_u32(out, static_cast<std::uint32_t>(t.scores.channels()));
        for (double v : t.scores.values()) io::write_f64(out, v);
    }
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw std::runtime_error("write failed: " + path.string());
}

std::vector<FrameScoreTrack> load_tracks(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open track file " + path.string());
    io::Reader in(file, path.string());
    in.expect_magic("FSNT");
    if (in.u32() != 1) in.fail("unsupported track format version");
    const std::uint32_t count = in.u32();
    std::vector<FrameScoreTrack> tracks;
    for (std::uint32_t n = 0; n < count; ++n) {
        FrameScoreTrack t;
        const std::uint32_t id_len = in.u32();
        if (id_len > 4096) in.fail("implausible video id length");
        t.video_id = in.bytes(id_len);
        t.has_background = in.u32() == 1;
        const std::size_t frames = in.u32();
        const std::size_t channels = in.u32();
        if (frames == 0 || channels == 0 || frames * channels > (std::size_t{1} << 30)) in.fail("bad track shape");
        std::vector<double> values(frames * channels);
        for (double& v : values) v = in.f64();
        t.scores = SeqTensor(frames, channels, std::move(values));
        tracks.push_back(std::move(t));
    }
    in.expect_end();
    return tracks;
}

}  // namespace fsn
