#include "fsn/data.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "binary_io.hpp"
#include "fsn/random.hpp"

namespace fsn {

namespace {

constexpr std::uint32_t kFeatureVersion = 1;

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
        const std::size_t tab = line.find('\t', pos);
        fields.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
        if (tab == std::string::npos) break;
        pos = tab + 1;
    }
    return fields;
}

std::size_t parse_count(const std::string& text, const std::string& where) {
    std::size_t used = 0;
    long long v = 0;
    try {
        v = std::stoll(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != text.size() || text.empty() || v < 0) {
        throw std::runtime_error(where + ": expected a non-negative integer, got '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

}  // namespace

void write_features(const VideoFeatures& video, const std::filesystem::path& path) {
    std::ostringstream out(std::ios::binary);
    io::write_magic(out, "FSNF");
    io::write_u32(out, kFeatureVersion);
    io::write_u32(out, static_cast<std::uint32_t>(video.feature_dim()));
    io::write_u32(out, static_cast<std::uint32_t>(video.frame_count()));
    for (double v : video.features.values()) io::write_f32(out, static_cast<float>(v));
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string bytes = out.str();
    file.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!file) throw std::runtime_error("write failed: " + path.string());
}

VideoFeatures load_features(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open feature file " + path.string());
    io::Reader in(file, path.string());
    in.expect_magic("FSNF");
    const std::uint32_t version = in.u32();
    if (version != kFeatureVersion) in.fail("unsupported feature format version " + std::to_string(version));
    const std::size_t dim = in.u32();
    const std::size_t frames = in.u32();
    if (dim == 0 || frames == 0) in.fail("empty feature matrix");
    if (dim * frames > (std::size_t{1} << 30)) in.fail("implausible feature matrix size");
    std::vector<double> values(dim * frames);
    for (double& v : values) v = static_cast<double>(in.f32());
    in.expect_end();
    VideoFeatures video{path.stem().string(), SeqTensor(frames, dim, std::move(values))};
    if (!video.features.all_finite()) in.fail("non-finite feature value");
    return video;
}

std::vector<VideoFeatures> load_feature_dir(const std::filesystem::path& dir) {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".fsnf") {
            ids.push_back(entry.path().stem().string());
        }
    }
    std::sort(ids.begin(), ids.end());
    return load_feature_dir(dir, ids);
}

std::vector<VideoFeatures> load_feature_dir(const std::filesystem::path& dir,
                                            const std::vector<std::string>& video_ids) {
    std::vector<VideoFeatures> videos;
    videos.reserve(video_ids.size());
    for (const auto& id : video_ids) {
        videos.push_back(load_features(dir / (id + ".fsnf")));
        if (videos.back().feature_dim() != videos.front().feature_dim()) {
            throw std::runtime_error("feature dimension mismatch: " + id + " has D=" +
                                     std::to_string(videos.back().feature_dim()) + ", " +
                                     videos.front().video_id + " has D=" +
                                     std::to_string(videos.front().feature_dim()));
        }
    }
    return videos;
}

std::vector<GroundTruthSegment> AnnotationSet::for_video(const std::string& video_id) const {
    std::vector<GroundTruthSegment> out;
    for (const auto& s : segments) {
        if (s.video_id == video_id) out.push_back(s);
    }
    return out;
}

void write_annotations(const AnnotationSet& annotations, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "#K\t" << annotations.num_classes();
    for (const auto& name : annotations.class_names) out << '\t' << name;
    out << '\n';
    for (const auto& s : annotations.segments) {
        out << s.video_id << '\t' << s.start << '\t' << s.end << '\t' << s.class_id << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

AnnotationSet load_annotations(const std::filesystem::path& path,
                               const std::map<std::string, std::size_t>* frame_counts) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open annotation file " + path.string());
    AnnotationSet set;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty annotation file");
    ++line_no;
    {
        const auto header = split_tabs(line);
        if (header.size() < 2 || header[0] != "#K") {
            throw std::runtime_error(path.string() + ":1: missing '#K' header line");
        }
        const std::size_t k = parse_count(header[1], path.string() + ":1");
        if (k == 0 || header.size() != k + 2) {
            throw std::runtime_error(path.string() + ":1: header declares K=" + header[1] +
                                     " but lists " + std::to_string(header.size() - 2) + " class names");
        }
        set.class_names.assign(header.begin() + 2, header.end());
    }
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(line_no);
        const auto f = split_tabs(line);
        if (f.size() != 4) throw std::runtime_error(where + ": expected 4 tab-separated fields");
        GroundTruthSegment s;
        s.video_id = f[0];
        s.start = parse_count(f[1], where);
        s.end = parse_count(f[2], where);
        const std::size_t cls = parse_count(f[3], where);
        if (cls < 1 || cls > set.num_classes()) {
            throw std::runtime_error(where + ": class id " + f[3] + " outside 1.." +
                                     std::to_string(set.num_classes()));
        }
        s.class_id = static_cast<int>(cls);
        if (s.start >= s.end) throw std::runtime_error(where + ": empty segment [" + f[1] + ", " + f[2] + ")");
        if (frame_counts != nullptr) {
            const auto it = frame_counts->find(s.video_id);
            if (it == frame_counts->end()) throw std::runtime_error(where + ": unknown video '" + s.video_id + "'");
            if (s.end > it->second) {
                throw std::runtime_error(where + ": segment end " + f[2] + " exceeds frame count " +
                                         std::to_string(it->second) + " of " + s.video_id);
            }
        }
        set.segments.push_back(std::move(s));
    }
    return set;
}

std::vector<int> frame_labels(std::size_t frame_count, const std::vector<GroundTruthSegment>& segments) {
    std::vector<int> labels(frame_count, 0);
    std::vector<std::size_t> owner_start(frame_count, 0);
    for (const auto& s : segments) {
        const std::size_t end = std::min(s.end, frame_count);
        for (std::size_t t = s.start; t < end; ++t) {
            if (labels[t] == 0 || s.start < owner_start[t]) {
                labels[t] = s.class_id;
                owner_start[t] = s.start;
            }
        }
    }
    return labels;
}

std::vector<ClipSample> make_clips(const VideoFeatures& video,
                                   const std::vector<GroundTruthSegment>& segments,
                                   const ClipOptions& options) {
    if (options.snippet_len == 0 || options.clip_len % options.snippet_len != 0 || options.clip_len == 0) {
        throw std::invalid_argument("make_clips: clip_len must be a positive multiple of snippet_len");
    }
    if (options.stride == 0) throw std::invalid_argument("make_clips: stride must be >= 1");
    std::vector<ClipSample> clips;
    if (video.frame_count() < options.clip_len) {
        std::clog << "warning: video " << video.video_id << " has " << video.frame_count()
                  << " frames, shorter than clip length " << options.clip_len << "; skipped\n";
        return clips;
    }
    const std::vector<int> labels = frame_labels(video.frame_count(), segments);
    const std::size_t snippets = options.clip_len / options.snippet_len;
    for (std::size_t start = 0; start + options.clip_len <= video.frame_count(); start += options.stride) {
        const auto first = labels.begin() + static_cast<std::ptrdiff_t>(start);
        const auto last = first + static_cast<std::ptrdiff_t>(options.clip_len);
        const auto action = static_cast<std::size_t>(std::count_if(first, last, [](int c) { return c != 0; }));
        if (action < options.min_action_frames) continue;
        ClipSample clip{SeqTensor(snippets, video.feature_dim()), std::vector<int>(first, last)};
        for (std::size_t i = 0; i < snippets; ++i) {
            const auto src = video.features.row(snippet_center(start, i, options.snippet_len));
            std::copy(src.begin(), src.end(), clip.features.row(i).begin());
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

int clip_majority_class(const ClipSample& clip) {
    std::map<int, std::size_t> counts;
    for (int c : clip.labels) {
        if (c != 0) ++counts[c];
    }
    int best = 0;
    std::size_t best_count = 0;
    for (const auto& [cls, n] : counts) {
        if (n > best_count) {
            best = cls;
            best_count = n;
        }
    }
    return best;
}

std::vector<ClipSample> rebalance(const std::vector<ClipSample>& clips, std::uint64_t seed) {
    if (clips.empty()) throw std::invalid_argument("rebalance: no clips");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t n = 0; n < clips.size(); ++n) by_class[clip_majority_class(clips[n])].push_back(n);
    std::size_t target = 0;
    for (const auto& [cls, members] : by_class) target = std::max(target, members.size());

    Rng rng(seed);
    std::vector<ClipSample> out = clips;
    for (const auto& [cls, members] : by_class) {
        for (std::size_t n = members.size(); n < target; ++n) out.push_back(clips[members[rng.index(members.size())]]);
    }
    return out;
}

std::vector<std::size_t> weak_sample_frames(std::size_t frame_count, std::size_t m, std::uint64_t seed) {
    if (m == 0) throw std::invalid_argument("weak_sample_frames: M must be >= 1");
    if (frame_count < m) {
        throw std::invalid_argument("weak sampling needs at least M=" + std::to_string(m) +
                                    " frames, video has " + std::to_string(frame_count));
    }
    Rng rng(seed);
    std::vector<std::size_t> frames(m);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t lo = i * frame_count / m;
        const std::size_t hi = (i + 1) * frame_count / m;
        frames[i] = lo + rng.index(hi - lo);
    }
    return frames;
}

WeakSample make_weak_sample(const VideoFeatures& video, const std::vector<int>& label, std::size_t m,
                            std::uint64_t seed) {
    const auto frames = weak_sample_frames(video.frame_count(), m, seed);
    WeakSample sample{SeqTensor(m, video.feature_dim()), label};
    for (std::size_t i = 0; i < m; ++i) {
        const auto src = video.features.row(frames[i]);
        std::copy(src.begin(), src.end(), sample.features.row(i).begin());
    }
    return sample;
}

std::vector<int> video_label(const std::vector<GroundTruthSegment>& segments, std::size_t num_classes) {
    std::vector<int> label(num_classes, 0);
    for (const auto& s : segments) {
        if (s.class_id < 1 || static_cast<std::size_t>(s.class_id) > num_classes) {
            throw std::invalid_argument("video_label: class id out of range");
        }
        label[static_cast<std::size_t>(s.class_id - 1)] = 1;
    }
    return label;
}

}  // namespace fsn
