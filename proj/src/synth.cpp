#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fsn/data.hpp"
#include "fsn/random.hpp"

namespace fsn {

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.normal();
    return v;
}

std::string video_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "vid_%04zu", index);
    return buf;
}

// Instance layout for one video: lengths summing to density*frames, separated
// by gaps of at least min_gap.
std::vector<GroundTruthSegment> place_instances(const SynthConfig& config, const std::string& id,
                                                int video_class, Rng& rng) {
    const std::size_t frames = config.frames_per_video;
    const auto target = static_cast<std::size_t>(std::llround(config.instance_density * static_cast<double>(frames)));
    std::vector<std::size_t> lengths;
    std::size_t total = 0;
    while (total < target) {
        std::size_t len = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(config.min_instance_len), static_cast<std::int64_t>(config.max_instance_len)));
        len = std::min(len, target - total);
        if (len < config.min_instance_len) {
            if (lengths.empty()) {
                len = config.min_instance_len;
            } else {
                lengths.back() += len;
                total += len;
                break;
            }
        }
        lengths.push_back(len);
        total += len;
    }
    if (lengths.empty()) return {};

    const std::size_t internal_gaps = (lengths.size() - 1) * config.min_gap;
    if (total + internal_gaps > frames) {
        throw std::invalid_argument("synth: instances do not fit into " + std::to_string(frames) + " frames");
    }
    const std::size_t slack = frames - total - internal_gaps;
    std::vector<double> weights(lengths.size() + 1);
    double weight_sum = 0.0;
    for (double& w : weights) {
        w = rng.uniform(0.05, 1.0);
        weight_sum += w;
    }
    std::vector<std::size_t> gaps(weights.size());
    std::size_t used = 0;
    for (std::size_t g = 0; g < gaps.size(); ++g) {
        gaps[g] = static_cast<std::size_t>(std::floor(static_cast<double>(slack) * weights[g] / weight_sum));
        used += gaps[g];
    }
    gaps.back() += slack - used;

    std::vector<GroundTruthSegment> instances;
    std::size_t cursor = gaps[0];
    for (std::size_t n = 0; n < lengths.size(); ++n) {
        int cls = video_class;
        if (cls == 0) cls = static_cast<int>(rng.uniform_int(1, static_cast<std::int64_t>(config.num_classes)));
        instances.push_back({id, cursor, cursor + lengths[n], cls});
        cursor += lengths[n] + gaps[n + 1] + (n + 1 < lengths.size() ? config.min_gap : 0);
    }
    return instances;
}

}  // namespace

void SynthConfig::validate() const {
    if (num_videos == 0 || frames_per_video == 0 || num_classes == 0 || feature_dim == 0) {
        throw std::invalid_argument("SynthConfig: counts must be positive");
    }
    if (!(instance_density > 0.0 && instance_density < 1.0)) {
        throw std::invalid_argument("SynthConfig: instance_density must lie in (0, 1)");
    }
    if (context_ambiguity && num_classes < 2) {
        throw std::invalid_argument("SynthConfig: context ambiguity needs K >= 2");
    }
    if (min_instance_len < 2 || max_instance_len < min_instance_len) {
        throw std::invalid_argument("SynthConfig: bad instance length range");
    }
    if (frames_per_video < max_instance_len) {
        throw std::invalid_argument("SynthConfig: videos shorter than the longest instance");
    }
    if (!(prototype_noise >= 0.0)) throw std::invalid_argument("SynthConfig: prototype_noise < 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("SynthConfig: train_fraction must lie in (0, 1)");
    }
}

SynthPrototypes synth_prototypes(const SynthConfig& config) {
    config.validate();
    Rng rng(Rng::derive(config.seed, 0));
    SynthPrototypes p;
    p.background = random_vector(rng, config.feature_dim);
    if (!config.structured_background) std::fill(p.background.begin(), p.background.end(), 0.0);
    const std::size_t k = config.num_classes;
    if (!config.context_ambiguity) {
        for (std::size_t c = 0; c < k; ++c) p.phases.push_back({random_vector(rng, config.feature_dim)});
        return p;
    }
    // Classes 2j+1 and 2j+2 share two prototypes and differ only in their order.
    for (std::size_t c = 0; c + 1 < k; c += 2) {
        auto first = random_vector(rng, config.feature_dim);
        auto second = random_vector(rng, config.feature_dim);
        p.phases.push_back({first, second});
        p.phases.push_back({second, first});
    }
    if (k % 2 == 1) p.phases.push_back({random_vector(rng, config.feature_dim)});
    return p;
}

VideoFeatures synth_render(const SynthConfig& config, const SynthPrototypes& prototypes,
                           const std::string& video_id, std::size_t frame_count,
                           const std::vector<GroundTruthSegment>& instances, std::uint64_t seed) {
    Rng rng(seed);
    SeqTensor features(frame_count, config.feature_dim);
    std::vector<const std::vector<double>*> source(frame_count, &prototypes.background);
    for (const auto& inst : instances) {
        const auto& phases = prototypes.phases.at(static_cast<std::size_t>(inst.class_id - 1));
        const std::size_t len = inst.end - inst.start;
        for (std::size_t t = inst.start; t < std::min(inst.end, frame_count); ++t) {
            const std::size_t phase = (t - inst.start) * phases.size() / len;
            source[t] = &phases[phase];
        }
    }
    for (std::size_t t = 0; t < frame_count; ++t) {
        auto row = features.row(t);
        for (std::size_t d = 0; d < config.feature_dim; ++d) {
            const double v = (*source[t])[d] + rng.normal(0.0, config.prototype_noise);
            row[d] = static_cast<double>(static_cast<float>(v));
        }
    }
    return {video_id, std::move(features)};
}

SynthDataset synth_generate(const SynthConfig& config) {
    config.validate();
    SynthDataset ds;
    ds.config = config;
    ds.prototypes = synth_prototypes(config);
    for (std::size_t c = 1; c <= config.num_classes; ++c) ds.annotations.class_names.push_back("class_" + std::to_string(c));

    const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(config.num_videos)));
    for (std::size_t v = 0; v < config.num_videos; ++v) {
        const std::string id = video_name(v);
        Rng layout_rng(Rng::derive(config.seed, 1 + 2 * v));
        int video_class = 0;
        if (config.single_class_videos) {
            video_class = static_cast<int>(layout_rng.uniform_int(1, static_cast<std::int64_t>(config.num_classes)));
        }
        auto instances = place_instances(config, id, video_class, layout_rng);
        ds.videos.push_back(synth_render(config, ds.prototypes, id, config.frames_per_video, instances,
                                         Rng::derive(config.seed, 2 + 2 * v)));
        ds.annotations.segments.insert(ds.annotations.segments.end(), instances.begin(), instances.end());
        (v < n_train ? ds.train_ids : ds.test_ids).push_back(id);
    }
    return ds;
}

void write_dataset(const SynthDataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "features");
    for (const auto& v : dataset.videos) write_features(v, dir / "features" / (v.video_id + ".fsnf"));
    write_annotations(dataset.annotations, dir / "annotations.tsv");

    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write manifest under " + dir.string());
    const SynthConfig& c = dataset.config;
    out << "# synthetic dataset manifest\n";
    out << "synth_num_videos = " << c.num_videos << '\n';
    out << "synth_frames = " << c.frames_per_video << '\n';
    out << "num_classes = " << c.num_classes << '\n';
    out << "feature_dim = " << c.feature_dim << '\n';
    out << "synth_noise = " << c.prototype_noise << '\n';
    out << "synth_context_ambiguity = " << (c.context_ambiguity ? "true" : "false") << '\n';
    out << "synth_density = " << c.instance_density << '\n';
    out << "synth_min_len = " << c.min_instance_len << '\n';
    out << "synth_max_len = " << c.max_instance_len << '\n';
    out << "synth_min_gap = " << c.min_gap << '\n';
    out << "synth_structured_background = " << (c.structured_background ? "true" : "false") << '\n';
    out << "synth_single_class = " << (c.single_class_videos ? "true" : "false") << '\n';
    out << "synth_train_fraction = " << c.train_fraction << '\n';
    out << "seed = " << c.seed << '\n';
    for (const auto& id : dataset.train_ids) out << "video\t" << id << "\ttrain\n";
    for (const auto& id : dataset.test_ids) out << "video\t" << id << "\ttest\n";
    if (!out) throw std::runtime_error("write failed: manifest.txt");
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    Manifest m;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("video\t", 0) == 0) {
            const std::size_t a = line.find('\t', 6);
            if (a == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed video line");
            const std::string id = line.substr(6, a - 6);
            const std::string split = line.substr(a + 1);
            if (split == "train") {
                m.train_ids.push_back(id);
            } else if (split == "test") {
                m.test_ids.push_back(id);
            } else {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": unknown split '" + split + "'");
            }
            continue;
        }
        const std::size_t eq = line.find(" = ");
        if (eq == std::string::npos) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed line");
        m.config[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return m;
}

}  // namespace fsn
