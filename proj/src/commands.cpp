#include "fsn/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>

#include "fsn/data.hpp"
#include "fsn/gradcheck_suite.hpp"
#include "fsn/localize.hpp"
#include "fsn/random.hpp"
#include "fsn/training.hpp"

namespace fsn {

namespace fs = std::filesystem;

namespace {

// Seed streams derived from the run seed.
constexpr std::uint64_t kRebalanceStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kTrainStream = 3;

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

fs::path out_dir(const RunConfig& config) {
    const fs::path dir = config.get("out", "out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
    return dir;
}

fs::path data_path(const RunConfig& config, const std::string& key, const std::string& leaf) {
    if (config.has(key)) return config.get(key, "");
    return fs::path(config.require("data_dir")) / leaf;
}

struct SplitData {
    AnnotationSet annotations;
    std::vector<VideoFeatures> videos;
    std::vector<std::string> ids;
};

std::vector<std::string> split_ids(const RunConfig& config, const std::string& split) {
    const Manifest manifest = load_manifest(data_path(config, "manifest", "manifest.txt"));
    if (split == "train") return manifest.train_ids;
    if (split == "test") return manifest.test_ids;
    if (split == "all") {
        std::vector<std::string> ids = manifest.train_ids;
        ids.insert(ids.end(), manifest.test_ids.begin(), manifest.test_ids.end());
        return ids;
    }
    throw std::invalid_argument("unknown split '" + split + "' (expected train, test or all)");
}

SplitData load_split(const RunConfig& config, const std::string& split, bool need_features = true) {
    SplitData data;
    data.ids = split_ids(config, split);
    if (need_features) data.videos = load_feature_dir(data_path(config, "features_dir", "features"), data.ids);
    const fs::path ann_path = data_path(config, "annotations", "annotations.tsv");
    data.annotations = load_annotations(ann_path);
    // The annotation file covers every split; check only the loaded videos.
    std::map<std::string, std::size_t> frame_counts;
    for (const auto& v : data.videos) frame_counts[v.video_id] = v.frame_count();
    for (const auto& s : data.annotations.segments) {
        const auto it = frame_counts.find(s.video_id);
        if (it != frame_counts.end() && s.end > it->second) {
            throw std::runtime_error(ann_path.string() + ": segment of " + s.video_id + " ends at " +
                                     std::to_string(s.end) + ", past its " + std::to_string(it->second) + " frames");
        }
    }
    return data;
}

std::size_t num_classes_for(const RunConfig& config, const AnnotationSet& annotations) {
    const std::size_t k = config.get_size("num_classes", annotations.num_classes());
    if (k != annotations.num_classes()) {
        throw std::invalid_argument("num_classes = " + std::to_string(k) + " but annotations declare " +
                                    std::to_string(annotations.num_classes()) + " classes");
    }
    return k;
}

ModelConfig model_config_from(const RunConfig& config, const SplitData& data) {
    ModelConfig mc;
    mc.num_classes = num_classes_for(config, data.annotations);
    const std::size_t d = data.videos.empty() ? 0 : data.videos.front().feature_dim();
    mc.feature_dim = config.get_size("feature_dim", d);
    if (!data.videos.empty() && mc.feature_dim != d) {
        throw std::invalid_argument("feature_dim = " + std::to_string(mc.feature_dim) + " but features have D = " +
                                    std::to_string(d));
    }
    mc.hidden_channels = config.get_size("hidden_channels", mc.hidden_channels);
    mc.snippet_len = config.get_size("snippet_len", mc.snippet_len);
    mc.clip_len = config.get_size("clip_len", mc.clip_len);
    mc.validate();
    return mc;
}

TrainOptions train_options_from(const RunConfig& config) {
    TrainOptions o;
    o.learning_rate = config.get_double("learning_rate", o.learning_rate);
    o.momentum = config.get_double("momentum", o.momentum);
    o.weight_decay = config.get_double("weight_decay", o.weight_decay);
    o.batch_size = config.get_size("batch_size", o.batch_size);
    o.iterations = config.get_size("iterations", o.iterations);
    o.log_every = config.get_size("log_every", o.log_every);
    o.seed = Rng::derive(config.seed(), kTrainStream);
    return o;
}

std::vector<ClipSample> training_clips(const RunConfig& config, const SplitData& train, const ModelConfig& mc) {
    ClipOptions opts;
    opts.clip_len = mc.clip_len;
    opts.snippet_len = mc.snippet_len;
    opts.stride = config.get_size("train_stride", std::max<std::size_t>(1, mc.clip_len / 5));
    if (opts.stride == 0) throw std::invalid_argument("train_stride must be positive");
    std::vector<ClipSample> clips;
    for (const auto& v : train.videos) {
        auto c = make_clips(v, train.annotations.for_video(v.video_id), opts);
        clips.insert(clips.end(), std::make_move_iterator(c.begin()), std::make_move_iterator(c.end()));
    }
    if (clips.empty()) {
        throw std::runtime_error("no training clips: no window holds at least " + std::to_string(opts.min_action_frames) +
                                 " action frames");
    }
    if (config.get_bool("rebalance", true)) clips = rebalance(clips, Rng::derive(config.seed(), kRebalanceStream));
    return clips;
}

std::vector<WeakVideo> weak_videos(const SplitData& train, std::size_t k, std::size_t m) {
    std::vector<WeakVideo> out;
    for (const auto& v : train.videos) {
        if (v.frame_count() < m) {
            throw std::invalid_argument("video " + v.video_id + " has " + std::to_string(v.frame_count()) +
                                        " frames, fewer than weak_m = " + std::to_string(m));
        }
        out.push_back({&v, video_label(train.annotations.for_video(v.video_id), k)});
    }
    if (out.empty()) throw std::runtime_error("no training videos");
    return out;
}

void write_loss_log(const std::vector<LossLogRow>& log, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "step,loss\n";
    for (const auto& row : log) out << row.step << ',' << fmt(row.mean_loss, "%.8f") << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

Head train_strong_head(const RunConfig& config, const SplitData& train, HeadKind kind,
                       std::vector<LossLogRow>* log) {
    const ModelConfig mc = model_config_from(config, train);
    const auto clips = training_clips(config, train, mc);
    const std::uint64_t init_seed = Rng::derive(config.seed(), kInitStream);
    Head head = kind == HeadKind::Ablation ? make_ablation_head(mc, init_seed) : make_fsn_head(mc, init_seed);
    auto rows = train_strong(head, clips, train_options_from(config));
    if (log) *log = std::move(rows);
    return head;
}

Head train_weak_head(const RunConfig& config, const SplitData& train, nn::PoolMode pooling,
                     std::vector<LossLogRow>* log) {
    const ModelConfig mc = model_config_from(config, train);
    const std::size_t m = config.get_size("weak_m", 100);
    const auto videos = weak_videos(train, mc.num_classes, m);
    Head head = make_wfsn_head(mc, pooling, Rng::derive(config.seed(), kInitStream));
    auto rows = train_weak(head, videos, m, train_options_from(config));
    if (log) *log = std::move(rows);
    return head;
}

HeadKind strong_kind(const RunConfig& config) {
    const std::string name = config.get("head", "fsn");
    if (name == "fsn") return HeadKind::Fsn;
    if (name == "ablation") return HeadKind::Ablation;
    throw std::invalid_argument("unknown head '" + name + "' (expected fsn or ablation)");
}

std::map<std::string, std::vector<int>> frame_label_map(const SplitData& data) {
    std::map<std::string, std::vector<int>> labels;
    for (const auto& v : data.videos) labels[v.video_id] = frame_labels(v.frame_count(), data.annotations.for_video(v.video_id));
    return labels;
}

std::vector<GroundTruthSegment> split_ground_truth(const SplitData& data) {
    const std::set<std::string> ids(data.ids.begin(), data.ids.end());
    std::vector<GroundTruthSegment> gt;
    for (const auto& s : data.annotations.segments) {
        if (ids.contains(s.video_id)) gt.push_back(s);
    }
    return gt;
}

EvalReport evaluate_tracks(const std::vector<FrameScoreTrack>& tracks, const SplitData& test, std::size_t k,
                           const std::vector<double>& thresholds, double nms_eval_iou, std::size_t threads) {
    const auto preds = segments_from_tracks(tracks, nms_eval_iou, threads);
    EvalConfig ec;
    ec.num_classes = k;
    ec.iou_thresholds = thresholds;
    EvalReport report = segment_level_map(preds, split_ground_truth(test), ec, test.ids);
    report.frame = frame_level_map(tracks, frame_label_map(test), k);
    return report;
}

int predict_common(const RunConfig& config, bool weak) {
    const fs::path out = out_dir(config);
    const SplitData data = load_split(config, config.get("split", "test"));
    const std::size_t k = num_classes_for(config, data.annotations);
    const fs::path model_path = config.get("model", (out / "model.fsn").string());
    std::size_t d = config.get_size("feature_dim", 0);
    if (d == 0) d = data.videos.empty() ? load_model(model_path).config.feature_dim : data.videos.front().feature_dim();
    const Head head = load_model(model_path, k, d);
    if (weak != (head.kind == HeadKind::Wfsn)) {
        throw std::invalid_argument(std::string("model ") + model_path.string() + " is a " + to_string(head.kind) +
                                    " head; use " + (head.kind == HeadKind::Wfsn ? "predict-weak" : "predict"));
    }
    const double eval_iou = config.get_double("nms_eval_iou", weak ? 0.3 : 0.5);
    const std::size_t threads = config.threads();
    const std::size_t m = config.get_size("weak_m", 100);

    const auto tracks = weak ? predict_weak_tracks(head, data.videos, m, threads)
                             : predict_tracks(head, data.videos, threads);
    auto preds = segments_from_tracks(tracks, eval_iou, threads);
    sort_predictions(preds);
    write_predictions(preds, out / "predictions.tsv");
    write_tracks(tracks, out / "frame_scores.fsnt");

    std::ofstream log(out / "predict_log.txt", std::ios::trunc);
    log << "# config\n" << config.echo();
    log << "# run\n";
    log << "model_kind = " << to_string(head.kind) << '\n';
    if (weak) log << "pooling = " << nn::to_string(head.pooling) << "\nweak_m = " << m << '\n';
    log << "videos = " << data.videos.size() << '\n';
    log << "nms_eval_iou = " << fmt(eval_iou, "%.4g") << '\n';
    log << "nms_iou_threshold = " << fmt(nms_threshold_for(eval_iou), "%.4g") << '\n';
    log << "predictions = " << preds.size() << '\n';
    if (!log) throw std::runtime_error("cannot write predict_log.txt");
    return 0;
}

}  // namespace

SynthConfig synth_config_from(const RunConfig& config) {
    SynthConfig s;
    s.num_videos = config.get_size("synth_num_videos", s.num_videos);
    s.frames_per_video = config.get_size("synth_frames", s.frames_per_video);
    s.num_classes = config.get_size("num_classes", s.num_classes);
    s.feature_dim = config.get_size("feature_dim", s.feature_dim);
    s.prototype_noise = config.get_double("synth_noise", s.prototype_noise);
    s.context_ambiguity = config.get_bool("synth_context_ambiguity", s.context_ambiguity);
    s.instance_density = config.get_double("synth_density", s.instance_density);
    s.min_instance_len = config.get_size("synth_min_len", s.min_instance_len);
    s.max_instance_len = config.get_size("synth_max_len", s.max_instance_len);
    s.min_gap = config.get_size("synth_min_gap", s.min_gap);
    s.single_class_videos = config.get_bool("synth_single_class", s.single_class_videos);
    s.structured_background = config.get_bool("synth_structured_background", s.structured_background);
    s.train_fraction = config.get_double("synth_train_fraction", s.train_fraction);
    s.seed = config.seed();
    s.validate();
    return s;
}

int cmd_synth(const RunConfig& config) {
    const SynthConfig sc = synth_config_from(config);
    write_dataset(synth_generate(sc), out_dir(config));
    return 0;
}

int cmd_train(const RunConfig& config) {
    const fs::path out = out_dir(config);
    const SplitData train = load_split(config, "train");
    std::vector<LossLogRow> log;
    const Head head = train_strong_head(config, train, strong_kind(config), &log);
    save_model(head, out / "model.fsn");
    write_loss_log(log, out / "train_log.csv");
    return 0;
}

int cmd_train_weak(const RunConfig& config) {
    const fs::path out = out_dir(config);
    const SplitData train = load_split(config, "train");
    std::vector<LossLogRow> log;
    const Head head = train_weak_head(config, train, nn::parse_pool_mode(config.get("pooling", "gmp")), &log);
    save_model(head, out / "model.fsn");
    write_loss_log(log, out / "train_log.csv");
    return 0;
}

int cmd_predict(const RunConfig& config) { return predict_common(config, false); }

int cmd_predict_weak(const RunConfig& config) { return predict_common(config, true); }

int cmd_eval(const RunConfig& config) {
    const fs::path out = out_dir(config);
    const SplitData data = load_split(config, config.get("split", "test"), false);
    const std::size_t k = num_classes_for(config, data.annotations);
    const auto preds = load_predictions(config.get("predictions", (out / "predictions.tsv").string()));

    EvalConfig ec;
    ec.num_classes = k;
    ec.iou_thresholds = config.get_list("eval_iou", strong_iou_thresholds());
    const auto gt = split_ground_truth(data);
    EvalReport report = segment_level_map(preds, gt, ec, data.ids);

    const fs::path tracks_path = config.get("tracks", (out / "frame_scores.fsnt").string());
    if (config.has("tracks") || fs::exists(tracks_path)) {
        const auto tracks = load_tracks(tracks_path);
        std::map<std::string, std::size_t> counts;
        for (const auto& t : tracks) counts[t.video_id] = t.frame_count();
        std::map<std::string, std::vector<int>> labels;
        for (const auto& id : data.ids) {
            const auto it = counts.find(id);
            if (it == counts.end()) throw std::runtime_error("no frame scores for video " + id + " in " + tracks_path.string());
            labels[id] = frame_labels(it->second, data.annotations.for_video(id));
        }
        std::vector<FrameScoreTrack> used;
        const std::set<std::string> ids(data.ids.begin(), data.ids.end());
        for (const auto& t : tracks) {
            if (!ids.contains(t.video_id)) throw std::runtime_error("frame scores for unknown video " + t.video_id);
            used.push_back(t);
        }
        report.frame = frame_level_map(used, labels, k);
    }
    emit_report(report, out / "report.csv");
    if (report.frame) emit_frame_report(*report.frame, out / "frame_report.csv");
    if (config.get_bool("pr_curves", false)) emit_pr_curves(preds, gt, ec, out / "pr_curves");
    return 0;
}

AblationResult run_ablation(const RunConfig& config) {
    const std::string which = config.get("ablation", "temporal");
    const SplitData train = load_split(config, "train");
    const SplitData test = load_split(config, "test");
    const std::size_t k = num_classes_for(config, train.annotations);
    const std::size_t threads = config.threads();

    AblationResult result;
    result.comparison = which;
    if (which == "temporal") {
        const auto thresholds = config.get_list("eval_iou", strong_iou_thresholds());
        const double nms_iou = config.get_double("nms_eval_iou", 0.5);
        for (HeadKind kind : {HeadKind::Fsn, HeadKind::Ablation}) {
            Head head = train_strong_head(config, train, kind, nullptr);
            const auto tracks = predict_tracks(head, test.videos, threads);
            result.rows.push_back({to_string(kind), evaluate_tracks(tracks, test, k, thresholds, nms_iou, threads)});
            result.heads.push_back(std::move(head));
        }
    } else if (which == "pooling") {
        const auto thresholds = config.get_list("eval_iou", weak_iou_thresholds());
        const double nms_iou = config.get_double("nms_eval_iou", 0.3);
        const std::size_t m = config.get_size("weak_m", 100);
        for (nn::PoolMode mode : {nn::PoolMode::Max, nn::PoolMode::Average}) {
            Head head = train_weak_head(config, train, mode, nullptr);
            const auto tracks = predict_weak_tracks(head, test.videos, m, threads);
            result.rows.push_back({std::string("wfsn_") + nn::to_string(mode),
                                   evaluate_tracks(tracks, test, k, thresholds, nms_iou, threads)});
            result.heads.push_back(std::move(head));
        }
    } else {
        throw std::invalid_argument("unknown ablation '" + which + "' (expected temporal or pooling)");
    }
    return result;
}

void write_ablation_csv(const AblationResult& result, const fs::path& path) {
    if (result.rows.size() != 2) throw std::invalid_argument("ablation table needs exactly two rows");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const auto& thr = result.rows.front().report.iou_thresholds;
    out << "model";
    for (double t : thr) out << ",seg_map_iou_" << fmt(t, "%.2f");
    out << ",frame_map\n";
    auto frame_of = [](const EvalReport& r) { return r.frame ? r.frame->map : 0.0; };
    for (const auto& row : result.rows) {
        out << row.model;
        for (double m : row.report.map) out << ',' << fmt(m, "%.4f");
        out << ',' << fmt(frame_of(row.report), "%.4f") << '\n';
    }
    const auto& a = result.rows[0].report;
    const auto& b = result.rows[1].report;
    out << "delta";
    for (std::size_t i = 0; i < thr.size(); ++i) out << ',' << fmt(a.map[i] - b.map[i], "%.4f");
    out << ',' << fmt(frame_of(a) - frame_of(b), "%.4f") << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

int cmd_ablate(const RunConfig& config) {
    const fs::path out = out_dir(config);
    const AblationResult result = run_ablation(config);
    write_ablation_csv(result, out / "ablation.csv");
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        save_model(result.heads[i], out / ("model_" + result.rows[i].model + ".fsn"));
    }
    return 0;
}

int cmd_gradcheck(const RunConfig& config) {
    const fs::path out = out_dir(config);
    GradSuiteOptions opts;
    opts.seeds = config.get_size("gradcheck_seeds", opts.seeds);
    opts.tolerance = config.get_double("gradcheck_tolerance", opts.tolerance);
    opts.corrupt = config.get_bool("gradcheck_corrupt", false);
    opts.seed = config.seed();
    const auto entries = run_gradient_suite(opts);
    const auto control = run_negative_control(opts);

    std::ofstream csv(out / "gradcheck.csv", std::ios::trunc);
    csv << "check,seeds,max_rel_error,tolerance,status\n";
    bool ok = true;
    for (const auto& e : entries) {
        csv << e.name << ',' << e.seeds << ',' << fmt(e.max_rel_error, "%.3e") << ',' << fmt(opts.tolerance, "%.1e")
            << ',' << (e.passed ? "pass" : "FAIL") << '\n';
        ok = ok && e.passed;
    }
    csv << control.name << ',' << control.seeds << ',' << fmt(control.max_rel_error, "%.3e") << ','
        << fmt(opts.tolerance, "%.1e") << ',' << (control.passed ? "flagged" : "MISSED") << '\n';
    ok = ok && control.passed;
    if (!csv) throw std::runtime_error("cannot write gradcheck.csv");
    if (!ok) std::cerr << "gradcheck: failures, see " << (out / "gradcheck.csv").string() << '\n';
    return ok ? 0 : 1;
}

}  // namespace fsn
