#include "fsn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fsn/localize.hpp"

namespace fsn {

namespace {

std::vector<std::size_t> rank_order(std::span<const RankedItem> ranked) {
    std::vector<std::size_t> order(ranked.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ranked[a].confidence > ranked[b].confidence; });
    return order;
}

std::string format4(double v) {
    if (std::isnan(v)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

double average_precision(std::span<const RankedItem> ranked, long num_positives) {
    if (num_positives < 0) throw std::invalid_argument("average_precision: negative positive count");
    if (num_positives == 0) return 0.0;
    double sum = 0.0;
    std::size_t hits = 0;
    std::size_t rank = 0;
    for (std::size_t idx : rank_order(ranked)) {
        ++rank;
        if (ranked[idx].true_positive) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(rank);
        }
    }
    return sum / static_cast<double>(num_positives);
}

std::vector<PrPoint> precision_recall_curve(std::span<const RankedItem> ranked, long num_positives) {
    std::vector<PrPoint> curve;
    std::size_t hits = 0;
    std::size_t rank = 0;
    for (std::size_t idx : rank_order(ranked)) {
        ++rank;
        if (ranked[idx].true_positive) ++hits;
        curve.push_back({static_cast<double>(hits) / static_cast<double>(rank),
                         num_positives > 0 ? static_cast<double>(hits) / static_cast<double>(num_positives) : 0.0});
    }
    return curve;
}

std::vector<double> strong_iou_thresholds() { return {0.3, 0.4, 0.5, 0.6, 0.7}; }
std::vector<double> weak_iou_thresholds() { return {0.1, 0.2, 0.3, 0.4, 0.5}; }

void EvalConfig::validate() const {
    if (num_classes < 1) throw std::invalid_argument("EvalConfig: need at least one class");
    if (iou_thresholds.empty()) throw std::invalid_argument("EvalConfig: no IoU thresholds");
    for (std::size_t i = 0; i < iou_thresholds.size(); ++i) {
        if (!(iou_thresholds[i] > 0.0 && iou_thresholds[i] <= 1.0)) {
            throw std::invalid_argument("EvalConfig: IoU threshold outside (0, 1]");
        }
        if (i > 0 && !(iou_thresholds[i] > iou_thresholds[i - 1])) {
            throw std::invalid_argument("EvalConfig: IoU thresholds must be ascending");
        }
    }
}

FrameLevelResult frame_level_map(std::span<const FrameScoreTrack> tracks,
                                 const std::map<std::string, std::vector<int>>& labels, std::size_t num_classes) {
    std::map<std::string, const FrameScoreTrack*> by_id;
    for (const auto& t : tracks) by_id[t.video_id] = &t;
    for (const auto& [id, frame_labels] : labels) {
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw std::invalid_argument("frame_level_map: no score track for labeled video " + id);
        if (it->second->frame_count() != frame_labels.size()) {
            throw std::invalid_argument("frame_level_map: track of " + id + " has " +
                                        std::to_string(it->second->frame_count()) + " frames, labels have " +
                                        std::to_string(frame_labels.size()));
        }
        if (it->second->num_classes() != num_classes) {
            throw std::invalid_argument("frame_level_map: track of " + id + " has the wrong class count");
        }
    }

    FrameLevelResult result;
    for (std::size_t k = 1; k <= num_classes; ++k) {
        std::vector<RankedItem> ranked;
        long positives = 0;
        for (const auto& [id, frame_labels] : labels) {
            const FrameScoreTrack& track = *by_id.at(id);
            const std::size_t col = track.column(static_cast<int>(k));
            for (std::size_t t = 0; t < frame_labels.size(); ++t) {
                const bool pos = frame_labels[t] == static_cast<int>(k);
                positives += pos ? 1 : 0;
                ranked.push_back({track.scores(t, col), pos});
            }
        }
        result.class_ap.push_back(average_precision(ranked, positives));
    }
    result.map = std::accumulate(result.class_ap.begin(), result.class_ap.end(), 0.0) /
                 static_cast<double>(num_classes);
    return result;
}

std::vector<RankedItem> match_class(std::span<const SegmentPrediction> predictions,
                                    std::span<const GroundTruthSegment> ground_truth, int class_id,
                                    double iou_threshold, long* num_positives) {
    std::vector<std::size_t> gt_idx;
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        if (ground_truth[g].class_id == class_id) gt_idx.push_back(g);
    }
    if (num_positives != nullptr) *num_positives = static_cast<long>(gt_idx.size());

    std::vector<std::size_t> pred_idx;
    for (std::size_t p = 0; p < predictions.size(); ++p) {
        if (predictions[p].class_id == class_id) pred_idx.push_back(p);
    }
    std::stable_sort(pred_idx.begin(), pred_idx.end(), [&](std::size_t a, std::size_t b) {
        return predictions[a].confidence > predictions[b].confidence;
    });

    std::vector<bool> matched(ground_truth.size(), false);
    std::vector<RankedItem> ranked;
    ranked.reserve(pred_idx.size());
    for (std::size_t p : pred_idx) {
        const SegmentPrediction& pred = predictions[p];
        double best_iou = -1.0;
        std::size_t best = ground_truth.size();
        for (std::size_t g : gt_idx) {
            if (matched[g] || ground_truth[g].video_id != pred.video_id) continue;
            const double iou = temporal_iou(pred.start, pred.end, ground_truth[g].start, ground_truth[g].end);
            if (iou > iou_threshold && iou > best_iou) {
                best_iou = iou;
                best = g;
            }
        }
        const bool tp = best < ground_truth.size();
        if (tp) matched[best] = true;
        ranked.push_back({pred.confidence, tp});
    }
    return ranked;
}

EvalReport segment_level_map(std::span<const SegmentPrediction> predictions,
                             std::span<const GroundTruthSegment> ground_truth, const EvalConfig& config,
                             std::span<const std::string> video_ids) {
    config.validate();
    std::set<std::string> known(video_ids.begin(), video_ids.end());
    if (known.empty()) {
        for (const auto& g : ground_truth) known.insert(g.video_id);
    }
    for (const auto& p : predictions) {
        if (!known.contains(p.video_id)) {
            throw std::invalid_argument("segment_level_map: prediction references unknown video '" + p.video_id + "'");
        }
        if (p.class_id < 1 || static_cast<std::size_t>(p.class_id) > config.num_classes) {
            throw std::invalid_argument("segment_level_map: prediction class out of range");
        }
    }

    EvalReport report;
    report.iou_thresholds = config.iou_thresholds;
    report.class_ap.assign(config.num_classes, std::vector<double>(config.iou_thresholds.size(), 0.0));
    report.map.assign(config.iou_thresholds.size(), 0.0);
    for (std::size_t k = 1; k <= config.num_classes; ++k) {
        for (std::size_t i = 0; i < config.iou_thresholds.size(); ++i) {
            long positives = 0;
            const auto ranked = match_class(predictions, ground_truth, static_cast<int>(k), config.iou_thresholds[i],
                                            &positives);
            report.class_ap[k - 1][i] = average_precision(ranked, positives);
            report.map[i] += report.class_ap[k - 1][i] / static_cast<double>(config.num_classes);
        }
    }
    return report;
}

void emit_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "class";
    for (double thr : report.iou_thresholds) out << ",iou_" << format4(thr);
    out << '\n';
    for (std::size_t k = 0; k < report.class_ap.size(); ++k) {
        out << "class_" << (k + 1);
        for (double ap : report.class_ap[k]) out << ',' << format4(ap);
        out << '\n';
    }
    out << "mAP";
    for (double m : report.map) out << ',' << format4(m);
    out << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void emit_frame_report(const FrameLevelResult& frame, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "class,frame_ap\n";
    for (std::size_t k = 0; k < frame.class_ap.size(); ++k) out << "class_" << (k + 1) << ',' << format4(frame.class_ap[k]) << '\n';
    out << "mAP," << format4(frame.map) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != cell.size()) throw std::runtime_error(path.string() + ": bad number '" + cell + "'");
    return v;
}

}  // namespace

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty report");
    const auto header = split_csv(line);
    if (header.size() < 2 || header.front() != "class") throw std::runtime_error(path.string() + ": malformed report header");
    EvalReport report;
    for (std::size_t c = 1; c < header.size(); ++c) {
        if (header[c].rfind("iou_", 0) != 0) throw std::runtime_error(path.string() + ": bad column " + header[c]);
        report.iou_thresholds.push_back(parse_cell(header[c].substr(4), path));
    }
    bool saw_map = false;
    while (std::getline(in, line)) {
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw std::runtime_error(path.string() + ": ragged row");
        std::vector<double> values;
        for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(parse_cell(cells[c], path));
        if (cells.front() == "mAP") {
            report.map = values;
            saw_map = true;
        } else {
            report.class_ap.push_back(values);
        }
    }
    if (!saw_map) throw std::runtime_error(path.string() + ": missing mAP row");
    return report;
}

FrameLevelResult load_frame_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "class,frame_ap") throw std::runtime_error(path.string() + ": malformed header");
    FrameLevelResult frame;
    bool saw_map = false;
    while (std::getline(in, line)) {
        const auto cells = split_csv(line);
        if (cells.size() != 2) throw std::runtime_error(path.string() + ": ragged row");
        const double v = parse_cell(cells[1], path);
        if (cells[0] == "mAP") {
            frame.map = v;
            saw_map = true;
        } else {
            frame.class_ap.push_back(v);
        }
    }
    if (!saw_map) throw std::runtime_error(path.string() + ": missing mAP row");
    return frame;
}

void emit_pr_curves(std::span<const SegmentPrediction> predictions, std::span<const GroundTruthSegment> ground_truth,
                    const EvalConfig& config, const std::filesystem::path& dir) {
    config.validate();
    std::filesystem::create_directories(dir);
    for (std::size_t k = 1; k <= config.num_classes; ++k) {
        for (double thr : config.iou_thresholds) {
            long positives = 0;
            const auto ranked = match_class(predictions, ground_truth, static_cast<int>(k), thr, &positives);
            const auto curve = precision_recall_curve(ranked, positives);
            std::ofstream out(dir / ("pr_class" + std::to_string(k) + "_iou" + format4(thr) + ".csv"), std::ios::trunc);
            if (!out) throw std::runtime_error("cannot write precision-recall curve under " + dir.string());
            out << "rank,precision,recall\n";
            for (std::size_t r = 0; r < curve.size(); ++r) {
                out << (r + 1) << ',' << format4(curve[r].precision) << ',' << format4(curve[r].recall) << '\n';
            }
        }
    }
}

}  // namespace fsn
