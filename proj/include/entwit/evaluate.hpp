#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "entwit/dataset.hpp"
#include "entwit/errors.hpp"
#include "entwit/metrics.hpp"
#include "entwit/model.hpp"

namespace entwit {

struct RocPoint {
    double fpr = 0.0, tpr = 0.0;
};

struct SubtypeMetrics {
    int label = 0;
    std::int64_t count = 0;
    double eer = 0.0;
    double auc = 0.0;
};

/// Metrics of one scored dataset. AUC/EER are present only when both classes
/// are; the confusion counts always refer to the selected threshold b.
struct EvalReport {
    double auc = std::numeric_limits<double>::quiet_NaN();
    double eer = std::numeric_limits<double>::quiet_NaN();
    Threshold threshold;
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::vector<double> hist_edges;
    std::vector<std::int64_t> hist_sep, hist_ent;
    std::vector<RocPoint> roc;
    std::vector<SubtypeMetrics> per_label;
    std::vector<double> scores;
    std::vector<int> labels;
};

/// Scores every record with the inference-mode network, in fixed-size chunks.
inline std::vector<double> score_dataset(ModelState& m, const Dataset& ds,
                                         std::int64_t chunk = 512) {
    if (static_cast<int>(ds.dim) != m.arch.dim)
        throw std::invalid_argument("score_dataset: dataset dim does not match model");
    std::vector<double> scores(ds.count());
    for (std::int64_t start = 0; start < ds.count(); start += chunk) {
        std::int64_t stop = std::min(ds.count(), start + chunk);
        std::vector<std::int64_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        std::vector<double> part = anomaly_scores(m, ds.batch(idx));
        std::copy(part.begin(), part.end(), scores.begin() + start);
    }
    return scores;
}

namespace detail {

inline std::vector<RocPoint> roc_points(const std::vector<double>& sep,
                                        const std::vector<double>& ent, std::size_t max_points) {
    std::vector<double> s = sep, e = ent;
    std::sort(s.begin(), s.end());
    std::sort(e.begin(), e.end());
    std::vector<double> all = s;
    all.insert(all.end(), e.begin(), e.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<RocPoint> pts;
    pts.push_back({0.0, 0.0});
    std::size_t step = std::max<std::size_t>(1, all.size() / max_points);
    for (std::size_t i = 0; i < all.size(); i += step) {
        double b = all[i];
        // positive class for ROC = entangled: TPR = P(ent > b), FPR = P(sep > b)
        double tpr = static_cast<double>(e.end() - std::upper_bound(e.begin(), e.end(), b)) /
                     static_cast<double>(e.size());
        double fpr = static_cast<double>(s.end() - std::upper_bound(s.begin(), s.end(), b)) /
                     static_cast<double>(s.size());
        pts.push_back({fpr, tpr});
    }
    pts.push_back({1.0, 1.0});
    std::sort(pts.begin(), pts.end(), [](const RocPoint& a, const RocPoint& b) {
        return a.fpr < b.fpr || (a.fpr == b.fpr && a.tpr < b.tpr);
    });
    return pts;
}

}  // namespace detail

/// Builds the report from precomputed scores; the scoring model is not needed.
/// Threshold::Method::max_separable consults only label-0 scores for b.
inline EvalReport report_from_scores(const std::vector<double>& scores,
                                     const std::vector<int>& labels,
                                     Threshold::Method method) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("report_from_scores: size mismatch");
    std::vector<double> sep, ent;
    for (std::size_t i = 0; i < scores.size(); ++i)
        (labels[i] == 0 ? sep : ent).push_back(scores[i]);
    if (sep.empty()) throw std::invalid_argument("report_from_scores: no separable records");

    EvalReport r;
    r.scores = scores;
    r.labels = labels;
    if (method == Threshold::Method::max_separable) {
        r.threshold = threshold_max_separable(sep);
    } else {
        if (ent.empty())
            throw std::invalid_argument("report_from_scores: eer threshold needs both classes");
        r.threshold = threshold_eer(sep, ent);
    }
    double b = r.threshold.b;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool predicted_ent = scores[i] > b;
        bool truly_ent = labels[i] != 0;
        if (!truly_ent && !predicted_ent) ++r.tp;       // separable kept
        else if (!truly_ent && predicted_ent) ++r.fn;   // separable flagged
        else if (truly_ent && !predicted_ent) ++r.fp;   // entangled missed
        else ++r.tn;
    }
    if (!ent.empty()) {
        r.auc = roc_auc(scores, labels);
        r.eer = eer(scores, labels).eer;
        r.roc = detail::roc_points(sep, ent, 256);
        // per-subtype breakdown against the separable reference scores
        std::map<int, std::vector<double>> by_label;
        for (std::size_t i = 0; i < scores.size(); ++i)
            if (labels[i] != 0) by_label[labels[i]].push_back(scores[i]);
        if (by_label.size() > 1) {
            for (auto& [label, sc] : by_label) {
                SubtypeMetrics sm;
                sm.label = label;
                sm.count = static_cast<std::int64_t>(sc.size());
                std::vector<double> merged = sep;
                std::vector<int> ml(sep.size(), 0);
                merged.insert(merged.end(), sc.begin(), sc.end());
                ml.insert(ml.end(), sc.size(), 1);
                sm.eer = eer(merged, ml).eer;
                sm.auc = roc_auc(merged, ml);
                r.per_label.push_back(sm);
            }
        }
    }
    // histogram over [0, max]
    double hi = *std::max_element(scores.begin(), scores.end());
    if (hi <= 0.0) hi = 1.0;
    constexpr int kBins = 40;
    r.hist_edges.resize(kBins + 1);
    for (int i = 0; i <= kBins; ++i) r.hist_edges[i] = hi * i / kBins;
    r.hist_sep.assign(kBins, 0);
    r.hist_ent.assign(kBins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        int bin = std::min(kBins - 1, static_cast<int>(scores[i] / hi * kBins));
        (labels[i] == 0 ? r.hist_sep : r.hist_ent)[bin]++;
    }
    return r;
}

inline EvalReport evaluate(ModelState& m, const Dataset& ds, Threshold::Method method) {
    std::vector<double> scores = score_dataset(m, ds);
    std::vector<int> labels(ds.count(), 0);
    if (ds.labeled)
        for (std::int64_t i = 0; i < ds.count(); ++i) labels[i] = ds.labels[i];
    return report_from_scores(scores, labels, method);
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    if (std::isfinite(r.auc)) j["auc"] = r.auc;
    if (std::isfinite(r.eer)) j["eer"] = r.eer;
    j["threshold"] = r.threshold.b;
    j["threshold_method"] =
        r.threshold.method == Threshold::Method::eer ? "eer" : "max_separable";
    j["counts"] = {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}};
    j["histogram"] = {{"edges", r.hist_edges}, {"separable", r.hist_sep}, {"entangled", r.hist_ent}};
    nlohmann::json roc = nlohmann::json::array();
    for (const RocPoint& p : r.roc) roc.push_back({p.fpr, p.tpr});
    j["roc"] = roc;
    if (!r.per_label.empty()) {
        nlohmann::json per = nlohmann::json::array();
        for (const SubtypeMetrics& s : r.per_label)
            per.push_back({{"label", s.label}, {"count", s.count}, {"eer", s.eer}, {"auc", s.auc}});
        j["per_label"] = per;
    }
    return j;
}

inline std::string report_summary(const EvalReport& r) {
    std::string s;
    char buf[256];
    if (std::isfinite(r.auc)) {
        std::snprintf(buf, sizeof buf, "AUC  %.6f\nEER  %.4f%%\n", r.auc, 100.0 * r.eer);
        s += buf;
    }
    std::snprintf(buf, sizeof buf, "threshold b = %.6g (%s)\nTP %lld  FP %lld  TN %lld  FN %lld\n",
                  r.threshold.b,
                  r.threshold.method == Threshold::Method::eer ? "eer" : "max_separable",
                  static_cast<long long>(r.tp), static_cast<long long>(r.fp),
                  static_cast<long long>(r.tn), static_cast<long long>(r.fn));
    s += buf;
    for (const SubtypeMetrics& sm : r.per_label) {
        std::snprintf(buf, sizeof buf, "label %d: n=%lld  EER %.4f%%  AUC %.6f\n", sm.label,
                      static_cast<long long>(sm.count), 100.0 * sm.eer, sm.auc);
        s += buf;
    }
    return s;
}

/// Per-sample latent vector v1, anomaly score, and label as delimited text for
/// external visualization.
inline void export_latents(ModelState& m, const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    int k = m.arch.latent_dim;
    for (int i = 0; i < k; ++i) out << "re_" << i << ",";
    for (int i = 0; i < k; ++i) out << "im_" << i << ",";
    out << "score,label\n";
    constexpr std::int64_t chunk = 512;
    for (std::int64_t start = 0; start < ds.count(); start += chunk) {
        std::int64_t stop = std::min(ds.count(), start + chunk);
        std::vector<std::int64_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        SiameseOut s = forward_siamese(m, ds.batch(idx), Mode::infer);
        for (std::int64_t bi = 0; bi < stop - start; ++bi) {
            double acc = 0.0;
            for (int i = 0; i < k; ++i) {
                double dr = s.v1.re[bi * k + i] - s.v2.re[bi * k + i];
                double di = s.v1.im[bi * k + i] - s.v2.im[bi * k + i];
                acc += dr * dr + di * di;
            }
            char buf[64];
            for (int i = 0; i < k; ++i) {
                std::snprintf(buf, sizeof buf, "%.17g,", s.v1.re[bi * k + i]);
                out << buf;
            }
            for (int i = 0; i < k; ++i) {
                std::snprintf(buf, sizeof buf, "%.17g,", s.v1.im[bi * k + i]);
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "%.17g,%d\n", std::sqrt(acc),
                          ds.labeled ? static_cast<int>(ds.labels[start + bi]) : 0);
            out << buf;
        }
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace entwit
