#include "czsl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace czsl {

namespace {

constexpr double kBoundaryOffset = 1e-4;

// Best-scoring composition per group under an optional mask; ties keep the
// lowest composition index. Index npos marks "group fully masked".
struct RowStats {
    std::size_t seen_idx = npos;
    double seen_score = 0.0;
    std::size_t unseen_idx = npos;
    double unseen_score = 0.0;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

RowStats row_stats(const ScoreMatrix& sm, std::size_t row, const std::vector<char>* mask) {
    RowStats st;
    auto scores = sm.scores.row(row);
    for (std::size_t c = 0; c < scores.size(); ++c) {
        if (mask && !(*mask)[c]) continue;
        if (sm.seen_flags[c]) {
            if (st.seen_idx == RowStats::npos || scores[c] > st.seen_score) {
                st.seen_idx = c;
                st.seen_score = scores[c];
            }
        } else {
            if (st.unseen_idx == RowStats::npos || scores[c] > st.unseen_score) {
                st.unseen_idx = c;
                st.unseen_score = scores[c];
            }
        }
    }
    return st;
}

// The biased argmax over the full row reduces to comparing the two group
// bests; an exact tie falls back to the lower composition index.
std::size_t row_prediction(const RowStats& st, double bias) {
    if (st.unseen_idx == RowStats::npos) return st.seen_idx;
    if (st.seen_idx == RowStats::npos) return st.unseen_idx;
    const double unseen_biased = st.unseen_score + bias;
    if (unseen_biased > st.seen_score) return st.unseen_idx;
    if (unseen_biased < st.seen_score) return st.seen_idx;
    return std::min(st.seen_idx, st.unseen_idx);
}

void check_mask(const ScoreMatrix& sm, const std::vector<char>* mask) {
    if (!mask) return;
    if (mask->size() != sm.n_compositions()) {
        throw Error(ErrorKind::LengthMismatch, "mask length differs from composition count");
    }
    if (std::find(mask->begin(), mask->end(), char(1)) == mask->end()) {
        throw Error(ErrorKind::EmptyMask, "mask has no admissible composition");
    }
}

AccuracyPair accumulate_accuracy(const ScoreMatrix& sm, const std::vector<RowStats>& stats,
                                 double bias) {
    std::size_t seen_total = 0, seen_hit = 0, unseen_total = 0, unseen_hit = 0;
    for (std::size_t i = 0; i < sm.n_samples(); ++i) {
        const std::size_t label = sm.labels[i];
        const std::size_t pred = row_prediction(stats[i], bias);
        if (sm.seen_flags[label]) {
            ++seen_total;
            if (pred == label) ++seen_hit;
        } else {
            ++unseen_total;
            if (pred == label) ++unseen_hit;
        }
    }
    AccuracyPair out;
    out.seen_group_empty = seen_total == 0;
    out.unseen_group_empty = unseen_total == 0;
    out.seen_acc = seen_total ? static_cast<double>(seen_hit) / seen_total : 0.0;
    out.unseen_acc = unseen_total ? static_cast<double>(unseen_hit) / unseen_total : 0.0;
    return out;
}

}  // namespace

void ScoreMatrix::validate() const {
    if (scores.rows != labels.size()) {
        throw Error(ErrorKind::LengthMismatch, "score rows and label count differ");
    }
    if (seen_flags.size() != scores.cols || comp_pairs.size() != scores.cols) {
        throw Error(ErrorKind::LengthMismatch, "composition metadata length differs from columns");
    }
    for (std::size_t label : labels) {
        if (label >= scores.cols) {
            throw Error(ErrorKind::IndexOutOfRange, "label " + std::to_string(label));
        }
    }
    if (!all_finite(scores.data)) throw Error(ErrorKind::NonFiniteInput, "score matrix");
}

ScoreMatrix make_score_matrix(Matrix scores, std::vector<std::size_t> labels,
                              const CompositionSpace& space) {
    if (scores.cols != space.target_size()) {
        throw Error(ErrorKind::LengthMismatch, "score columns differ from target size");
    }
    ScoreMatrix sm;
    sm.scores = std::move(scores);
    sm.labels = std::move(labels);
    sm.seen_flags = space.seen_flags();
    sm.comp_pairs = space.target();
    sm.validate();
    return sm;
}

double harmonic_mean(double a, double b) {
    const double sum = a + b;
    if (sum == 0.0) return 0.0;
    return 2.0 * a * b / sum;
}

std::vector<double> bias_candidates(const ScoreMatrix& sm, const std::vector<char>* mask) {
    sm.validate();
    check_mask(sm, mask);
    const bool any_seen = std::find(sm.seen_flags.begin(), sm.seen_flags.end(), char(1)) !=
                          sm.seen_flags.end();
    const bool any_unseen = std::find(sm.seen_flags.begin(), sm.seen_flags.end(), char(0)) !=
                            sm.seen_flags.end();
    if (!any_seen || !any_unseen) {
        throw Error(ErrorKind::DegenerateSpace, "target needs both seen and unseen compositions");
    }

    std::vector<double> boundaries;
    boundaries.reserve(sm.n_samples());
    for (std::size_t i = 0; i < sm.n_samples(); ++i) {
        RowStats st = row_stats(sm, i, mask);
        if (st.seen_idx == RowStats::npos || st.unseen_idx == RowStats::npos) continue;
        boundaries.push_back(st.seen_score - st.unseen_score);
    }

    std::vector<double> candidates;
    if (boundaries.empty()) {
        // Mask removed one side everywhere; any bias gives the same decisions.
        candidates = {0.0};
    } else {
        auto [lo, hi] = std::minmax_element(boundaries.begin(), boundaries.end());
        for (double b : boundaries) {
            candidates.push_back(b - kBoundaryOffset);
            candidates.push_back(b + kBoundaryOffset);
        }
        candidates.push_back(*lo - 1.0);
        candidates.push_back(*hi + 1.0);
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    return candidates;
}

AccuracyPair accuracy_pair(const ScoreMatrix& sm, double bias, const std::vector<char>* mask) {
    sm.validate();
    check_mask(sm, mask);
    std::vector<RowStats> stats;
    stats.reserve(sm.n_samples());
    for (std::size_t i = 0; i < sm.n_samples(); ++i) stats.push_back(row_stats(sm, i, mask));
    return accumulate_accuracy(sm, stats, bias);
}

double auc_from_curve(const std::vector<std::pair<double, double>>& seen_unseen_points) {
    if (seen_unseen_points.empty()) return 0.0;

    // unseen accuracy -> max seen accuracy (accuracies are exact rationals,
    // so double equality dedups correctly)
    std::vector<std::pair<double, double>> points;  // (unseen, seen)
    points.reserve(seen_unseen_points.size());
    for (const auto& [seen, unseen] : seen_unseen_points) points.emplace_back(unseen, seen);
    std::sort(points.begin(), points.end());
    std::vector<std::pair<double, double>> curve;
    for (const auto& [u, s] : points) {
        if (!curve.empty() && curve.back().first == u) {
            curve.back().second = std::max(curve.back().second, s);
        } else {
            curve.emplace_back(u, s);
        }
    }

    if (curve.front().first > 0.0) {
        curve.insert(curve.begin(), {0.0, curve.front().second});
    }
    curve.emplace_back(curve.back().first, 0.0);  // zero-width closure

    double area = 0.0;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        const double dx = curve[i + 1].first - curve[i].first;
        area += dx * (curve[i].second + curve[i + 1].second) * 0.5;
    }
    return area;
}

EvalReport evaluate(const ScoreMatrix& sm, const std::vector<char>* mask,
                    PrimitiveBias primitive_bias) {
    sm.validate();
    check_mask(sm, mask);
    std::vector<double> candidates = bias_candidates(sm, mask);

    std::vector<RowStats> stats;
    stats.reserve(sm.n_samples());
    for (std::size_t i = 0; i < sm.n_samples(); ++i) stats.push_back(row_stats(sm, i, mask));

    EvalReport report;
    report.curve.reserve(candidates.size());
    bool first = true;
    for (double bias : candidates) {
        AccuracyPair acc = accumulate_accuracy(sm, stats, bias);
        report.curve.push_back({bias, acc.seen_acc, acc.unseen_acc});
        report.best_seen = std::max(report.best_seen, acc.seen_acc);
        report.best_unseen = std::max(report.best_unseen, acc.unseen_acc);
        const double hm = harmonic_mean(acc.seen_acc, acc.unseen_acc);
        if (first || hm > report.best_hm) {
            report.best_hm = hm;
            report.hm_bias = bias;
        }
        if (first) {
            report.seen_group_empty = acc.seen_group_empty;
            report.unseen_group_empty = acc.unseen_group_empty;
        }
        first = false;
    }

    std::vector<std::pair<double, double>> points;
    points.reserve(report.curve.size());
    for (const CurvePoint& p : report.curve) points.emplace_back(p.seen_acc, p.unseen_acc);
    report.auc = auc_from_curve(points);

    const double op_bias = primitive_bias == PrimitiveBias::HmBias ? report.hm_bias : 0.0;
    std::size_t state_hit = 0, obj_hit = 0;
    for (std::size_t i = 0; i < sm.n_samples(); ++i) {
        const std::size_t pred = row_prediction(stats[i], op_bias);
        const PairIdx predicted = sm.comp_pairs[pred];
        const PairIdx truth = sm.comp_pairs[sm.labels[i]];
        if (predicted.state == truth.state) ++state_hit;
        if (predicted.object == truth.object) ++obj_hit;
    }
    if (sm.n_samples() > 0) {
        report.state_acc = static_cast<double>(state_hit) / sm.n_samples();
        report.obj_acc = static_cast<double>(obj_hit) / sm.n_samples();
    }
    return report;
}

}  // namespace czsl
