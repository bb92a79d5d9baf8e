#pragma once

#include <utility>
#include <vector>

#include "czsl/common.hpp"
#include "czsl/core.hpp"

namespace czsl {

// Evaluation-time scores: one row per sample over the full target space,
// plus ground-truth labels and the per-composition seen flags. Works the
// same whether the rows came from this engine or from an external file.
struct ScoreMatrix {
    Matrix scores;                     // n_samples x |target|
    std::vector<std::size_t> labels;   // target index per row
    std::vector<char> seen_flags;      // per composition, target order
    std::vector<PairIdx> comp_pairs;   // decomposition per composition

    std::size_t n_samples() const { return scores.rows; }
    std::size_t n_compositions() const { return scores.cols; }
    void validate() const;
};

ScoreMatrix make_score_matrix(Matrix scores, std::vector<std::size_t> labels,
                              const CompositionSpace& space);

// 2ab/(a+b), 0 when a + b == 0.
double harmonic_mean(double a, double b);

// Per-sample decision boundaries (max seen score - max unseen score), each
// offset by +/-1e-4, plus one sentinel below and one above all boundaries;
// sorted and deduplicated. Masked compositions are excluded from the maxima.
// Throws DegenerateSpace when the target has no seen or no unseen entries.
std::vector<double> bias_candidates(const ScoreMatrix& scores,
                                    const std::vector<char>* mask = nullptr);

struct AccuracyPair {
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
    bool seen_group_empty = false;
    bool unseen_group_empty = false;
};

// Adds `bias` to every unseen composition's score, masks with -inf, takes the
// per-row argmax (ties -> lowest composition index), and scores each
// ground-truth group separately. An empty group reports accuracy 0 and its
// degenerate flag.
AccuracyPair accuracy_pair(const ScoreMatrix& scores, double bias,
                           const std::vector<char>* mask = nullptr);

struct CurvePoint {
    double bias = 0.0;
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
};

// Trapezoidal area with unseen accuracy on the x-axis. Points collapse to
// the max seen accuracy per unique unseen accuracy; the curve is closed by a
// horizontal extension of the lowest-unseen point to u = 0 and a zero-height
// point at the highest unseen accuracy.
double auc_from_curve(const std::vector<std::pair<double, double>>& seen_unseen_points);

enum class PrimitiveBias { HmBias, Zero };

struct EvalReport {
    double best_seen = 0.0;
    double best_unseen = 0.0;
    double best_hm = 0.0;
    double auc = 0.0;
    double hm_bias = 0.0;       // smallest bias attaining best_hm
    double state_acc = 0.0;
    double obj_acc = 0.0;
    bool seen_group_empty = false;
    bool unseen_group_empty = false;
    std::vector<CurvePoint> curve;  // one point per swept candidate
};

// Full bias-calibrated sweep. Primitive accuracies decompose the prediction
// at the chosen operating point (hm_bias by default) into state and object
// hits, micro-averaged over all samples.
EvalReport evaluate(const ScoreMatrix& scores, const std::vector<char>* mask = nullptr,
                    PrimitiveBias primitive_bias = PrimitiveBias::HmBias);

}  // namespace czsl
