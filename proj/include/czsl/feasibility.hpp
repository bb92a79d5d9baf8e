#pragma once

#include <cstdint>
#include <vector>

#include "czsl/common.hpp"
#include "czsl/core.hpp"
#include "czsl/embed.hpp"
#include "czsl/eval.hpp"

namespace czsl {

enum class MixingMode { Avg, Max, StateOnly, ObjOnly };

const char* to_string(MixingMode mode);
MixingMode mixing_from_string(const std::string& text);

// Per-composition feasibility in target order. Seen compositions always
// score 1; every defined entry lies in [-1, 1]. A branch is undefined when
// its support set is empty, which the core invariants rule out but the
// operations tolerate: one undefined branch defers to the other, both
// undefined gives rho = -1.
struct FeasibilityTable {
    std::vector<double> rho;
    std::vector<double> rho_state;
    std::vector<double> rho_obj;
    std::vector<char> state_defined;
    std::vector<char> obj_defined;
    MixingMode mixing = MixingMode::Avg;
    std::int64_t epoch_tag = 0;

    std::size_t size() const { return rho.size(); }
};

// Objects seen with the state / states seen with the object, ascending.
std::vector<std::size_t> state_support(const CompositionSpace& space, std::size_t state_idx);
std::vector<std::size_t> object_support(const CompositionSpace& space, std::size_t object_idx);

struct BranchScore {
    double value = -1.0;
    bool defined = false;
};

// max over o-hat in O^s of cos(phi(o), phi(o-hat)); 1 for seen pairs,
// undefined when the support set is empty.
BranchScore rho_obj_score(const PrimitiveEmbeddingTable& primitives, const CompositionSpace& space,
                          std::size_t state_idx, std::size_t object_idx);

// Mirror over S^o with state similarities.
BranchScore rho_state_score(const PrimitiveEmbeddingTable& primitives, const CompositionSpace& space,
                            std::size_t state_idx, std::size_t object_idx);

FeasibilityTable feasibility_scores(const PrimitiveEmbeddingTable& primitives,
                                    const CompositionSpace& space, MixingMode mixing,
                                    std::int64_t epoch_tag = 0);

struct MaskConfig {
    double tau = 0.0;
    bool keep_seen = true;  // always true in this artifact

    void validate() const;
};

// Entry true iff the composition is seen or rho > tau (strict). The seen
// set guarantees at least one true entry.
std::vector<char> hard_mask(const FeasibilityTable& table, const CompositionSpace& space,
                            MaskConfig config);

struct ThresholdPolicy {
    std::size_t quantile_count = 21;  // quantiles {0, 0.05, ..., 1.0}
};

// Candidate taus are nearest-rank quantiles of the unseen-composition rho
// values plus -1; returns the candidate maximizing validation AUC under
// hard_mask, ties toward the smaller tau (less masking).
double tune_threshold(const FeasibilityTable& table, const ScoreMatrix& val_scores,
                      const CompositionSpace& space, ThresholdPolicy policy = {});

// Ranked rho report (descending, ties by composition index): one line per
// composition with the branch values, tab-separated.
std::string feasibility_report(const FeasibilityTable& table, const CompositionSpace& space);

// Inverse of feasibility_report; every target composition must appear once.
FeasibilityTable feasibility_table_from_report(const std::string& text,
                                               const CompositionSpace& space);

}  // namespace czsl
