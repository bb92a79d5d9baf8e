#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "czsl/common.hpp"

namespace czsl {

// State and object name lists. Names are case-sensitive exact tokens here;
// any normalization (lowercasing, underscore handling) happens in the I/O
// layer before a Vocabulary is built.
struct Vocabulary {
    std::vector<std::string> states;
    std::vector<std::string> objects;

    std::size_t n_states() const { return states.size(); }
    std::size_t n_objects() const { return objects.size(); }

    std::size_t state_index(const std::string& name) const;
    std::size_t object_index(const std::string& name) const;
};

// Validates uniqueness and non-empty tokens.
Vocabulary make_vocabulary(std::vector<std::string> states, std::vector<std::string> objects);

struct PairIdx {
    std::size_t state = 0;
    std::size_t object = 0;

    friend bool operator==(const PairIdx&, const PairIdx&) = default;
};

enum class SpaceMode { ClosedWorld, OpenWorld };

using NamePair = std::pair<std::string, std::string>;

// The label space: seen compositions C^s and the prediction target C^t.
// Target ordering is the one global indexing convention: state-major
// row-major over the vocabulary orders in the open world, input order in
// the closed world. Every score vector, mask, and feasibility table in the
// rest of the library indexes in this order. Immutable after construction.
class CompositionSpace {
public:
    CompositionSpace() = default;  // empty space, assign from the builder

    const Vocabulary& vocab() const { return vocab_; }
    SpaceMode mode() const { return mode_; }

    std::size_t n_states() const { return vocab_.n_states(); }
    std::size_t n_objects() const { return vocab_.n_objects(); }

    const std::vector<PairIdx>& seen() const { return seen_; }
    const std::vector<PairIdx>& target() const { return target_; }
    std::size_t seen_size() const { return seen_.size(); }
    std::size_t target_size() const { return target_.size(); }

    // Target index of a pair; throws NotInTarget.
    std::size_t target_index(PairIdx pair) const;
    std::size_t target_index(const std::string& state, const std::string& object) const;
    std::optional<std::size_t> try_target_index(PairIdx pair) const;

    // Inverse lookup; throws IndexOutOfRange.
    PairIdx target_pair(std::size_t index) const;

    bool is_seen(std::size_t target_index) const { return seen_flag_[target_index] != 0; }
    const std::vector<char>& seen_flags() const { return seen_flag_; }

    // Target index of each seen composition, in seen order.
    const std::vector<std::size_t>& seen_target_indices() const { return seen_target_idx_; }

    // Position within the seen list; throws NotInTarget if the pair is unseen.
    std::size_t seen_position(PairIdx pair) const;

    friend CompositionSpace build_composition_space(const Vocabulary& vocab,
                                                    const std::vector<NamePair>& seen_pairs,
                                                    const std::optional<std::vector<NamePair>>& target_pairs,
                                                    SpaceMode mode);

private:
    Vocabulary vocab_;
    SpaceMode mode_ = SpaceMode::OpenWorld;
    std::vector<PairIdx> seen_;
    std::vector<PairIdx> target_;
    std::vector<char> seen_flag_;
    std::vector<std::size_t> seen_target_idx_;
    // Pair key (state * n_objects + object) -> target position. Unused in
    // open-world mode where the index is the key itself.
    std::unordered_map<std::uint64_t, std::size_t> target_lookup_;
    std::unordered_map<std::uint64_t, std::size_t> seen_lookup_;
};

// Builds and validates a composition space.
//   - all pair names must resolve in the vocabulary (UnknownPrimitive)
//   - closed world: target_pairs required and must contain every seen pair
//     (SeenNotInTarget); open world: target is the full product and
//     target_pairs is ignored
//   - every vocabulary state and object must occur in some seen pair
//     (UncoveredPrimitive)
// Exact duplicate pairs in the inputs are collapsed to their first occurrence.
CompositionSpace build_composition_space(const Vocabulary& vocab,
                                         const std::vector<NamePair>& seen_pairs,
                                         const std::optional<std::vector<NamePair>>& target_pairs,
                                         SpaceMode mode);

enum class Split { Train, Val, Test };

const char* to_string(Split split);
Split split_from_string(const std::string& text);

struct Sample {
    std::size_t feature_row = 0;
    std::size_t state = 0;
    std::size_t object = 0;
    Split split = Split::Train;
};

struct Dataset {
    std::vector<Sample> samples;

    std::vector<std::size_t> indices_of(Split split) const;
};

struct Violation {
    std::string kind;          // "train-label-unseen", "feature-out-of-range", ...
    std::size_t sample_index;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Violations are data, not exceptions: train labels must be seen, val/test
// labels must be in target, feature rows must be in range.
ValidationReport validate_dataset(const Dataset& dataset, const CompositionSpace& space,
                                  std::size_t n_feature_rows);

}  // namespace czsl
