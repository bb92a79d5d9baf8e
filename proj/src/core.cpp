#include "czsl/core.hpp"

#include <algorithm>
#include <unordered_set>

namespace czsl {

namespace {

bool is_blank(const std::string& name) {
    return name.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::uint64_t pair_key(std::size_t state, std::size_t object, std::size_t n_objects) {
    return static_cast<std::uint64_t>(state) * n_objects + object;
}

}  // namespace

std::size_t Vocabulary::state_index(const std::string& name) const {
    auto it = std::find(states.begin(), states.end(), name);
    if (it == states.end()) throw Error(ErrorKind::UnknownPrimitive, "state '" + name + "'");
    return static_cast<std::size_t>(it - states.begin());
}

std::size_t Vocabulary::object_index(const std::string& name) const {
    auto it = std::find(objects.begin(), objects.end(), name);
    if (it == objects.end()) throw Error(ErrorKind::UnknownPrimitive, "object '" + name + "'");
    return static_cast<std::size_t>(it - objects.begin());
}

Vocabulary make_vocabulary(std::vector<std::string> states, std::vector<std::string> objects) {
    auto check = [](const std::vector<std::string>& names, const char* what) {
        std::unordered_set<std::string> unique;
        for (const auto& name : names) {
            if (is_blank(name)) {
                throw Error(ErrorKind::ValidationFailed, std::string("empty ") + what + " name");
            }
            if (!unique.insert(name).second) {
                throw Error(ErrorKind::ValidationFailed,
                            std::string("duplicate ") + what + " name '" + name + "'");
            }
        }
    };
    check(states, "state");
    check(objects, "object");
    return Vocabulary{std::move(states), std::move(objects)};
}

std::size_t CompositionSpace::target_index(PairIdx pair) const {
    auto found = try_target_index(pair);
    if (!found) {
        throw Error(ErrorKind::NotInTarget,
                    "(" + vocab_.states[pair.state] + ", " + vocab_.objects[pair.object] + ")");
    }
    return *found;
}

std::size_t CompositionSpace::target_index(const std::string& state, const std::string& object) const {
    return target_index(PairIdx{vocab_.state_index(state), vocab_.object_index(object)});
}

std::optional<std::size_t> CompositionSpace::try_target_index(PairIdx pair) const {
    if (pair.state >= vocab_.n_states() || pair.object >= vocab_.n_objects()) return std::nullopt;
    if (mode_ == SpaceMode::OpenWorld) {
        return pair.state * vocab_.n_objects() + pair.object;
    }
    auto it = target_lookup_.find(pair_key(pair.state, pair.object, vocab_.n_objects()));
    if (it == target_lookup_.end()) return std::nullopt;
    return it->second;
}

PairIdx CompositionSpace::target_pair(std::size_t index) const {
    if (index >= target_.size()) {
        throw Error(ErrorKind::IndexOutOfRange,
                    "target index " + std::to_string(index) + " of " + std::to_string(target_.size()));
    }
    return target_[index];
}

std::size_t CompositionSpace::seen_position(PairIdx pair) const {
    auto it = seen_lookup_.find(pair_key(pair.state, pair.object, vocab_.n_objects()));
    if (it == seen_lookup_.end()) {
        throw Error(ErrorKind::NotInTarget,
                    "(" + vocab_.states[pair.state] + ", " + vocab_.objects[pair.object] + ") is not seen");
    }
    return it->second;
}

CompositionSpace build_composition_space(const Vocabulary& vocab,
                                         const std::vector<NamePair>& seen_pairs,
                                         const std::optional<std::vector<NamePair>>& target_pairs,
                                         SpaceMode mode) {
    CompositionSpace space;
    space.vocab_ = vocab;
    space.mode_ = mode;

    const std::size_t n_objects = vocab.n_objects();

    auto resolve = [&](const NamePair& pair) {
        return PairIdx{vocab.state_index(pair.first), vocab.object_index(pair.second)};
    };

    std::unordered_set<std::uint64_t> seen_keys;
    for (const auto& name_pair : seen_pairs) {
        PairIdx pair = resolve(name_pair);
        if (seen_keys.insert(pair_key(pair.state, pair.object, n_objects)).second) {
            space.seen_.push_back(pair);
        }
    }

    if (mode == SpaceMode::OpenWorld) {
        space.target_.reserve(vocab.n_states() * n_objects);
        for (std::size_t s = 0; s < vocab.n_states(); ++s) {
            for (std::size_t o = 0; o < n_objects; ++o) {
                space.target_.push_back(PairIdx{s, o});
            }
        }
    } else {
        if (!target_pairs) {
            throw Error(ErrorKind::InvalidConfig, "closed-world space requires explicit target pairs");
        }
        std::unordered_set<std::uint64_t> target_keys;
        for (const auto& name_pair : *target_pairs) {
            PairIdx pair = resolve(name_pair);
            std::uint64_t key = pair_key(pair.state, pair.object, n_objects);
            if (target_keys.insert(key).second) {
                space.target_lookup_.emplace(key, space.target_.size());
                space.target_.push_back(pair);
            }
        }
        for (const PairIdx& pair : space.seen_) {
            if (!target_keys.count(pair_key(pair.state, pair.object, n_objects))) {
                throw Error(ErrorKind::SeenNotInTarget,
                            "(" + vocab.states[pair.state] + ", " + vocab.objects[pair.object] + ")");
            }
        }
    }

    std::vector<char> state_covered(vocab.n_states(), 0);
    std::vector<char> object_covered(n_objects, 0);
    for (const PairIdx& pair : space.seen_) {
        state_covered[pair.state] = 1;
        object_covered[pair.object] = 1;
    }
    for (std::size_t s = 0; s < vocab.n_states(); ++s) {
        if (!state_covered[s]) {
            throw Error(ErrorKind::UncoveredPrimitive, "state '" + vocab.states[s] + "' in no seen pair");
        }
    }
    for (std::size_t o = 0; o < n_objects; ++o) {
        if (!object_covered[o]) {
            throw Error(ErrorKind::UncoveredPrimitive, "object '" + vocab.objects[o] + "' in no seen pair");
        }
    }

    space.seen_flag_.assign(space.target_.size(), 0);
    space.seen_target_idx_.reserve(space.seen_.size());
    for (std::size_t i = 0; i < space.seen_.size(); ++i) {
        const PairIdx& pair = space.seen_[i];
        std::size_t idx = space.target_index(pair);
        space.seen_flag_[idx] = 1;
        space.seen_target_idx_.push_back(idx);
        space.seen_lookup_.emplace(pair_key(pair.state, pair.object, n_objects), i);
    }

    return space;
}

const char* to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

Split split_from_string(const std::string& text) {
    if (text == "train") return Split::Train;
    if (text == "val") return Split::Val;
    if (text == "test") return Split::Test;
    throw Error(ErrorKind::ParseError, "unknown split '" + text + "'");
}

std::vector<std::size_t> Dataset::indices_of(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].split == split) out.push_back(i);
    }
    return out;
}

ValidationReport validate_dataset(const Dataset& dataset, const CompositionSpace& space,
                                  std::size_t n_feature_rows) {
    ValidationReport report;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const Sample& sample = dataset.samples[i];
        if (sample.state >= space.n_states() || sample.object >= space.n_objects()) {
            report.violations.push_back({"primitive-out-of-range", i,
                                         "state " + std::to_string(sample.state) + ", object " +
                                             std::to_string(sample.object)});
            continue;
        }
        PairIdx pair{sample.state, sample.object};
        auto target_idx = space.try_target_index(pair);
        if (!target_idx) {
            report.violations.push_back({"label-not-in-target", i,
                                         "(" + space.vocab().states[sample.state] + ", " +
                                             space.vocab().objects[sample.object] + ")"});
        } else if (sample.split == Split::Train && !space.is_seen(*target_idx)) {
            report.violations.push_back({"train-label-unseen", i,
                                         "(" + space.vocab().states[sample.state] + ", " +
                                             space.vocab().objects[sample.object] + ")"});
        }
        if (sample.feature_row >= n_feature_rows) {
            report.violations.push_back({"feature-out-of-range", i,
                                         "row " + std::to_string(sample.feature_row) + " of " +
                                             std::to_string(n_feature_rows)});
        }
    }
    return report;
}

}  // namespace czsl
