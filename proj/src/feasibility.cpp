#include "czsl/feasibility.hpp"

#include <algorithm>
#include <cmath>

namespace czsl {

namespace {

void check_primitive_range(const CompositionSpace& space, std::size_t state_idx,
                           std::size_t object_idx) {
    if (state_idx >= space.n_states() || object_idx >= space.n_objects()) {
        throw Error(ErrorKind::IndexOutOfRange,
                    "primitive pair (" + std::to_string(state_idx) + ", " +
                        std::to_string(object_idx) + ")");
    }
}

// cos between all row pairs of a table; rows validated non-zero upstream.
Matrix similarity_matrix(const Matrix& table) {
    Vec norms(table.rows);
    for (std::size_t r = 0; r < table.rows; ++r) {
        norms[r] = std::sqrt(squared_norm(table.row(r)));
        if (norms[r] <= kCosineEpsilon) {
            throw Error(ErrorKind::ZeroVector, "embedding row " + std::to_string(r) + " is zero");
        }
    }
    Matrix sim(table.rows, table.rows);
    for (std::size_t a = 0; a < table.rows; ++a) {
        for (std::size_t b = 0; b < table.rows; ++b) {
            sim(a, b) = std::clamp(dot(table.row(a), table.row(b)) / (norms[a] * norms[b]), -1.0, 1.0);
        }
    }
    return sim;
}

double mix_branches(BranchScore state_branch, BranchScore obj_branch, MixingMode mixing) {
    // Undefined branches defer to the defined one; both undefined -> -1.
    if (!state_branch.defined && !obj_branch.defined) return -1.0;
    if (!state_branch.defined) return obj_branch.value;
    if (!obj_branch.defined) return state_branch.value;
    switch (mixing) {
        case MixingMode::Avg: return 0.5 * (state_branch.value + obj_branch.value);
        case MixingMode::Max: return std::max(state_branch.value, obj_branch.value);
        case MixingMode::StateOnly: return state_branch.value;
        case MixingMode::ObjOnly: return obj_branch.value;
    }
    return -1.0;
}

}  // namespace

const char* to_string(MixingMode mode) {
    switch (mode) {
        case MixingMode::Avg: return "avg";
        case MixingMode::Max: return "max";
        case MixingMode::StateOnly: return "state-only";
        case MixingMode::ObjOnly: return "obj-only";
    }
    return "avg";
}

MixingMode mixing_from_string(const std::string& text) {
    if (text == "avg") return MixingMode::Avg;
    if (text == "max") return MixingMode::Max;
    if (text == "state-only") return MixingMode::StateOnly;
    if (text == "obj-only") return MixingMode::ObjOnly;
    throw Error(ErrorKind::ParseError, "unknown mixing mode '" + text + "'");
}

std::vector<std::size_t> state_support(const CompositionSpace& space, std::size_t state_idx) {
    if (state_idx >= space.n_states()) {
        throw Error(ErrorKind::IndexOutOfRange, "state " + std::to_string(state_idx));
    }
    std::vector<std::size_t> objects;
    for (const PairIdx& pair : space.seen()) {
        if (pair.state == state_idx) objects.push_back(pair.object);
    }
    std::sort(objects.begin(), objects.end());
    objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
    return objects;
}

std::vector<std::size_t> object_support(const CompositionSpace& space, std::size_t object_idx) {
    if (object_idx >= space.n_objects()) {
        throw Error(ErrorKind::IndexOutOfRange, "object " + std::to_string(object_idx));
    }
    std::vector<std::size_t> states;
    for (const PairIdx& pair : space.seen()) {
        if (pair.object == object_idx) states.push_back(pair.state);
    }
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    return states;
}

BranchScore rho_obj_score(const PrimitiveEmbeddingTable& primitives, const CompositionSpace& space,
                          std::size_t state_idx, std::size_t object_idx) {
    check_primitive_range(space, state_idx, object_idx);
    if (space.try_target_index(PairIdx{state_idx, object_idx}) &&
        space.is_seen(*space.try_target_index(PairIdx{state_idx, object_idx}))) {
        return {1.0, true};
    }
    std::vector<std::size_t> support = state_support(space, state_idx);
    if (support.empty()) return {-1.0, false};
    double best = -1.0;
    auto target_row = primitives.objects.row(object_idx);
    for (std::size_t candidate : support) {
        best = std::max(best, cosine(target_row, primitives.objects.row(candidate)));
    }
    return {best, true};
}

BranchScore rho_state_score(const PrimitiveEmbeddingTable& primitives, const CompositionSpace& space,
                            std::size_t state_idx, std::size_t object_idx) {
    check_primitive_range(space, state_idx, object_idx);
    if (space.try_target_index(PairIdx{state_idx, object_idx}) &&
        space.is_seen(*space.try_target_index(PairIdx{state_idx, object_idx}))) {
        return {1.0, true};
    }
    std::vector<std::size_t> support = object_support(space, object_idx);
    if (support.empty()) return {-1.0, false};
    double best = -1.0;
    auto target_row = primitives.states.row(state_idx);
    for (std::size_t candidate : support) {
        best = std::max(best, cosine(target_row, primitives.states.row(candidate)));
    }
    return {best, true};
}

FeasibilityTable feasibility_scores(const PrimitiveEmbeddingTable& primitives,
                                    const CompositionSpace& space, MixingMode mixing,
                                    std::int64_t epoch_tag) {
    if (primitives.states.rows != space.n_states() || primitives.objects.rows != space.n_objects()) {
        throw Error(ErrorKind::ShapeMismatch, "embedding table does not match the vocabulary");
    }

    Matrix state_sim = similarity_matrix(primitives.states);
    Matrix obj_sim = similarity_matrix(primitives.objects);

    std::vector<std::vector<std::size_t>> objects_of_state(space.n_states());
    std::vector<std::vector<std::size_t>> states_of_object(space.n_objects());
    for (std::size_t s = 0; s < space.n_states(); ++s) objects_of_state[s] = state_support(space, s);
    for (std::size_t o = 0; o < space.n_objects(); ++o) states_of_object[o] = object_support(space, o);

    const std::size_t n = space.target_size();
    FeasibilityTable table;
    table.mixing = mixing;
    table.epoch_tag = epoch_tag;
    table.rho.resize(n);
    table.rho_state.resize(n);
    table.rho_obj.resize(n);
    table.state_defined.assign(n, 0);
    table.obj_defined.assign(n, 0);

    for (std::size_t c = 0; c < n; ++c) {
        const PairIdx pair = space.target_pair(c);
        if (space.is_seen(c)) {
            table.rho[c] = 1.0;
            table.rho_state[c] = 1.0;
            table.rho_obj[c] = 1.0;
            table.state_defined[c] = 1;
            table.obj_defined[c] = 1;
            continue;
        }
        BranchScore state_branch, obj_branch;
        const auto& state_candidates = states_of_object[pair.object];
        if (!state_candidates.empty()) {
            double best = -1.0;
            for (std::size_t candidate : state_candidates) {
                best = std::max(best, state_sim(pair.state, candidate));
            }
            state_branch = {best, true};
        }
        const auto& object_candidates = objects_of_state[pair.state];
        if (!object_candidates.empty()) {
            double best = -1.0;
            for (std::size_t candidate : object_candidates) {
                best = std::max(best, obj_sim(pair.object, candidate));
            }
            obj_branch = {best, true};
        }
        table.rho_state[c] = state_branch.value;
        table.rho_obj[c] = obj_branch.value;
        table.state_defined[c] = state_branch.defined ? 1 : 0;
        table.obj_defined[c] = obj_branch.defined ? 1 : 0;
        table.rho[c] = mix_branches(state_branch, obj_branch, mixing);
    }
    return table;
}

void MaskConfig::validate() const {
    if (!(tau >= -1.0 && tau <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "tau must lie in [-1, 1]");
    }
}

std::vector<char> hard_mask(const FeasibilityTable& table, const CompositionSpace& space,
                            MaskConfig config) {
    config.validate();
    if (table.size() != space.target_size()) {
        throw Error(ErrorKind::LengthMismatch, "feasibility table does not match the target space");
    }
    std::vector<char> mask(table.size(), 0);
    for (std::size_t c = 0; c < table.size(); ++c) {
        if (config.keep_seen && space.is_seen(c)) {
            mask[c] = 1;
        } else if (table.rho[c] > config.tau) {
            mask[c] = 1;
        }
    }
    return mask;
}

double tune_threshold(const FeasibilityTable& table, const ScoreMatrix& val_scores,
                      const CompositionSpace& space, ThresholdPolicy policy) {
    if (policy.quantile_count < 2) {
        throw Error(ErrorKind::InvalidConfig, "need at least two quantile candidates");
    }
    std::vector<double> unseen_rho;
    for (std::size_t c = 0; c < table.size(); ++c) {
        if (!space.is_seen(c)) unseen_rho.push_back(table.rho[c]);
    }

    std::vector<double> candidates{-1.0};
    if (!unseen_rho.empty()) {
        std::sort(unseen_rho.begin(), unseen_rho.end());
        const std::size_t n = unseen_rho.size();
        for (std::size_t q = 0; q < policy.quantile_count; ++q) {
            const double frac = static_cast<double>(q) / (policy.quantile_count - 1);
            const auto rank = static_cast<std::size_t>(std::llround(frac * (n - 1)));
            candidates.push_back(unseen_rho[rank]);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    double best_tau = candidates.front();
    double best_auc = -1.0;
    for (double tau : candidates) {
        std::vector<char> mask = hard_mask(table, space, MaskConfig{tau, true});
        const double auc = evaluate(val_scores, &mask).auc;
        if (auc > best_auc) {  // strict: ties keep the smaller tau
            best_auc = auc;
            best_tau = tau;
        }
    }
    return best_tau;
}

FeasibilityTable feasibility_table_from_report(const std::string& text,
                                               const CompositionSpace& space) {
    const std::size_t n = space.target_size();
    FeasibilityTable table;
    table.rho.assign(n, -1.0);
    table.rho_state.assign(n, -1.0);
    table.rho_obj.assign(n, -1.0);
    table.state_defined.assign(n, 0);
    table.obj_defined.assign(n, 0);

    std::vector<char> filled(n, 0);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 6) {
            throw Error(ErrorKind::ParseError,
                        "feasibility report line " + std::to_string(line_no) + ": expected 6 fields");
        }
        std::size_t idx;
        try {
            idx = space.target_index(fields[0], fields[1]);
        } catch (const Error& e) {
            throw Error(ErrorKind::ParseError,
                        "feasibility report line " + std::to_string(line_no) + ": " + e.what());
        }
        if (filled[idx]) {
            throw Error(ErrorKind::ParseError, "feasibility report line " + std::to_string(line_no) +
                                                   ": duplicate composition");
        }
        filled[idx] = 1;
        auto parse_value = [&](const std::string& field, double& value, std::vector<char>& defined_vec) {
            if (field == "undefined") return;
            try {
                value = std::stod(field);
            } catch (const std::exception&) {
                throw Error(ErrorKind::ParseError, "feasibility report line " +
                                                       std::to_string(line_no) + ": bad float '" +
                                                       field + "'");
            }
            defined_vec[idx] = 1;
        };
        try {
            table.rho[idx] = std::stod(fields[2]);
        } catch (const std::exception&) {
            throw Error(ErrorKind::ParseError,
                        "feasibility report line " + std::to_string(line_no) + ": bad rho");
        }
        parse_value(fields[3], table.rho_state[idx], table.state_defined);
        parse_value(fields[4], table.rho_obj[idx], table.obj_defined);
    }
    for (std::size_t c = 0; c < n; ++c) {
        if (!filled[c]) {
            const PairIdx pair = space.target_pair(c);
            throw Error(ErrorKind::ParseError,
                        "feasibility report is missing (" + space.vocab().states[pair.state] + ", " +
                            space.vocab().objects[pair.object] + ")");
        }
    }
    return table;
}

std::string feasibility_report(const FeasibilityTable& table, const CompositionSpace& space) {
    if (table.size() != space.target_size()) {
        throw Error(ErrorKind::LengthMismatch, "feasibility table does not match the target space");
    }
    std::vector<std::size_t> order(table.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return table.rho[a] > table.rho[b];
    });

    std::string out = "# state\tobject\trho\trho_state\trho_obj\tseen\n";
    for (std::size_t idx : order) {
        const PairIdx pair = space.target_pair(idx);
        out += space.vocab().states[pair.state];
        out += '\t';
        out += space.vocab().objects[pair.object];
        out += '\t';
        out += format_double(table.rho[idx]);
        out += '\t';
        out += table.state_defined[idx] ? format_double(table.rho_state[idx]) : "undefined";
        out += '\t';
        out += table.obj_defined[idx] ? format_double(table.rho_obj[idx]) : "undefined";
        out += '\t';
        out += space.is_seen(idx) ? '1' : '0';
        out += '\n';
    }
    return out;
}

}  // namespace czsl
