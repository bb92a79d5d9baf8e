#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "czsl/common.hpp"
#include "czsl/core.hpp"
#include "czsl/embed.hpp"
#include "czsl/train.hpp"

namespace czsl {

// In-memory form of the manifest document. Primitive names are normalized
// on load (trimmed, lowercased, underscores to spaces); nowhere else in the
// library touches name spelling.
struct Manifest {
    SpaceMode mode = SpaceMode::OpenWorld;
    std::vector<std::string> states;
    std::vector<std::string> objects;
    std::vector<NamePair> seen;
    std::vector<NamePair> target;  // optional; required to build a closed view

    struct Record {
        std::size_t feature_row = 0;
        std::string state;
        std::string object;
        std::string split;
    };
    std::vector<Record> samples;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Builds the composition space for the requested mode plus the dataset.
// Label validity is checked here; feature-row bounds are checked when the
// caller knows the feature store size (pass n_feature_rows).
std::pair<CompositionSpace, Dataset> build_from_manifest(
    const Manifest& manifest, SpaceMode mode,
    std::optional<std::size_t> n_feature_rows = std::nullopt);

std::pair<CompositionSpace, Dataset> load_manifest(
    const std::filesystem::path& path, std::optional<std::size_t> n_feature_rows = std::nullopt);

// Binary matrix container: magic "CZSF", u32 version (=1), u64 n_rows,
// u64 dim, u32 dtype (1 = float32 little-endian), then the row-major
// payload. Used for backbone features and for external score matrices.
Matrix read_feature_store(const std::filesystem::path& path);
void write_feature_store(const Matrix& features, const std::filesystem::path& path);

// One record per line: token then D decimal floats. Tokens are lowercased;
// D must be constant and tokens unique.
struct EmbeddingFile {
    std::vector<std::string> tokens;
    Matrix vectors;
};

EmbeddingFile read_embedding_file(const std::filesystem::path& path);
void write_embedding_file(const EmbeddingFile& file, const std::filesystem::path& path);

enum class MissingPolicy { Error, RandomInit };

// Rows per vocabulary primitive. Multi-token names (after normalization,
// tokens split on spaces) embed as the mean of their token vectors; missing
// tokens follow the policy (RandomInit draws uniform with scale 1/sqrt(D),
// seeded per token from the run seed).
PrimitiveEmbeddingTable load_embeddings(const EmbeddingFile& file, const Vocabulary& vocab,
                                        MissingPolicy policy, std::uint64_t seed = 0);
PrimitiveEmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                        MissingPolicy policy, std::uint64_t seed = 0);

struct SynthConfig {
    std::size_t n_states = 12;
    std::size_t n_objects = 15;
    double feasible_fraction = 0.6;
    double seen_fraction = 0.4;
    std::size_t samples_per_seen = 20;
    std::size_t samples_per_unseen_test = 5;
    double noise_sigma = 0.3;
    std::size_t d_feature = 24;
    std::uint64_t seed = 0;

    void validate() const;
};

// Desk-scale benchmark with planted structure. States and objects are
// grouped around orthonormal latent directions; the truly feasible set is
// the top block of pairs by prototype affinity (cluster sizes are chosen so
// the block size is as close to feasible_fraction * |C| as the structure
// allows). Seen pairs are a covering random subset of the feasible set;
// features are state prototype + object prototype + noise, and the
// embedding file holds noisy prototype copies.
struct SynthResult {
    Manifest manifest;
    Matrix features;
    EmbeddingFile embeddings;
    std::vector<char> true_feasible;  // open-world target order
    std::size_t n_feasible = 0;
};

SynthResult generate_synthetic(const SynthConfig& config);

// Writes manifest.json, features.czsf, embeddings.txt, and truth.json.
void write_synthetic(const SynthResult& result, const std::filesystem::path& dir);

// Ground-truth feasible set from truth.json, in open-world target order.
std::vector<char> read_truth_mask(const std::filesystem::path& path, const CompositionSpace& space);

// Sectioned binary container (magic "CZSK", u32 version = 1): every
// trainable tensor, the Adam moments, epoch, and the rng stream.
struct Checkpoint {
    ModelParams params;
    AdamMoments moments;
    std::uint64_t epoch = 0;
    std::string rng_state;
};

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace czsl
