#include "czsl/io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace czsl {

namespace {

using nlohmann::json;

std::string normalize_name(std::string name) {
    std::replace(name.begin(), name.end(), '_', ' ');
    const auto begin = name.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = name.find_last_not_of(" \t\r\n");
    name = name.substr(begin, end - begin + 1);
    for (char& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return name;
}

std::vector<std::string> split_tokens(const std::string& name) {
    std::vector<std::string> tokens;
    std::istringstream in(name);
    std::string token;
    while (in >> token) tokens.push_back(token);
    return tokens;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

// --- little-endian binary primitives -------------------------------------

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class BinaryReader {
public:
    BinaryReader(std::string data, std::string source)
        : data_(std::move(data)), source_(std::move(source)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
        return v;
    }

    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    std::string bytes(std::size_t n) {
        need(n);
        std::string out = data_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t position() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }

    void expect_exhausted() {
        if (pos_ != data_.size()) {
            throw Error(ErrorKind::ParseError,
                        source_ + ": " + std::to_string(data_.size() - pos_) +
                            " trailing bytes at offset " + std::to_string(pos_));
        }
    }

private:
    void need(std::size_t n) {
        if (pos_ + n > data_.size()) {
            throw Error(ErrorKind::ParseError,
                        source_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                            std::to_string(n) + " more, have " + std::to_string(data_.size() - pos_) +
                            ")");
        }
    }

    unsigned char byte() { return static_cast<unsigned char>(data_[pos_++]); }

    std::string data_;
    std::string source_;
    std::size_t pos_ = 0;
};

BinaryReader read_binary_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return BinaryReader(buffer.str(), path.string());
}

constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kFeatureDtypeF32 = 1;
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kSectionF64 = 2;
constexpr std::uint32_t kSectionU8 = 3;

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

// --- manifest --------------------------------------------------------------

Manifest read_manifest(const std::filesystem::path& path) {
    json doc = read_json_file(path);
    Manifest manifest;
    try {
        const std::string mode = doc.at("mode").get<std::string>();
        if (mode == "open") {
            manifest.mode = SpaceMode::OpenWorld;
        } else if (mode == "closed") {
            manifest.mode = SpaceMode::ClosedWorld;
        } else {
            throw Error(ErrorKind::ParseError, path.string() + ": unknown mode '" + mode + "'");
        }
        for (const auto& name : doc.at("states")) {
            manifest.states.push_back(normalize_name(name.get<std::string>()));
        }
        for (const auto& name : doc.at("objects")) {
            manifest.objects.push_back(normalize_name(name.get<std::string>()));
        }
        auto read_pairs = [&](const json& list, std::vector<NamePair>& out) {
            for (const auto& item : list) {
                if (!item.is_array() || item.size() != 2) {
                    throw Error(ErrorKind::ParseError, path.string() + ": pair entries must be 2-arrays");
                }
                out.emplace_back(normalize_name(item[0].get<std::string>()),
                                 normalize_name(item[1].get<std::string>()));
            }
        };
        read_pairs(doc.at("seen"), manifest.seen);
        if (doc.contains("target")) read_pairs(doc.at("target"), manifest.target);
        if (doc.contains("samples")) {
            for (const auto& item : doc.at("samples")) {
                Manifest::Record record;
                record.feature_row = item.at("row").get<std::size_t>();
                record.state = normalize_name(item.at("state").get<std::string>());
                record.object = normalize_name(item.at("object").get<std::string>());
                record.split = item.at("split").get<std::string>();
                manifest.samples.push_back(std::move(record));
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    json doc;
    doc["mode"] = manifest.mode == SpaceMode::OpenWorld ? "open" : "closed";
    doc["states"] = manifest.states;
    doc["objects"] = manifest.objects;
    json seen = json::array();
    for (const auto& [s, o] : manifest.seen) seen.push_back({s, o});
    doc["seen"] = std::move(seen);
    if (!manifest.target.empty()) {
        json target = json::array();
        for (const auto& [s, o] : manifest.target) target.push_back({s, o});
        doc["target"] = std::move(target);
    }
    json samples = json::array();
    for (const auto& record : manifest.samples) {
        samples.push_back({{"row", record.feature_row},
                           {"state", record.state},
                           {"object", record.object},
                           {"split", record.split}});
    }
    doc["samples"] = std::move(samples);
    write_text_file(path, doc.dump(2) + "\n");
}

std::pair<CompositionSpace, Dataset> build_from_manifest(
    const Manifest& manifest, SpaceMode mode, std::optional<std::size_t> n_feature_rows) {
    Vocabulary vocab = make_vocabulary(manifest.states, manifest.objects);
    std::optional<std::vector<NamePair>> target;
    if (mode == SpaceMode::ClosedWorld) {
        if (manifest.target.empty()) {
            throw Error(ErrorKind::InvalidConfig, "manifest has no target list for a closed-world view");
        }
        target = manifest.target;
    }
    CompositionSpace space = build_composition_space(vocab, manifest.seen, target, mode);

    Dataset dataset;
    dataset.samples.reserve(manifest.samples.size());
    for (const auto& record : manifest.samples) {
        Sample sample;
        sample.feature_row = record.feature_row;
        sample.state = vocab.state_index(record.state);
        sample.object = vocab.object_index(record.object);
        sample.split = split_from_string(record.split);
        dataset.samples.push_back(sample);
    }

    const std::size_t row_bound =
        n_feature_rows.value_or(std::numeric_limits<std::size_t>::max());
    ValidationReport report = validate_dataset(dataset, space, row_bound);
    if (!report.ok()) {
        const Violation& first = report.violations.front();
        throw Error(ErrorKind::ValidationFailed,
                    first.kind + " at sample " + std::to_string(first.sample_index) + " (" +
                        first.detail + ")");
    }
    return {std::move(space), std::move(dataset)};
}

std::pair<CompositionSpace, Dataset> load_manifest(const std::filesystem::path& path,
                                                   std::optional<std::size_t> n_feature_rows) {
    Manifest manifest = read_manifest(path);
    return build_from_manifest(manifest, manifest.mode, n_feature_rows);
}

// --- feature store ----------------------------------------------------------

Matrix read_feature_store(const std::filesystem::path& path) {
    BinaryReader reader = read_binary_file(path);
    if (reader.bytes(4) != "CZSF") {
        throw Error(ErrorKind::ParseError, path.string() + ": bad magic, expected CZSF");
    }
    const std::uint32_t version = reader.u32();
    if (version != kFeatureVersion) {
        throw Error(ErrorKind::VersionMismatch,
                    path.string() + ": version " + std::to_string(version) + ", expected 1");
    }
    const std::uint64_t n_rows = reader.u64();
    const std::uint64_t dim = reader.u64();
    const std::uint32_t dtype = reader.u32();
    if (dtype != kFeatureDtypeF32) {
        throw Error(ErrorKind::ParseError, path.string() + ": unsupported dtype " + std::to_string(dtype));
    }
    Matrix features(n_rows, dim);
    for (std::uint64_t r = 0; r < n_rows; ++r) {
        for (std::uint64_t c = 0; c < dim; ++c) {
            const double v = static_cast<double>(reader.f32());
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::ParseError,
                            path.string() + ": non-finite value at row " + std::to_string(r) +
                                ", col " + std::to_string(c));
            }
            features(r, c) = v;
        }
    }
    reader.expect_exhausted();
    return features;
}

void write_feature_store(const Matrix& features, const std::filesystem::path& path) {
    std::string out;
    out.reserve(28 + features.size() * 4);
    out += "CZSF";
    put_u32(out, kFeatureVersion);
    put_u64(out, features.rows);
    put_u64(out, features.cols);
    put_u32(out, kFeatureDtypeF32);
    for (double v : features.data) put_f32(out, static_cast<float>(v));
    write_text_file(path, out);
}

// --- embedding text file ------------------------------------------------------

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());

    EmbeddingFile file;
    std::vector<Vec> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        std::string token;
        fields >> token;
        token = normalize_name(token);
        Vec values;
        double v;
        while (fields >> v) values.push_back(v);
        if (!fields.eof()) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": malformed float");
        }
        if (values.empty()) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": no vector components");
        }
        if (dim == 0) {
            dim = values.size();
        } else if (values.size() != dim) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": dimension " +
                            std::to_string(values.size()) + ", expected " + std::to_string(dim));
        }
        if (std::find(file.tokens.begin(), file.tokens.end(), token) != file.tokens.end()) {
            throw Error(ErrorKind::ParseError,
                        path.string() + ":" + std::to_string(line_no) + ": duplicate token '" +
                            token + "'");
        }
        file.tokens.push_back(token);
        rows.push_back(std::move(values));
    }
    file.vectors = Matrix(rows.size(), dim);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(rows[r].begin(), rows[r].end(), file.vectors.row(r).begin());
    }
    return file;
}

void write_embedding_file(const EmbeddingFile& file, const std::filesystem::path& path) {
    std::string out;
    for (std::size_t r = 0; r < file.tokens.size(); ++r) {
        out += file.tokens[r];
        for (double v : file.vectors.row(r)) {
            out += ' ';
            out += format_double(v);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

PrimitiveEmbeddingTable load_embeddings(const EmbeddingFile& file, const Vocabulary& vocab,
                                        MissingPolicy policy, std::uint64_t seed) {
    const std::size_t dim = file.vectors.cols;
    if (dim == 0) throw Error(ErrorKind::ParseError, "embedding file is empty");

    auto token_row = [&](const std::string& token) -> std::optional<std::size_t> {
        auto it = std::find(file.tokens.begin(), file.tokens.end(), token);
        if (it == file.tokens.end()) return std::nullopt;
        return static_cast<std::size_t>(it - file.tokens.begin());
    };

    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    auto embed_name = [&](const std::string& name, const char* what) {
        std::vector<std::string> tokens = split_tokens(name);
        if (tokens.empty()) throw Error(ErrorKind::ValidationFailed, std::string("empty ") + what);
        Vec sum(dim, 0.0);
        for (const std::string& token : tokens) {
            if (auto row = token_row(token)) {
                auto v = file.vectors.row(*row);
                for (std::size_t i = 0; i < dim; ++i) sum[i] += v[i];
            } else if (policy == MissingPolicy::Error) {
                throw Error(ErrorKind::MissingToken,
                            "token '" + token + "' for " + what + " '" + name + "'");
            } else {
                Rng rng(mix_seed(seed, fnv1a(token)));
                for (std::size_t i = 0; i < dim; ++i) sum[i] += rng.uniform(-scale, scale);
            }
        }
        for (double& v : sum) v /= static_cast<double>(tokens.size());
        return sum;
    };

    PrimitiveEmbeddingTable table;
    table.states = Matrix(vocab.n_states(), dim);
    table.objects = Matrix(vocab.n_objects(), dim);
    for (std::size_t s = 0; s < vocab.n_states(); ++s) {
        Vec row = embed_name(vocab.states[s], "state");
        std::copy(row.begin(), row.end(), table.states.row(s).begin());
    }
    for (std::size_t o = 0; o < vocab.n_objects(); ++o) {
        Vec row = embed_name(vocab.objects[o], "object");
        std::copy(row.begin(), row.end(), table.objects.row(o).begin());
    }
    table.validate();
    return table;
}

PrimitiveEmbeddingTable load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                        MissingPolicy policy, std::uint64_t seed) {
    return load_embeddings(read_embedding_file(path), vocab, policy, seed);
}

// --- synthetic benchmark -------------------------------------------------------

void SynthConfig::validate() const {
    if (n_states < 2 || n_objects < 2) {
        throw Error(ErrorKind::InvalidConfig, "need at least 2 states and 2 objects");
    }
    if (!(feasible_fraction > 0.0 && feasible_fraction <= 1.0) ||
        !(seen_fraction > 0.0 && seen_fraction <= 1.0)) {
        throw Error(ErrorKind::InvalidConfig, "fractions must lie in (0, 1]");
    }
    if (samples_per_seen < 1 || samples_per_unseen_test < 1) {
        throw Error(ErrorKind::InvalidConfig, "sample counts must be >= 1");
    }
    if (noise_sigma < 0.0) throw Error(ErrorKind::InvalidConfig, "noise_sigma must be >= 0");
    if (d_feature < 4) throw Error(ErrorKind::InvalidConfig, "d_feature must be >= 4");
}

namespace {

struct ClusterPlan {
    std::vector<std::size_t> state_group;
    std::vector<std::size_t> object_group;
    std::size_t n_groups = 1;
    std::size_t feasible_count = 0;
};

// Chooses contiguous group sizes (1-3 groups) whose same-group pair count is
// as close as possible to round(fraction * |S| * |O|); exact for the default
// 12x15 at 0.6. Every group keeps at least one state and one object so every
// primitive has a feasible partner.
ClusterPlan plan_clusters(std::size_t n_states, std::size_t n_objects, double fraction) {
    const std::size_t total = n_states * n_objects;
    const auto want = static_cast<long long>(std::llround(fraction * static_cast<double>(total)));

    struct Candidate {
        std::vector<std::size_t> s_sizes;
        std::vector<std::size_t> o_sizes;
        long long count = 0;
    };
    Candidate best{{n_states}, {n_objects}, static_cast<long long>(total)};
    auto better = [&](const Candidate& a, const Candidate& b) {
        const long long da = std::llabs(a.count - want);
        const long long db = std::llabs(b.count - want);
        if (da != db) return da < db;
        if (a.s_sizes.size() != b.s_sizes.size()) return a.s_sizes.size() < b.s_sizes.size();
        if (a.s_sizes != b.s_sizes) return a.s_sizes < b.s_sizes;
        return a.o_sizes < b.o_sizes;
    };

    for (std::size_t s1 = 1; s1 < n_states; ++s1) {
        for (std::size_t o1 = 1; o1 < n_objects; ++o1) {
            Candidate c{{s1, n_states - s1},
                        {o1, n_objects - o1},
                        static_cast<long long>(s1 * o1 + (n_states - s1) * (n_objects - o1))};
            if (better(c, best)) best = c;
        }
    }
    if (n_states >= 3 && n_objects >= 3 && n_states <= 40 && n_objects <= 40) {
        for (std::size_t s1 = 1; s1 + 2 <= n_states; ++s1) {
            for (std::size_t s2 = 1; s1 + s2 + 1 <= n_states; ++s2) {
                const std::size_t s3 = n_states - s1 - s2;
                for (std::size_t o1 = 1; o1 + 2 <= n_objects; ++o1) {
                    for (std::size_t o2 = 1; o1 + o2 + 1 <= n_objects; ++o2) {
                        const std::size_t o3 = n_objects - o1 - o2;
                        Candidate c{{s1, s2, s3},
                                    {o1, o2, o3},
                                    static_cast<long long>(s1 * o1 + s2 * o2 + s3 * o3)};
                        if (better(c, best)) best = c;
                    }
                }
            }
        }
    }

    ClusterPlan plan;
    plan.n_groups = best.s_sizes.size();
    plan.feasible_count = static_cast<std::size_t>(best.count);
    plan.state_group.resize(n_states);
    plan.object_group.resize(n_objects);
    std::size_t pos = 0;
    for (std::size_t g = 0; g < best.s_sizes.size(); ++g) {
        for (std::size_t i = 0; i < best.s_sizes[g]; ++i) plan.state_group[pos++] = g;
    }
    pos = 0;
    for (std::size_t g = 0; g < best.o_sizes.size(); ++g) {
        for (std::size_t i = 0; i < best.o_sizes[g]; ++i) plan.object_group[pos++] = g;
    }
    return plan;
}

std::string padded_name(char prefix, std::size_t index, std::size_t count) {
    std::size_t width = 1;
    for (std::size_t v = count > 0 ? count - 1 : 0; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    std::string out(1, prefix);
    out.append(width > digits.size() ? width - digits.size() : 0, '0');
    out += digits;
    return out;
}

Matrix orthonormal_rows(std::size_t n, std::size_t dim, Rng& rng) {
    Matrix m(n, dim);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < dim; ++c) m(r, c) = rng.normal();
        // Gram-Schmidt against earlier rows.
        for (std::size_t prev = 0; prev < r; ++prev) {
            const double projection = dot(m.row(r), m.row(prev));
            for (std::size_t c = 0; c < dim; ++c) m(r, c) -= projection * m(prev, c);
        }
        const double norm = std::sqrt(squared_norm(m.row(r)));
        if (norm <= 1e-9) throw Error(ErrorKind::InfeasibleConfig, "degenerate latent directions");
        for (std::size_t c = 0; c < dim; ++c) m(r, c) /= norm;
    }
    return m;
}

constexpr double kClusterJitter = 0.25;
// States share a dominant common axis and carry only a weak cluster
// component, the way visual states (wet, old, small) apply across object
// categories; objects are tightly clustered. Feasibility separation then
// rides on the object branch while state-half similarity lets implausible
// pairs compete for every image, which is the open-world failure mode the
// margins are meant to fix.
constexpr double kStateAxisWeight = 1.0;
constexpr double kStateClusterWeight = 0.5;
// Feature noise is sigma-proportional with total magnitude 2 sigma; the
// embedding file gets per-coordinate sigma-proportional noise, which
// misaligns the word-embedding initialization from the visual prototypes
// the way pretrained text embeddings are misaligned from backbone features.
constexpr double kFeatureNoiseScale = 2.0;
constexpr double kEmbeddingNoiseFactor = 0.5;
// Each composition adds a fixed pair-specific component to its samples, so
// image clusters are not purely additive in the primitives. Dataset classes
// stay separable, but no linear composition of primitive embeddings can
// predict an unseen pair's cluster exactly, which is what lets implausible
// compositions intrude on the open-world ranking.
constexpr double kInteractionScale = 0.3;

}  // namespace

SynthResult generate_synthetic(const SynthConfig& config) {
    config.validate();
    Rng rng(config.seed);

    const std::size_t n_states = config.n_states;
    const std::size_t n_objects = config.n_objects;
    const std::size_t dim = config.d_feature;
    ClusterPlan plan = plan_clusters(n_states, n_objects, config.feasible_fraction);

    // Row 0 is the shared state axis, rows 1..G the cluster directions.
    Matrix axes = orthonormal_rows(plan.n_groups + 1, dim, rng);
    const double proto_jitter = kClusterJitter / std::sqrt(static_cast<double>(dim));

    Matrix state_proto(n_states, dim);
    for (std::size_t s = 0; s < n_states; ++s) {
        const std::size_t g = plan.state_group[s];
        for (std::size_t c = 0; c < dim; ++c) {
            state_proto(s, c) = kStateAxisWeight * axes(0, c) +
                                kStateClusterWeight * axes(1 + g, c) + proto_jitter * rng.normal();
        }
    }
    Matrix object_proto(n_objects, dim);
    for (std::size_t o = 0; o < n_objects; ++o) {
        const std::size_t g = plan.object_group[o];
        for (std::size_t c = 0; c < dim; ++c) {
            object_proto(o, c) = axes(1 + g, c) + proto_jitter * rng.normal();
        }
    }

    // Rank every pair by prototype affinity; the top block must coincide
    // with the same-group pairs for the planted truth to be well defined.
    struct RankedPair {
        double affinity;
        std::size_t index;  // open-world target order
    };
    std::vector<RankedPair> ranked;
    ranked.reserve(n_states * n_objects);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t o = 0; o < n_objects; ++o) {
            ranked.push_back({cosine(state_proto.row(s), object_proto.row(o)), s * n_objects + o});
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedPair& a, const RankedPair& b) {
        if (a.affinity != b.affinity) return a.affinity > b.affinity;
        return a.index < b.index;
    });

    std::vector<char> feasible(n_states * n_objects, 0);
    for (std::size_t i = 0; i < plan.feasible_count; ++i) feasible[ranked[i].index] = 1;
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        const std::size_t s = ranked[i].index / n_objects;
        const std::size_t o = ranked[i].index % n_objects;
        const bool same_group = plan.state_group[s] == plan.object_group[o];
        if (same_group != (i < plan.feasible_count)) {
            throw Error(ErrorKind::InfeasibleConfig,
                        "affinity ranking does not separate the planted clusters");
        }
    }

    std::vector<std::size_t> feasible_indices;
    for (std::size_t i = 0; i < feasible.size(); ++i) {
        if (feasible[i]) feasible_indices.push_back(i);
    }

    const auto n_seen = static_cast<std::size_t>(
        std::llround(config.seen_fraction * static_cast<double>(plan.feasible_count)));
    if (n_seen < n_states || n_seen < n_objects || n_seen > plan.feasible_count) {
        throw Error(ErrorKind::InfeasibleConfig,
                    "seen_fraction " + format_double(config.seen_fraction) + " cannot cover " +
                        std::to_string(n_states) + " states and " + std::to_string(n_objects) +
                        " objects with " + std::to_string(plan.feasible_count) + " feasible pairs");
    }

    std::vector<std::size_t> seen_indices;
    bool covered = false;
    for (int attempt = 0; attempt < 200 && !covered; ++attempt) {
        std::vector<std::size_t> pool = feasible_indices;
        rng.shuffle(pool);
        pool.resize(n_seen);
        std::sort(pool.begin(), pool.end());
        std::vector<char> state_hit(n_states, 0), object_hit(n_objects, 0);
        for (std::size_t idx : pool) {
            state_hit[idx / n_objects] = 1;
            object_hit[idx % n_objects] = 1;
        }
        covered = std::find(state_hit.begin(), state_hit.end(), char(0)) == state_hit.end() &&
                  std::find(object_hit.begin(), object_hit.end(), char(0)) == object_hit.end();
        if (covered) seen_indices = std::move(pool);
    }
    if (!covered) {
        throw Error(ErrorKind::InfeasibleConfig, "could not cover every primitive with seen pairs");
    }

    // Unseen-but-feasible pairs split three ways, mirroring the real
    // benchmarks: a val-unseen set, a disjoint test-unseen set, and pairs
    // that appear in no split but still populate the open search space.
    std::vector<std::size_t> unseen_feasible;
    for (std::size_t idx : feasible_indices) {
        if (std::find(seen_indices.begin(), seen_indices.end(), idx) == seen_indices.end()) {
            unseen_feasible.push_back(idx);
        }
    }
    rng.shuffle(unseen_feasible);
    const std::size_t third = std::max<std::size_t>(1, unseen_feasible.size() / 3);
    std::vector<std::size_t> val_unseen, test_unseen;
    for (std::size_t i = 0; i < unseen_feasible.size(); ++i) {
        if (i < third) {
            val_unseen.push_back(unseen_feasible[i]);
        } else if (i < 2 * third) {
            test_unseen.push_back(unseen_feasible[i]);
        }
    }
    if (test_unseen.empty()) test_unseen = val_unseen;
    std::sort(val_unseen.begin(), val_unseen.end());
    std::sort(test_unseen.begin(), test_unseen.end());

    SynthResult result;
    result.true_feasible = feasible;
    result.n_feasible = plan.feasible_count;
    result.manifest.mode = SpaceMode::OpenWorld;
    for (std::size_t s = 0; s < n_states; ++s) {
        result.manifest.states.push_back(padded_name('s', s, n_states));
    }
    for (std::size_t o = 0; o < n_objects; ++o) {
        result.manifest.objects.push_back(padded_name('o', o, n_objects));
    }
    auto pair_names = [&](std::size_t idx) {
        return NamePair{result.manifest.states[idx / n_objects],
                        result.manifest.objects[idx % n_objects]};
    };
    for (std::size_t idx : seen_indices) result.manifest.seen.push_back(pair_names(idx));

    // Closed-world view: the compositions that occur in some split.
    std::vector<std::size_t> closed_target = seen_indices;
    closed_target.insert(closed_target.end(), val_unseen.begin(), val_unseen.end());
    closed_target.insert(closed_target.end(), test_unseen.begin(), test_unseen.end());
    std::sort(closed_target.begin(), closed_target.end());
    closed_target.erase(std::unique(closed_target.begin(), closed_target.end()), closed_target.end());
    for (std::size_t idx : closed_target) result.manifest.target.push_back(pair_names(idx));

    // Features: state prototype + object prototype + pair interaction +
    // noise, emitted train block first, then val, then test.
    const double unit = 1.0 / std::sqrt(static_cast<double>(dim));
    auto interaction = [&](std::size_t pair_idx) {
        Rng pair_rng(mix_seed(mix_seed(config.seed, 0x70616972), pair_idx));
        Vec v(dim);
        for (std::size_t c = 0; c < dim; ++c) v[c] = kInteractionScale * unit * pair_rng.normal();
        return v;
    };
    std::vector<Vec> feature_rows;
    auto emit_sample = [&](std::size_t pair_idx, const char* split) {
        const std::size_t s = pair_idx / n_objects;
        const std::size_t o = pair_idx % n_objects;
        const Vec pair_part = interaction(pair_idx);
        Vec x(dim);
        const double noise = kFeatureNoiseScale * config.noise_sigma * unit;
        for (std::size_t c = 0; c < dim; ++c) {
            x[c] = state_proto(s, c) + object_proto(o, c) + pair_part[c] + noise * rng.normal();
        }
        Manifest::Record record;
        record.feature_row = feature_rows.size();
        record.state = result.manifest.states[s];
        record.object = result.manifest.objects[o];
        record.split = split;
        result.manifest.samples.push_back(std::move(record));
        feature_rows.push_back(std::move(x));
    };

    for (std::size_t idx : seen_indices) {
        for (std::size_t i = 0; i < config.samples_per_seen; ++i) emit_sample(idx, "train");
    }
    for (std::size_t idx : seen_indices) {
        for (std::size_t i = 0; i < config.samples_per_unseen_test; ++i) emit_sample(idx, "val");
    }
    for (std::size_t idx : val_unseen) {
        for (std::size_t i = 0; i < config.samples_per_unseen_test; ++i) emit_sample(idx, "val");
    }
    for (std::size_t idx : seen_indices) {
        for (std::size_t i = 0; i < config.samples_per_unseen_test; ++i) emit_sample(idx, "test");
    }
    for (std::size_t idx : test_unseen) {
        for (std::size_t i = 0; i < config.samples_per_unseen_test; ++i) emit_sample(idx, "test");
    }

    result.features = Matrix(feature_rows.size(), dim);
    for (std::size_t r = 0; r < feature_rows.size(); ++r) {
        std::copy(feature_rows[r].begin(), feature_rows[r].end(), result.features.row(r).begin());
    }

    // Embedding file: misaligned prototype copies, states then objects.
    const double embed_sigma = kEmbeddingNoiseFactor * config.noise_sigma;
    result.embeddings.vectors = Matrix(n_states + n_objects, dim);
    for (std::size_t s = 0; s < n_states; ++s) {
        result.embeddings.tokens.push_back(result.manifest.states[s]);
        for (std::size_t c = 0; c < dim; ++c) {
            result.embeddings.vectors(s, c) = state_proto(s, c) + embed_sigma * rng.normal();
        }
    }
    for (std::size_t o = 0; o < n_objects; ++o) {
        result.embeddings.tokens.push_back(result.manifest.objects[o]);
        for (std::size_t c = 0; c < dim; ++c) {
            result.embeddings.vectors(n_states + o, c) =
                object_proto(o, c) + embed_sigma * rng.normal();
        }
    }

    return result;
}

void write_synthetic(const SynthResult& result, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_manifest(result.manifest, dir / "manifest.json");
    write_feature_store(result.features, dir / "features.czsf");
    write_embedding_file(result.embeddings, dir / "embeddings.txt");

    json truth;
    truth["n_feasible"] = result.n_feasible;
    json feasible = json::array();
    const std::size_t n_objects = result.manifest.objects.size();
    for (std::size_t idx = 0; idx < result.true_feasible.size(); ++idx) {
        if (result.true_feasible[idx]) {
            feasible.push_back({result.manifest.states[idx / n_objects],
                                result.manifest.objects[idx % n_objects]});
        }
    }
    truth["feasible"] = std::move(feasible);
    write_text_file(dir / "truth.json", truth.dump(2) + "\n");
}

std::vector<char> read_truth_mask(const std::filesystem::path& path, const CompositionSpace& space) {
    json doc = read_json_file(path);
    std::vector<char> mask(space.target_size(), 0);
    try {
        for (const auto& item : doc.at("feasible")) {
            const std::size_t idx = space.target_index(item.at(0).get<std::string>(),
                                                       item.at(1).get<std::string>());
            mask[idx] = 1;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
    return mask;
}

// --- checkpoint -----------------------------------------------------------------

namespace {

struct Section {
    std::uint32_t dtype = 0;
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::string payload;
};

void append_f64_section(std::string& out, const std::string& name, std::uint64_t rows,
                        std::uint64_t cols, std::span<const double> values) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, kSectionF64);
    put_u64(out, rows);
    put_u64(out, cols);
    put_u64(out, values.size() * 8);
    for (double v : values) put_f64(out, v);
}

void append_u8_section(std::string& out, const std::string& name, const std::string& payload) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, kSectionU8);
    put_u64(out, 1);
    put_u64(out, payload.size());
    put_u64(out, payload.size());
    out += payload;
}

}  // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    ModelParams params = checkpoint.params;
    AdamMoments moments = checkpoint.moments;
    auto param_views = tensor_refs(params);
    auto m_views = tensor_refs(moments.m);
    auto v_views = tensor_refs(moments.v);

    auto shape_of = [&](std::string_view name) -> std::pair<std::uint64_t, std::uint64_t> {
        if (name.ends_with("visual.w1")) return {params.visual.w1.rows, params.visual.w1.cols};
        if (name.ends_with("visual.w2")) return {params.visual.w2.rows, params.visual.w2.cols};
        if (name.ends_with("primitives.states")) {
            return {params.primitives.states.rows, params.primitives.states.cols};
        }
        if (name.ends_with("primitives.objects")) {
            return {params.primitives.objects.rows, params.primitives.objects.cols};
        }
        if (name.ends_with("projector.w")) return {params.projector.w.rows, params.projector.w.cols};
        return {1, 0};  // vectors: cols filled from the span below
    };

    std::string body;
    std::uint64_t n_sections = 0;
    auto add_tensor = [&](const std::string& name, std::span<const double> values) {
        auto [rows, cols] = shape_of(name);
        if (cols == 0) cols = values.size();
        append_f64_section(body, name, rows, cols, values);
        ++n_sections;
    };

    for (const auto& ref : param_views) add_tensor(ref.name, ref.values);
    for (const auto& ref : m_views) add_tensor(std::string("adam.m.") + ref.name, ref.values);
    for (const auto& ref : v_views) add_tensor(std::string("adam.v.") + ref.name, ref.values);

    const double scalars[3] = {params.temperature, params.visual.dropout_rate,
                               static_cast<double>(checkpoint.epoch)};
    append_f64_section(body, "temperature", 1, 1, {scalars, 1});
    append_f64_section(body, "dropout_rate", 1, 1, {scalars + 1, 1});
    append_f64_section(body, "epoch", 1, 1, {scalars + 2, 1});
    const double step = static_cast<double>(checkpoint.moments.step);
    append_f64_section(body, "adam.step", 1, 1, {&step, 1});
    append_u8_section(body, "rng", checkpoint.rng_state);
    n_sections += 5;

    std::string out;
    out += "CZSK";
    put_u32(out, kCheckpointVersion);
    put_u64(out, n_sections);
    out += body;
    write_text_file(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    BinaryReader reader = read_binary_file(path);
    if (reader.bytes(4) != "CZSK") {
        throw Error(ErrorKind::ParseError, path.string() + ": bad magic, expected CZSK");
    }
    const std::uint32_t version = reader.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::VersionMismatch,
                    path.string() + ": version " + std::to_string(version) + ", expected 1");
    }
    const std::uint64_t n_sections = reader.u64();

    std::unordered_map<std::string, Section> sections;
    for (std::uint64_t i = 0; i < n_sections; ++i) {
        const std::uint32_t name_len = reader.u32();
        const std::string name = reader.bytes(name_len);
        Section section;
        section.dtype = reader.u32();
        section.rows = reader.u64();
        section.cols = reader.u64();
        const std::uint64_t byte_len = reader.u64();
        section.payload = reader.bytes(byte_len);
        sections.emplace(name, std::move(section));
    }
    reader.expect_exhausted();

    auto f64_section = [&](const std::string& name) -> const Section& {
        auto it = sections.find(name);
        if (it == sections.end()) {
            throw Error(ErrorKind::ParseError, path.string() + ": missing section '" + name + "'");
        }
        if (it->second.dtype != kSectionF64) {
            throw Error(ErrorKind::ParseError, path.string() + ": section '" + name + "' is not f64");
        }
        return it->second;
    };
    auto read_matrix = [&](const std::string& name) {
        const Section& section = f64_section(name);
        if (section.payload.size() != section.rows * section.cols * 8) {
            throw Error(ErrorKind::ParseError, path.string() + ": section '" + name + "' size mismatch");
        }
        Matrix m(section.rows, section.cols);
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) {
                bits |= static_cast<std::uint64_t>(
                            static_cast<unsigned char>(section.payload[i * 8 + b]))
                        << (8 * b);
            }
            double v;
            std::memcpy(&v, &bits, 8);
            m.data[i] = v;
        }
        return m;
    };
    auto read_vec = [&](const std::string& name) { return read_matrix(name).data; };
    auto read_scalar = [&](const std::string& name) {
        Vec v = read_vec(name);
        if (v.size() != 1) {
            throw Error(ErrorKind::ParseError, path.string() + ": section '" + name + "' is not scalar");
        }
        return v[0];
    };

    Checkpoint checkpoint;
    checkpoint.params.visual.w1 = read_matrix("visual.w1");
    checkpoint.params.visual.b1 = read_vec("visual.b1");
    checkpoint.params.visual.ln_gain = read_vec("visual.ln_gain");
    checkpoint.params.visual.ln_shift = read_vec("visual.ln_shift");
    checkpoint.params.visual.w2 = read_matrix("visual.w2");
    checkpoint.params.visual.b2 = read_vec("visual.b2");
    checkpoint.params.primitives.states = read_matrix("primitives.states");
    checkpoint.params.primitives.objects = read_matrix("primitives.objects");
    checkpoint.params.projector.w = read_matrix("projector.w");
    checkpoint.params.temperature = read_scalar("temperature");
    checkpoint.params.visual.dropout_rate = read_scalar("dropout_rate");
    checkpoint.epoch = static_cast<std::uint64_t>(read_scalar("epoch"));

    auto read_gradients = [&](const std::string& prefix) {
        Gradients g;
        g.w1 = read_matrix(prefix + "visual.w1");
        g.b1 = read_vec(prefix + "visual.b1");
        g.ln_gain = read_vec(prefix + "visual.ln_gain");
        g.ln_shift = read_vec(prefix + "visual.ln_shift");
        g.w2 = read_matrix(prefix + "visual.w2");
        g.b2 = read_vec(prefix + "visual.b2");
        g.states = read_matrix(prefix + "primitives.states");
        g.objects = read_matrix(prefix + "primitives.objects");
        g.proj_w = read_matrix(prefix + "projector.w");
        return g;
    };
    checkpoint.moments.m = read_gradients("adam.m.");
    checkpoint.moments.v = read_gradients("adam.v.");
    checkpoint.moments.step = static_cast<std::uint64_t>(read_scalar("adam.step"));

    auto rng_it = sections.find("rng");
    if (rng_it == sections.end() || rng_it->second.dtype != kSectionU8) {
        throw Error(ErrorKind::ParseError, path.string() + ": missing rng section");
    }
    checkpoint.rng_state = rng_it->second.payload;

    checkpoint.params.validate();
    return checkpoint;
}

}  // namespace czsl
