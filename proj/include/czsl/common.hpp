#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace czsl {

enum class ErrorKind {
    UnknownPrimitive,
    SeenNotInTarget,
    UncoveredPrimitive,
    NotInTarget,
    DimensionMismatch,
    NonFiniteInput,
    IndexOutOfRange,
    ZeroVector,
    EmptyMask,
    LengthMismatch,
    ShapeMismatch,
    DegenerateSpace,
    MissingToken,
    ParseError,
    InfeasibleConfig,
    ValidationFailed,
    VersionMismatch,
    IoError,
    InvalidConfig,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Row-major dense matrix of doubles. All model tensors and score matrices
// use this one representation.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool same_shape(const Matrix& other) const { return rows == other.rows && cols == other.cols; }
    std::size_t size() const { return data.size(); }
};

using Vec = std::vector<double>;

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
bool all_finite(std::span<const double> a);

// Deterministic random source. Only the raw 64-bit output of std::mt19937_64
// is consumed (the distribution adapters in <random> are implementation
// defined), so streams are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

    // Uniform in [0, n). n must be > 0.
    std::size_t uniform_index(std::size_t n);

    // Fisher-Yates with pinned draw order.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        if (values.size() < 2) return;
        for (std::size_t i = values.size() - 1; i > 0; --i) {
            std::size_t j = uniform_index(i + 1);
            std::swap(values[i], values[j]);
        }
    }

    std::string serialize() const;
    static Rng deserialize(const std::string& text);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Mixes two seeds into one (splitmix64 finalizer); used to derive per-epoch
// shuffle streams from the run seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Fixed-width float formatting for report files ("%.9g"); output bytes must
// not depend on locale or stream state.
std::string format_double(double value);

}  // namespace czsl
