#include "czsl/common.hpp"

namespace czsl {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::UnknownPrimitive: return "UnknownPrimitive";
        case ErrorKind::SeenNotInTarget: return "SeenNotInTarget";
        case ErrorKind::UncoveredPrimitive: return "UncoveredPrimitive";
        case ErrorKind::NotInTarget: return "NotInTarget";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NonFiniteInput: return "NonFiniteInput";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::ZeroVector: return "ZeroVector";
        case ErrorKind::EmptyMask: return "EmptyMask";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DegenerateSpace: return "DegenerateSpace";
        case ErrorKind::MissingToken: return "MissingToken";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::InfeasibleConfig: return "InfeasibleConfig";
        case ErrorKind::ValidationFailed: return "ValidationFailed";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
    }
    return "UnknownError";
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double squared_norm(std::span<const double> a) {
    return dot(a, a);
}

bool all_finite(std::span<const double> a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller on two fresh uniforms; u clamped away from 0.
    double u = uniform();
    if (u <= 0.0) u = 0x1.0p-53;
    double v = uniform();
    double radius = std::sqrt(-2.0 * std::log(u));
    double angle = 2.0 * M_PI * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::size_t Rng::uniform_index(std::size_t n) {
    if (n == 0) throw Error(ErrorKind::IndexOutOfRange, "uniform_index(0)");
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
}

std::string Rng::serialize() const {
    std::ostringstream out;
    out << engine_;
    out << ' ' << (has_spare_ ? 1 : 0);
    if (has_spare_) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", spare_);
        out << ' ' << buf;
    }
    return out.str();
}

Rng Rng::deserialize(const std::string& text) {
    Rng rng(0);
    std::istringstream in(text);
    in >> rng.engine_;
    int spare_flag = 0;
    in >> spare_flag;
    if (in.fail()) throw Error(ErrorKind::ParseError, "malformed rng state");
    rng.has_spare_ = spare_flag != 0;
    if (rng.has_spare_) {
        in >> rng.spare_;
        if (in.fail()) throw Error(ErrorKind::ParseError, "malformed rng spare value");
    }
    return rng;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t x = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    return buf;
}

}  // namespace czsl
