#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resmin/errors.hpp"

namespace resmin {

using Vector = Eigen::VectorXd;

/// Threshold below which consecutive skeleton values count as duplicates
/// (relative to the larger magnitude). Duplicates are warned about, not
/// rejected, because external solvers may emit near-identical nodes at
/// event restarts.
inline constexpr double kDuplicateNodeTol = 1e-14;

namespace detail {

/// Formats a double with 17 significant digits (round-trip exact).
/// Non-finite values become null so emitted JSON stays parseable.
inline std::string fmt17(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

/// One interval [t_{i-1}, t_i] between consecutive skeleton nodes, with the
/// affine rescaling t = t_start + s*duration, s in [0,1].
struct Stage {
    int index = 0;        // 1-based, matching node numbering
    double t_start = 0.0;
    double t_end = 0.0;
    Vector z_start;
    Vector z_end;

    double duration() const { return t_end - t_start; }
    double to_time(double s) const { return t_start + s * duration(); }
    double to_s(double t) const { return (t - t_start) / duration(); }
};

/// Ordered solver output nodes (t_i, z_i). Immutable after construction and
/// safe to share across threads.
class Skeleton {
public:
    Skeleton() = default;

    /// Validates and adopts the given nodes. Throws ValidationError naming
    /// the offending index on any invariant violation; near-duplicate
    /// consecutive values are recorded as warnings instead.
    Skeleton(int dim, std::vector<double> times, std::vector<Vector> values)
        : dim_(dim), times_(std::move(times)), values_(std::move(values)) {
        validate();
    }

    int dim() const { return dim_; }
    const std::vector<double>& times() const { return times_; }
    const std::vector<Vector>& values() const { return values_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    std::size_t node_count() const { return times_.size(); }
    /// Number of stages N (= node_count() - 1).
    int n_stages() const { return static_cast<int>(times_.size()) - 1; }

    double t_front() const { return times_.front(); }
    double t_back() const { return times_.back(); }

    /// Stage i, 1-based (covering [t_{i-1}, t_i]).
    Stage stage(int i) const {
        if (i < 1 || i > n_stages())
            throw OutOfRange("stage index " + std::to_string(i) + " outside 1.." +
                             std::to_string(n_stages()));
        return Stage{i, times_[i - 1], times_[i], values_[i - 1], values_[i]};
    }

    bool operator==(const Skeleton& o) const {
        if (dim_ != o.dim_ || times_ != o.times_) return false;
        for (std::size_t i = 0; i < values_.size(); ++i)
            if (values_[i] != o.values_[i]) return false;
        return true;
    }

private:
    void validate() {
        if (dim_ < 1) throw ValidationError("dimension must be positive, got " + std::to_string(dim_));
        if (times_.size() != values_.size())
            throw ValidationError("times and values have different lengths");
        if (times_.size() < 2)
            throw ValidationError("a skeleton needs at least two nodes (N >= 1)");
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (!std::isfinite(times_[i]))
                throw ValidationError("non-finite time at index " + std::to_string(i));
            if (i > 0 && !(times_[i] > times_[i - 1]))
                throw ValidationError("times not strictly increasing at index " + std::to_string(i));
            if (values_[i].size() != dim_)
                throw ValidationError("value at index " + std::to_string(i) + " has length " +
                                      std::to_string(values_[i].size()) + ", expected " +
                                      std::to_string(dim_));
            if (!values_[i].allFinite())
                throw ValidationError("non-finite value at index " + std::to_string(i));
        }
        for (std::size_t i = 1; i < values_.size(); ++i) {
            const double diff = (values_[i] - values_[i - 1]).lpNorm<Eigen::Infinity>();
            const double scale = std::max(values_[i].lpNorm<Eigen::Infinity>(),
                                          values_[i - 1].lpNorm<Eigen::Infinity>());
            if (diff <= kDuplicateNodeTol * std::max(scale, 1e-300))
                warnings_.push_back("nodes " + std::to_string(i - 1) + " and " + std::to_string(i) +
                                    " carry (near-)identical values");
        }
    }

    int dim_ = 0;
    std::vector<double> times_;
    std::vector<Vector> values_;
    std::vector<std::string> warnings_;
};

/// Union of the input nodes with factor-1 equally spaced interior points per
/// step. factor == 1 returns the input unchanged.
inline std::vector<double> refine_mesh(const std::vector<double>& times, unsigned factor) {
    if (factor == 0) throw InvalidFactor("refine factor must be >= 1");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i] > times[i - 1]))
            throw ValidationError("times not strictly increasing at index " + std::to_string(i));
    if (times.empty()) return {};
    std::vector<double> out;
    out.reserve(factor * (times.size() - 1) + 1);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        out.push_back(times[i]);
        const double h = (times[i + 1] - times[i]) / factor;
        for (unsigned j = 1; j < factor; ++j) out.push_back(times[i] + j * h);
    }
    out.push_back(times.back());
    return out;
}

enum class SkeletonFormat { json, csv };

inline SkeletonFormat format_from_path(const std::string& path) {
    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    if (ext == "csv") return SkeletonFormat::csv;
    return SkeletonFormat::json;
}

namespace detail {

inline Skeleton skeleton_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("n") || !j.contains("t") || !j.contains("z"))
        throw ParseError("skeleton JSON must be an object with fields n, t, z");
    int n = 0;
    std::vector<double> t;
    std::vector<Vector> z;
    try {
        n = j.at("n").get<int>();
        t = j.at("t").get<std::vector<double>>();
        for (const auto& row : j.at("z")) {
            const auto v = row.get<std::vector<double>>();
            z.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("skeleton JSON field error: ") + e.what());
    }
    return Skeleton(n, std::move(t), std::move(z));
}

inline Skeleton skeleton_from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty CSV");
    // header: t,z1,...,zn
    int n = -1;
    {
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.empty() || fields[0] != "t")
            throw ParseError("CSV header must start with 't'");
        n = static_cast<int>(fields.size()) - 1;
    }
    std::vector<double> t;
    std::vector<Vector> z;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> row;
        while (std::getline(ss, field, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(field, &pos));
            } catch (const std::exception&) {
                throw ParseError("CSV line " + std::to_string(lineno) + ": bad number '" + field + "'");
            }
        }
        if (static_cast<int>(row.size()) != n + 1)
            throw ParseError("CSV line " + std::to_string(lineno) + ": expected " +
                             std::to_string(n + 1) + " fields, got " + std::to_string(row.size()));
        t.push_back(row[0]);
        z.push_back(Eigen::Map<const Vector>(row.data() + 1, n));
    }
    return Skeleton(n, std::move(t), std::move(z));
}

}  // namespace detail

/// Loads and validates a skeleton file. ParseError on malformed content,
/// ValidationError on invariant violations; both name the culprit.
inline Skeleton load_skeleton(const std::string& path, SkeletonFormat format) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    if (format == SkeletonFormat::json) {
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": " + e.what());
        }
        return detail::skeleton_from_json(j);
    }
    return detail::skeleton_from_csv(in);
}

inline Skeleton load_skeleton(const std::string& path) {
    return load_skeleton(path, format_from_path(path));
}

/// Writes a skeleton with 17 significant digits so that a reload is
/// bit-exact.
inline void save_skeleton(const Skeleton& s, const std::string& path, SkeletonFormat format) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    if (format == SkeletonFormat::json) {
        out << "{\n  \"n\": " << s.dim() << ",\n  \"t\": [";
        for (std::size_t i = 0; i < s.times().size(); ++i)
            out << (i ? ", " : "") << detail::fmt17(s.times()[i]);
        out << "],\n  \"z\": [\n";
        for (std::size_t i = 0; i < s.values().size(); ++i) {
            out << "    [";
            for (int j = 0; j < s.dim(); ++j)
                out << (j ? ", " : "") << detail::fmt17(s.values()[i][j]);
            out << (i + 1 < s.values().size() ? "],\n" : "]\n");
        }
        out << "  ]\n}\n";
    } else {
        out << "t";
        for (int j = 1; j <= s.dim(); ++j) out << ",z" << j;
        out << "\n";
        for (std::size_t i = 0; i < s.times().size(); ++i) {
            out << detail::fmt17(s.times()[i]);
            for (int j = 0; j < s.dim(); ++j) out << "," << detail::fmt17(s.values()[i][j]);
            out << "\n";
        }
    }
    if (!out) throw IoError("write failed for " + path);
}

inline void save_skeleton(const Skeleton& s, const std::string& path) {
    save_skeleton(s, path, format_from_path(path));
}

}  // namespace resmin
