#pragma once

// Dense double-precision matrices, activations and the seeded generator that
// every stochastic step in the library draws from.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpm/error.hpp"

namespace fpm {

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            fail(ErrorKind::DimensionMismatch, "matrix data length " + std::to_string(data_.size()) +
                                                   " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    Matrix(std::initializer_list<std::initializer_list<double>> init) {
        rows_ = init.size();
        cols_ = rows_ ? init.begin()->size() : 0;
        data_.reserve(rows_ * cols_);
        for (const auto& row : init) {
            if (row.size() != cols_) fail(ErrorKind::DimensionMismatch, "ragged matrix literal");
            data_.insert(data_.end(), row.begin(), row.end());
        }
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    /// Rows picked by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t i = 0; i < idx.size(); ++i)
            std::copy_n(data_.begin() + idx[i] * cols_, cols_, out.data_.begin() + i * cols_);
        return out;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorKind::DimensionMismatch, std::string(what) + ": " + std::to_string(a.rows()) + "x" +
                                               std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                               std::to_string(b.cols()));
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        fail(ErrorKind::DimensionMismatch, "matmul: a.cols=" + std::to_string(a.cols()) +
                                               " b.rows=" + std::to_string(b.rows()));
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* crow = c.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

/// aᵀ·b without materialising the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) fail(ErrorKind::DimensionMismatch, "matmul_tn: row counts differ");
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* brow = b.row(r).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double ark = a(r, k);
            double* crow = c.row(k).data();
            for (std::size_t j = 0; j < n; ++j) crow[j] += ark * brow[j];
        }
    }
    return c;
}

/// a·bᵀ without materialising the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) fail(ErrorKind::DimensionMismatch, "matmul_nt: column counts differ");
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t k = 0; k < b.rows(); ++k) {
            const double* brow = b.row(k).data();
            double s = 0.0;
            for (std::size_t j = 0; j < a.cols(); ++j) s += arow[j] * brow[j];
            c(i, k) = s;
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

enum class ActivationKind { Sigmoid, ReLU, Tanh, Identity };

inline std::string_view to_string(ActivationKind k) {
    switch (k) {
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::ReLU: return "relu";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Identity: return "identity";
    }
    return "identity";
}

inline ActivationKind activation_from_string(std::string_view s) {
    if (s == "sigmoid") return ActivationKind::Sigmoid;
    if (s == "relu") return ActivationKind::ReLU;
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "identity") return ActivationKind::Identity;
    fail(ErrorKind::Parse, "unknown activation '" + std::string(s) + "'");
}

inline double sigmoid(double z) noexcept {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

inline double activate(double z, ActivationKind kind) noexcept {
    switch (kind) {
    case ActivationKind::Sigmoid: return sigmoid(z);
    case ActivationKind::ReLU: return z > 0.0 ? z : 0.0;
    case ActivationKind::Tanh: return std::tanh(z);
    case ActivationKind::Identity: return z;
    }
    return z;
}

/// Derivative at the pre-activation value. ReLU'(0) is taken as 0.
inline double activation_derivative(ActivationKind kind, double z) noexcept {
    switch (kind) {
    case ActivationKind::Sigmoid: {
        const double s = sigmoid(z);
        return s * (1.0 - s);
    }
    case ActivationKind::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    case ActivationKind::Identity: return 1.0;
    }
    return 1.0;
}

inline Matrix activate(const Matrix& m, ActivationKind kind) {
    if (kind == ActivationKind::Identity) return m;
    Matrix out = m;
    for (double& v : out.data()) v = activate(v, kind);
    return out;
}

inline Matrix activation_derivative(ActivationKind kind, const Matrix& pre_activation) {
    Matrix out = pre_activation;
    for (double& v : out.data()) v = activation_derivative(kind, v);
    return out;
}

/// xoshiro256** seeded through splitmix64. The stream depends only on the
/// 64-bit seed, so results are portable across compilers and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t x = seed;
        for (auto& s : state_) s = splitmix64(x);
    }

    static std::uint64_t splitmix64(std::uint64_t& x) noexcept {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) noexcept {
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        std::uint64_t v;
        do v = next();
        while (v >= limit);
        return v % n;
    }

    /// Standard normal via the Marsaglia polar method (spare value cached).
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    bool bernoulli(double p) noexcept { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

    /// Index drawn proportionally to the (non-negative) weights.
    std::size_t categorical(std::span<const double> weights) noexcept {
        double total = 0.0;
        for (double w : weights) total += w;
        double u = uniform() * total;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (u < weights[i]) return i;
            u -= weights[i];
        }
        return weights.size() - 1;
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable 64-bit FNV-1a, used to derive per-stage seeds from one root seed.
inline std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stage) noexcept {
    std::uint64_t x = root ^ fnv1a(stage);
    return Rng::splitmix64(x);
}

inline Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.normal();
    return m;
}

inline Matrix bernoulli_mask(Rng& rng, std::size_t rows, std::size_t cols, double p) {
    if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidProbability, "mask probability " + std::to_string(p));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = rng.bernoulli(p) ? 1.0 : 0.0;
    return m;
}

} // namespace fpm
