#pragma once

// Shared numerical plumbing: errors, seeded random streams, symmetric
// matrices and Gaussian sampling.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cips {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised on invalid input dimensions, parameters or configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a computation breaks down (loss of definiteness, blow-up,
/// weight collapse, non-finite particles).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

} // namespace detail

/// Seeded xoshiro256** stream. Identical seeds give identical sequences on
/// every platform: uniforms and normals are generated here, not by <random>
/// distributions whose algorithms are implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& s : s_) s = detail::splitmix64(sm);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return counter_; }

    /// Independent sub-stream number `index`; does not advance this stream.
    RngStream substream(std::uint64_t index) const {
        std::uint64_t sm = seed_ ^ (0xd1b54a32d192ed03ULL * (index + 1));
        return RngStream(detail::splitmix64(sm) + index);
    }

    std::uint64_t next_u64() {
        ++counter_;
        const std::uint64_t result = detail::rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = detail::rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    Vector normal_vector(Eigen::Index n) {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
        return v;
    }

    /// rows x cols matrix of i.i.d. standard normals, filled column by column.
    Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
        return m;
    }

private:
    std::uint64_t seed_;
    std::uint64_t s_[4]{};
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Dense symmetric matrix. Construction rejects inputs whose asymmetry
/// exceeds 1e-12 relative to the largest entry, then stores the exact
/// symmetric part.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(const Matrix& m) {
        detail::require(m.rows() == m.cols(), "SymMatrix: matrix must be square");
        const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        if (!(asym <= 1e-12 * scale))
            throw ConfigError("SymMatrix: asymmetry " + std::to_string(asym) + " exceeds tolerance");
        m_ = 0.5 * (m + m.transpose());
    }

    /// Symmetric part of an arbitrary square matrix (no tolerance check).
    static SymMatrix symmetrize(const Matrix& m) {
        detail::require(m.rows() == m.cols(), "SymMatrix: matrix must be square");
        SymMatrix s;
        s.m_ = 0.5 * (m + m.transpose());
        return s;
    }

    static SymMatrix identity(Eigen::Index d) { return symmetrize(Matrix::Identity(d, d)); }
    static SymMatrix zero(Eigen::Index d) { return symmetrize(Matrix::Zero(d, d)); }

    Eigen::Index dim() const { return m_.rows(); }
    const Matrix& mat() const { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
    double trace() const { return m_.trace(); }

    bool is_positive_definite() const {
        if (m_.size() == 0) return false;
        Eigen::LLT<Matrix> llt(m_);
        return llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0;
    }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Matrix> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }

private:
    Matrix m_;
};

namespace detail {

/// Eigen-decomposition with the PSD repair policy: eigenvalues in
/// [-1e-10 * |trace|, 0) are clipped to zero, anything lower is an error.
inline Eigen::SelfAdjointEigenSolver<Matrix> psd_eigen(const SymMatrix& m, Vector& clipped,
                                                       const char* what) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m.mat());
    if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigen-decomposition failed");
    clipped = es.eigenvalues();
    const double floor = -1e-10 * std::abs(m.trace());
    for (Eigen::Index i = 0; i < clipped.size(); ++i) {
        if (clipped(i) < floor || !std::isfinite(clipped(i)))
            throw NumericError(std::string(what) + ": matrix is not positive semi-definite (eigenvalue " +
                               std::to_string(clipped(i)) + ")");
        if (clipped(i) < 0.0) clipped(i) = 0.0;
    }
    return es;
}

} // namespace detail

/// Unique symmetric PSD square root of a PSD matrix.
inline SymMatrix sym_sqrt(const SymMatrix& m) {
    Vector ev;
    auto es = detail::psd_eigen(m, ev, "sym_sqrt");
    const Matrix& v = es.eigenvectors();
    return SymMatrix::symmetrize(v * ev.cwiseSqrt().asDiagonal() * v.transpose());
}

/// Inverse of the symmetric square root of an SPD matrix.
inline SymMatrix sym_inv_sqrt(const SymMatrix& m) {
    Vector ev;
    auto es = detail::psd_eigen(m, ev, "sym_inv_sqrt");
    if (ev.minCoeff() <= 0.0) throw NumericError("sym_inv_sqrt: matrix is singular");
    const Matrix& v = es.eigenvectors();
    return SymMatrix::symmetrize(v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose());
}

/// A factor F with F F^T = cov: Cholesky when PD, eigenvalue-clipped
/// symmetric root otherwise.
inline Matrix covariance_factor(const SymMatrix& cov) {
    Eigen::LLT<Matrix> llt(cov.mat());
    if (llt.info() == Eigen::Success) {
        Matrix l = llt.matrixL();
        if (l.diagonal().minCoeff() > 0.0 && l.allFinite()) return l;
    }
    return sym_sqrt(cov).mat();
}

inline Vector sample_gaussian(RngStream& rng, const Vector& mean, const SymMatrix& cov) {
    detail::require(mean.size() == cov.dim(), "sample_gaussian: dimension mismatch between mean and covariance");
    const Matrix f = covariance_factor(cov);
    return mean + f * rng.normal_vector(mean.size());
}

/// n samples from N(mean, cov) as the columns of a d x n matrix.
inline Matrix sample_gaussian_columns(RngStream& rng, const Vector& mean, const SymMatrix& cov, Eigen::Index n) {
    detail::require(mean.size() == cov.dim(), "sample_gaussian: dimension mismatch between mean and covariance");
    const Matrix f = covariance_factor(cov);
    Matrix out = f * rng.normal_matrix(mean.size(), n);
    out.colwise() += mean;
    return out;
}

/// SPD inverse with a single diagonal jitter of 1e-9 * trace / d before
/// giving up.
inline Matrix spd_inverse_with_jitter(const Matrix& s, const char* what) {
    const Eigen::Index d = s.rows();
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
        return llt.solve(Matrix::Identity(d, d));
    Matrix jittered = s;
    jittered.diagonal().array() += 1e-9 * std::abs(s.trace()) / static_cast<double>(d);
    Eigen::LLT<Matrix> llt2(jittered);
    if (llt2.info() != Eigen::Success || !(llt2.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0))
        throw NumericError(std::string(what) + ": covariance is singular after jitter");
    return llt2.solve(Matrix::Identity(d, d));
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

} // namespace cips
