#include "tensorcov/kronecker.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

namespace tcov {

std::string_view to_string(Structure s)
{
    switch (s) {
    case Structure::KronProduct: return "kron-product";
    case Structure::KronSum: return "kron-sum";
    case Structure::SquaredKronSum: return "squared-kron-sum";
    case Structure::Dense: return "dense";
    }
    return "dense";
}

Structure structure_from_string(std::string_view s)
{
    if (s == "kron-product") return Structure::KronProduct;
    if (s == "kron-sum") return Structure::KronSum;
    if (s == "squared-kron-sum") return Structure::SquaredKronSum;
    if (s == "dense") return Structure::Dense;
    throw std::invalid_argument("unknown structure '" + std::string(s) + "'");
}

Dims FactorSet::dims() const
{
    Dims d;
    for (const auto& f : factors) d.push_back(f.rows());
    return d;
}

void normalize_trace(FactorSet& fs)
{
    const std::size_t K = fs.factors.size();
    for (std::size_t k = 0; k + 1 < K; ++k) {
        const double tr = fs.factors[k].trace();
        if (!(tr > 0)) throw std::domain_error("trace normalization needs a positive trace");
        const double c = static_cast<double>(fs.factors[k].rows()) / tr;
        fs.factors[k] *= c;
        fs.factors[K - 1] /= c;
    }
    fs.normalization = Normalization::TraceFixed;
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b)
{
    MatrixXd out = Eigen::kroneckerProduct(a, b).eval();
    return out;
}

MatrixXd symmetrize(const MatrixXd& m) { return 0.5 * (m + m.transpose()); }

bool is_symmetric(const MatrixXd& m, double rel_tol)
{
    if (m.rows() != m.cols()) return false;
    if (m.size() == 0) return true;
    const double scale = std::max(1e-300, m.cwiseAbs().maxCoeff());
    return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

MatrixXd psd_sqrt(const MatrixXd& w, double tol)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(w));
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const VectorXd& lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    if (lam.minCoeff() < -tol * scale)
        throw std::domain_error("matrix is not positive semidefinite (eigenvalue " +
                                std::to_string(lam.minCoeff()) + ")");
    const VectorXd root = lam.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// StructuredMatrix

StructuredMatrix::StructuredMatrix(Structure s, std::vector<MatrixXd> factors)
    : structure_(s), factors_(std::move(factors))
{
    if (factors_.empty()) throw std::invalid_argument("structured matrix needs at least one factor");
    for (auto& f : factors_) {
        if (f.rows() != f.cols() || f.rows() == 0)
            throw std::invalid_argument("Kronecker factors must be square and nonempty");
        if (!f.allFinite()) throw std::invalid_argument("Kronecker factor has non-finite entries");
        if (!is_symmetric(f, 1e-8)) throw std::invalid_argument("Kronecker factor is not symmetric");
        f = symmetrize(f);
    }
}

StructuredMatrix StructuredMatrix::kron_product(std::vector<MatrixXd> factors)
{
    return StructuredMatrix(Structure::KronProduct, std::move(factors));
}

StructuredMatrix StructuredMatrix::kron_sum(std::vector<MatrixXd> factors)
{
    return StructuredMatrix(Structure::KronSum, std::move(factors));
}

StructuredMatrix StructuredMatrix::squared_kron_sum(std::vector<MatrixXd> factors)
{
    return StructuredMatrix(Structure::SquaredKronSum, std::move(factors));
}

StructuredMatrix StructuredMatrix::dense(MatrixXd m)
{
    if (m.rows() != m.cols()) throw std::invalid_argument("dense structured matrix must be square");
    StructuredMatrix s;
    s.structure_ = Structure::Dense;
    s.dense_ = std::move(m);
    return s;
}

StructuredMatrix StructuredMatrix::from_modes(Structure s, const std::vector<MatrixXd>& per_mode)
{
    std::vector<MatrixXd> lit(per_mode.rbegin(), per_mode.rend());
    switch (s) {
    case Structure::KronProduct: return kron_product(std::move(lit));
    case Structure::KronSum: return kron_sum(std::move(lit));
    case Structure::SquaredKronSum: return squared_kron_sum(std::move(lit));
    case Structure::Dense: break;
    }
    throw std::invalid_argument("from_modes needs a factored structure");
}

const MatrixXd& StructuredMatrix::dense_matrix() const
{
    if (structure_ != Structure::Dense) throw std::logic_error("not a dense structured matrix");
    return dense_;
}

Dims StructuredMatrix::dims() const
{
    if (structure_ == Structure::Dense) return {dense_.rows()};
    Dims d;
    for (const auto& f : factors_) d.push_back(f.rows());
    return d;
}

Dims StructuredMatrix::tensor_dims() const
{
    Dims d = dims();
    return Dims(d.rbegin(), d.rend());
}

Index StructuredMatrix::size() const { return product(dims()); }

namespace {

VectorXd kron_sum_apply(const std::vector<MatrixXd>& factors, const VectorXd& v)
{
    const Index K = static_cast<Index>(factors.size());
    Dims tdims;
    for (Index i = K - 1; i >= 0; --i) tdims.push_back(factors[i].rows());
    VectorXd out = VectorXd::Zero(v.size());
    VectorXd tmp(v.size());
    for (Index i = 0; i < K; ++i) {
        mode_product_into(v.data(), tdims, factors[i], K - 1 - i, tmp.data());
        out += tmp;
    }
    return out;
}

VectorXd kron_product_apply(const std::vector<MatrixXd>& factors, const VectorXd& v)
{
    const Index K = static_cast<Index>(factors.size());
    Dims tdims;
    for (Index i = K - 1; i >= 0; --i) tdims.push_back(factors[i].rows());
    VectorXd cur = v, next(v.size());
    for (Index i = 0; i < K; ++i) {
        mode_product_into(cur.data(), tdims, factors[i], K - 1 - i, next.data());
        cur.swap(next);
    }
    return cur;
}

} // namespace

VectorXd StructuredMatrix::apply(const VectorXd& v) const
{
    if (v.size() != size()) throw std::invalid_argument("apply: vector length does not match matrix size");
    switch (structure_) {
    case Structure::KronProduct: return kron_product_apply(factors_, v);
    case Structure::KronSum: return kron_sum_apply(factors_, v);
    case Structure::SquaredKronSum: return kron_sum_apply(factors_, kron_sum_apply(factors_, v));
    case Structure::Dense: return dense_ * v;
    }
    return {};
}

MatrixXd StructuredMatrix::materialize(Index cap) const
{
    const Index d = size();
    if (d > cap)
        throw std::length_error("refusing to materialize a " + std::to_string(d) + "x" + std::to_string(d) +
                                " matrix (cap " + std::to_string(cap) + ")");
    if (structure_ == Structure::Dense) return dense_;
    if (structure_ == Structure::KronProduct) {
        MatrixXd out = factors_.front();
        for (std::size_t i = 1; i < factors_.size(); ++i) out = kron(out, factors_[i]);
        return out;
    }
    MatrixXd ks = MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        Index left = 1, right = 1;
        for (std::size_t j = 0; j < i; ++j) left *= factors_[j].rows();
        for (std::size_t j = i + 1; j < factors_.size(); ++j) right *= factors_[j].rows();
        ks += kron(kron(MatrixXd::Identity(left, left), factors_[i]), MatrixXd::Identity(right, right));
    }
    if (structure_ == Structure::SquaredKronSum) return ks * ks;
    return ks;
}

double StructuredMatrix::logdet() const
{
    switch (structure_) {
    case Structure::KronProduct: {
        const double d = static_cast<double>(size());
        double ld = 0;
        for (const auto& f : factors_) {
            Eigen::LLT<MatrixXd> llt(f);
            if (llt.info() != Eigen::Success) throw std::domain_error("logdet: factor is not positive definite");
            ld += d / static_cast<double>(f.rows()) * 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        }
        return ld;
    }
    case Structure::KronSum: return EigKronSum(factors_).logdet();
    case Structure::SquaredKronSum: {
        const VectorXd s = EigKronSum(factors_).spectrum();
        if ((s.array() == 0.0).any()) throw std::domain_error("logdet: singular Kronecker sum");
        return 2.0 * s.array().abs().log().sum();
    }
    case Structure::Dense: {
        Eigen::LLT<MatrixXd> llt(dense_);
        if (llt.info() != Eigen::Success) throw std::domain_error("logdet: matrix is not positive definite");
        return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    }
    }
    return 0;
}

double StructuredMatrix::min_eigenvalue() const
{
    switch (structure_) {
    case Structure::KronProduct: {
        // The spectrum is all products of factor eigenvalues; the extreme
        // products sit at corners of the per-factor eigenvalue ranges.
        std::vector<std::pair<double, double>> ranges;
        for (const auto& f : factors_) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(f, Eigen::EigenvaluesOnly);
            ranges.emplace_back(es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff());
        }
        double best = std::numeric_limits<double>::infinity();
        const std::size_t corners = std::size_t{1} << ranges.size();
        for (std::size_t mask = 0; mask < corners; ++mask) {
            double p = 1;
            for (std::size_t i = 0; i < ranges.size(); ++i)
                p *= (mask >> i & 1) ? ranges[i].second : ranges[i].first;
            best = std::min(best, p);
        }
        return best;
    }
    case Structure::KronSum: return EigKronSum(factors_).min_eigenvalue();
    case Structure::SquaredKronSum: {
        const VectorXd s = EigKronSum(factors_).spectrum();
        const double m = s.cwiseAbs().minCoeff();
        return m * m;
    }
    case Structure::Dense: {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense_, Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
    }
    return 0;
}

VectorXd StructuredMatrix::solve(const VectorXd& v) const
{
    if (v.size() != size()) throw std::invalid_argument("solve: vector length does not match matrix size");
    switch (structure_) {
    case Structure::KronProduct: {
        std::vector<MatrixXd> inv;
        for (const auto& f : factors_) {
            Eigen::FullPivLU<MatrixXd> lu(f);
            if (!lu.isInvertible()) throw std::domain_error("solve: singular Kronecker factor");
            inv.push_back(lu.inverse());
        }
        return kron_product_apply(inv, v);
    }
    case Structure::KronSum:
    case Structure::SquaredKronSum: {
        EigKronSum eig(factors_);
        VectorXd s = eig.spectrum();
        if ((s.array() == 0.0).any()) throw std::domain_error("solve: singular Kronecker sum");
        VectorXd f = s.cwiseInverse();
        if (structure_ == Structure::SquaredKronSum) f = f.cwiseAbs2();
        return eig.apply_spectral(f, v);
    }
    case Structure::Dense: {
        Eigen::FullPivLU<MatrixXd> lu(dense_);
        if (!lu.isInvertible()) throw std::domain_error("solve: singular matrix");
        return lu.solve(v);
    }
    }
    return {};
}

StructuredMatrix StructuredMatrix::scaled(double c) const
{
    StructuredMatrix out = *this;
    switch (structure_) {
    case Structure::KronProduct: out.factors_.front() *= c; break;
    case Structure::KronSum:
        for (auto& f : out.factors_) f *= c;
        break;
    case Structure::SquaredKronSum: {
        if (c < 0) throw std::domain_error("cannot scale a squared Kronecker sum by a negative number");
        const double r = std::sqrt(c);
        for (auto& f : out.factors_) f *= r;
        break;
    }
    case Structure::Dense: out.dense_ *= c; break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// EigKronSum

EigKronSum::EigKronSum(const std::vector<MatrixXd>& factors)
{
    if (factors.empty()) throw std::invalid_argument("EigKronSum needs at least one factor");
    for (const auto& f : factors) {
        if (!f.allFinite()) throw std::runtime_error("eigendecomposition failed: non-finite entries");
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(f));
        if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
        eigvecs_.push_back(es.eigenvectors());
        eigvals_.push_back(es.eigenvalues());
    }
}

Dims EigKronSum::dims() const
{
    Dims d;
    for (const auto& l : eigvals_) d.push_back(l.size());
    return d;
}

VectorXd EigKronSum::spectrum() const
{
    VectorXd s = eigvals_.front();
    for (std::size_t k = 1; k < eigvals_.size(); ++k) {
        const VectorXd& l = eigvals_[k];
        VectorXd next(s.size() * l.size());
        for (Index a = 0; a < s.size(); ++a) next.segment(a * l.size(), l.size()) = l.array() + s[a];
        s.swap(next);
    }
    return s;
}

double EigKronSum::min_eigenvalue() const
{
    double m = 0;
    for (const auto& l : eigvals_) m += l.minCoeff();
    return m;
}

double EigKronSum::logdet() const
{
    const VectorXd s = spectrum();
    if (s.minCoeff() <= 0) throw std::domain_error("logdet: Kronecker sum is not positive definite");
    return s.array().log().sum();
}

VectorXd EigKronSum::apply_spectral(const VectorXd& f, const VectorXd& v) const
{
    const Index K = static_cast<Index>(eigvecs_.size());
    Dims tdims;
    for (Index i = K - 1; i >= 0; --i) tdims.push_back(eigvecs_[i].rows());
    if (v.size() != product(tdims) || f.size() != v.size())
        throw std::invalid_argument("apply_spectral: length mismatch");
    VectorXd cur = v, next(v.size());
    for (Index i = 0; i < K; ++i) {
        mode_product_into(cur.data(), tdims, eigvecs_[i].transpose(), K - 1 - i, next.data());
        cur.swap(next);
    }
    cur.array() *= f.array();
    for (Index i = 0; i < K; ++i) {
        mode_product_into(cur.data(), tdims, eigvecs_[i], K - 1 - i, next.data());
        cur.swap(next);
    }
    return cur;
}

MatrixXd EigKronSum::partial_trace_spectral(const VectorXd& f, Index k) const
{
    const Index K = static_cast<Index>(eigvecs_.size());
    if (k < 0 || k >= K) throw std::out_of_range("factor index out of range");
    Dims tdims;
    for (Index i = K - 1; i >= 0; --i) tdims.push_back(eigvecs_[i].rows());
    MatrixXd unf;
    unfold_into(f.data(), tdims, K - 1 - k, unf);
    const VectorXd h = unf.rowwise().sum();
    const MatrixXd& U = eigvecs_[k];
    return U * h.asDiagonal() * U.transpose();
}

// ---------------------------------------------------------------------------
// Rearrangement and partial traces

MatrixXd rearrange(const MatrixXd& s, Index d1, Index d2)
{
    if (d1 <= 0 || d2 <= 0 || s.rows() != d1 * d2 || s.cols() != d1 * d2)
        throw std::invalid_argument("rearrange: matrix side must equal d1*d2");
    MatrixXd r(d1 * d1, d2 * d2);
    for (Index j1 = 0; j1 < d1; ++j1)
        for (Index i1 = 0; i1 < d1; ++i1)
            for (Index j2 = 0; j2 < d2; ++j2)
                for (Index i2 = 0; i2 < d2; ++i2)
                    r(i1 + d1 * j1, i2 + d2 * j2) = s(i1 * d2 + i2, j1 * d2 + j2);
    return r;
}

MatrixXd rearrange_inverse(const MatrixXd& m, Index d1, Index d2)
{
    if (d1 <= 0 || d2 <= 0 || m.rows() != d1 * d1 || m.cols() != d2 * d2)
        throw std::invalid_argument("rearrange_inverse: expected a d1^2 x d2^2 matrix");
    MatrixXd s(d1 * d2, d1 * d2);
    for (Index j1 = 0; j1 < d1; ++j1)
        for (Index i1 = 0; i1 < d1; ++i1)
            for (Index j2 = 0; j2 < d2; ++j2)
                for (Index i2 = 0; i2 < d2; ++i2)
                    s(i1 * d2 + i2, j1 * d2 + j2) = m(i1 + d1 * j1, i2 + d2 * j2);
    return s;
}

MatrixXd mode_partial_trace(const MatrixXd& m, Index mode, const Dims& tensor_dims)
{
    const Index d = product(tensor_dims);
    if (m.rows() != d || m.cols() != d) throw std::invalid_argument("partial_trace: dimension mismatch");
    const Index K = static_cast<Index>(tensor_dims.size());
    if (mode < 0 || mode >= K) throw std::out_of_range("partial_trace: mode out of range");
    Index left = 1, right = 1;
    for (Index j = 0; j < mode; ++j) left *= tensor_dims[j];
    for (Index j = mode + 1; j < K; ++j) right *= tensor_dims[j];
    const Index n = tensor_dims[mode];
    MatrixXd out = MatrixXd::Zero(n, n);
    for (Index b = 0; b < right; ++b)
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < n; ++i)
                out(i, j) += m.block(left * (i + n * b), left * (j + n * b), left, left).diagonal().sum();
    return out;
}

MatrixXd partial_trace(const MatrixXd& m, Index k, const Dims& dims)
{
    const Index K = static_cast<Index>(dims.size());
    if (k < 0 || k >= K) throw std::out_of_range("partial_trace: factor index out of range");
    Dims tdims(dims.rbegin(), dims.rend());
    return mode_partial_trace(m, K - 1 - k, tdims);
}

} // namespace tcov
