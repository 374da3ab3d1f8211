#include <chrono>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tensorcov/estimators.hpp"

namespace tcov {

namespace {

// What the estimators need from M = R(S): the Gram on the smaller side and
// products of M or M^T with reshaped singular vectors.
struct Rearranged {
    Index d1 = 0, d2 = 0;
    bool left = true;  // gram = M M^T (d1^2 square) when true, M^T M otherwise
    MatrixXd gram;
    double frob2 = 0;
    std::function<MatrixXd(const MatrixXd&)> mt_u;  // d1 x d1 -> d2 x d2
    std::function<MatrixXd(const MatrixXd&)> m_v;   // d2 x d2 -> d1 x d1
};

Rearranged from_dense(const MatrixXd& s, Index d1, Index d2)
{
    Rearranged r;
    r.d1 = d1;
    r.d2 = d2;
    auto m = std::make_shared<MatrixXd>(rearrange(s, d1, d2));
    r.left = d1 <= d2;
    r.gram = r.left ? MatrixXd(*m * m->transpose()) : MatrixXd(m->transpose() * *m);
    r.frob2 = m->squaredNorm();
    r.mt_u = [m, d1, d2](const MatrixXd& u) {
        const VectorXd v = m->transpose() * Eigen::Map<const VectorXd>(u.data(), d1 * d1);
        return MatrixXd(Eigen::Map<const MatrixXd>(v.data(), d2, d2));
    };
    r.m_v = [m, d1, d2](const MatrixXd& v) {
        const VectorXd u = *m * Eigen::Map<const VectorXd>(v.data(), d2 * d2);
        return MatrixXd(Eigen::Map<const MatrixXd>(u.data(), d1, d1));
    };
    return r;
}

// S = sum_c z_c z_c^T. With Z_c the d1 x d2 matrix Z_c[i1, i2] = z_c[i1 d2 + i2],
// M = sum_c R(z_c z_c^T) has entries sum_c Z_c[i1,i2] Z_c[j1,j2], so
// M M^T = sum_{c,c'} H (x) H with H = Z_c Z_c'^T, and similarly on the right.
Rearranged from_moments(const SecondMoments& s)
{
    if (s.dims().size() != 2) throw std::invalid_argument("Kronecker PCA needs an order-2 tensor");
    Rearranged r;
    r.d1 = s.dims()[1];
    r.d2 = s.dims()[0];
    const Index d1 = r.d1, d2 = r.d2, m = s.rank();
    auto zs = std::make_shared<std::vector<MatrixXd>>();
    for (Index c = 0; c < m; ++c)
        zs->push_back(Eigen::Map<const MatrixXd>(s.z().col(c).data(), d2, d1).transpose());
    r.left = d1 <= d2;
    const Index side = r.left ? d1 : d2;
    r.gram = MatrixXd::Zero(side * side, side * side);
    MatrixXd h(side, side), kh(side * side, side * side);
    for (Index c = 0; c < m; ++c)
        for (Index e = c; e < m; ++e) {
            if (r.left) h.noalias() = (*zs)[c] * (*zs)[e].transpose();
            else h.noalias() = (*zs)[c].transpose() * (*zs)[e];
            kh = kron(h, h);
            if (c == e) r.gram += kh;
            else r.gram += kh + kh.transpose();
        }
    r.frob2 = r.gram.trace();
    r.mt_u = [zs, d2](const MatrixXd& u) {
        MatrixXd out = MatrixXd::Zero(d2, d2);
        for (const auto& zc : *zs) out.noalias() += zc.transpose() * u * zc;
        return out;
    };
    r.m_v = [zs, d1](const MatrixXd& v) {
        MatrixXd out = MatrixXd::Zero(d1, d1);
        for (const auto& zc : *zs) out.noalias() += zc * v * zc.transpose();
        return out;
    };
    return r;
}

struct Spectrum {
    MatrixXd vecs;   // columns sorted by decreasing singular value
    VectorXd sigma;
};

Spectrum spectrum_of(const Rearranged& r)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(r.gram));
    if (es.info() != Eigen::Success) throw std::runtime_error("Kronecker PCA: eigendecomposition failed");
    Spectrum sp;
    sp.vecs = es.eigenvectors().rowwise().reverse();
    sp.sigma = es.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
    return sp;
}

// Singular triplet l as (sigma u_l, v_l) reshaped to factor matrices.
std::pair<MatrixXd, MatrixXd> triplet(const Rearranged& r, const Spectrum& sp, Index l, double weight)
{
    const Index side = r.left ? r.d1 : r.d2;
    const MatrixXd vec = Eigen::Map<const MatrixXd>(sp.vecs.col(l).data(), side, side);
    if (r.left) return {vec, weight * r.mt_u(vec)};
    return {weight * r.m_v(vec), vec};
}

FitResult kp_ls_impl(const Rearranged& r, const MatrixXd* dense)
{
    const Spectrum sp = spectrum_of(r);
    const double s1 = sp.sigma[0];
    FitResult out;
    out.method = Method::KpLs;
    out.is_covariance = true;
    MatrixXd a, b;
    if (s1 > 0) {
        auto [ta, tb] = triplet(r, sp, 0, 1.0);
        a = ta;
        b = tb;
    } else {
        a = MatrixXd::Zero(r.d1, r.d1);
        b = MatrixXd::Zero(r.d2, r.d2);
    }
    if (a.trace() < 0) {
        a = -a;
        b = -b;
    }
    a = symmetrize(a);
    b = symmetrize(b);
    out.model = StructuredMatrix::kron_product({a, b});
    out.factors.factors = {b, a};
    double resid2 = std::max(r.frob2 - s1 * s1, 0.0);
    if (dense) resid2 = (*dense - kron(a, b)).squaredNorm();
    out.objective_trace = {resid2};
    out.iterations = 1;
    out.converged = true;
    out.rank = 1;
    return out;
}

FitResult kpca_impl(const Rearranged& r, double lambda, bool materialize)
{
    if (!(lambda >= 0)) throw std::invalid_argument("kpca: lambda must be nonnegative");
    const Spectrum sp = spectrum_of(r);
    const double tau = lambda / 2;
    const double tiny = 1e-12 * std::max(sp.sigma[0], 1e-300);
    FitResult out;
    out.method = Method::Kpca;
    out.is_covariance = true;
    double obj = 0;
    for (Index l = 0; l < sp.sigma.size(); ++l) {
        const double sig = sp.sigma[l];
        double shrink;
        if (lambda == 0) shrink = 1.0;
        else shrink = sig > tau ? (sig - tau) / sig : 0.0;
        const double kept = sig * shrink;
        obj += (sig - kept) * (sig - kept) + lambda * kept;
        if (shrink <= 0) continue;
        if (sig > tau && sig > tiny) ++out.rank;
        out.kron_terms.push_back(triplet(r, sp, l, shrink));
    }
    if (materialize) {
        MatrixXd sigma = materialize_terms(out.kron_terms);
        if (out.kron_terms.empty()) sigma = MatrixXd::Zero(r.d1 * r.d2, r.d1 * r.d2);
        out.model = StructuredMatrix::dense(symmetrize(sigma));
    }
    out.objective_trace = {obj};
    out.iterations = 1;
    out.converged = true;
    return out;
}

} // namespace

MatrixXd materialize_terms(const std::vector<std::pair<MatrixXd, MatrixXd>>& terms)
{
    if (terms.empty()) return MatrixXd();
    const Index d = terms.front().first.rows() * terms.front().second.rows();
    if (d > kDefaultMaterializeCap * 2) throw std::length_error("refusing to materialize a large Kronecker sum");
    MatrixXd out = MatrixXd::Zero(d, d);
    for (const auto& [a, b] : terms) out += kron(a, b);
    return out;
}

KpLsResult kp_ls_factors(const MatrixXd& s, Index d1, Index d2)
{
    const Rearranged r = from_dense(s, d1, d2);
    const Spectrum sp = spectrum_of(r);
    KpLsResult out;
    out.sigma1 = sp.sigma[0];
    auto [a, b] = triplet(r, sp, 0, 1.0);
    if (a.trace() < 0) {
        a = -a;
        b = -b;
    }
    out.a = a;
    out.b = b;
    out.residual = (s - kron(a, b)).norm();
    return out;
}

namespace {

template <class F>
FitResult timed(F&& f)
{
    const auto start = std::chrono::steady_clock::now();
    FitResult r = f();
    r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

} // namespace

FitResult kp_ls(const MatrixXd& s, Index d1, Index d2)
{
    return timed([&] { return kp_ls_impl(from_dense(s, d1, d2), &s); });
}

FitResult kpca(const MatrixXd& s, Index d1, Index d2, double lambda)
{
    return timed([&] { return kpca_impl(from_dense(s, d1, d2), lambda, true); });
}

FitResult kp_ls(const SecondMoments& s)
{
    return timed([&] { return kp_ls_impl(from_moments(s), nullptr); });
}

FitResult kpca(const SecondMoments& s, double lambda)
{
    return timed([&] { return kpca_impl(from_moments(s), lambda, s.dim() <= kDefaultMaterializeCap); });
}

} // namespace tcov
