#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tensorcov/estimators.hpp"
#include "tensorcov/evaluation.hpp"

namespace tcov {

std::vector<Index> time_major_permutation(const Dims& dims, Index time_mode)
{
    const Index K = static_cast<Index>(dims.size());
    if (time_mode < 0 || time_mode >= K) throw std::out_of_range("time mode out of range");
    const Index d = product(dims);
    const Index p = dims[time_mode];
    const Index q = d / p;
    Index stride = 1;
    for (Index j = 0; j < time_mode; ++j) stride *= dims[j];
    // perm[new] = old; old = low + stride * (t + p * high)
    std::vector<Index> perm(static_cast<std::size_t>(d));
    for (Index old = 0; old < d; ++old) {
        const Index low = old % stride;
        const Index t = old / stride % p;
        const Index high = old / (stride * p);
        perm[static_cast<std::size_t>(low + stride * high + q * t)] = old;
    }
    return perm;
}

VectorXd to_time_major(const VectorXd& v, const Dims& dims, Index time_mode)
{
    if (v.size() != product(dims)) throw std::invalid_argument("to_time_major: length mismatch");
    const auto perm = time_major_permutation(dims, time_mode);
    VectorXd out(v.size());
    for (Index i = 0; i < v.size(); ++i) out[i] = v[perm[static_cast<std::size_t>(i)]];
    return out;
}

namespace {

PredictorBlocks blocks_from_columns(const MatrixXd& last_cols, const std::vector<Index>& perm, Index p, Index q)
{
    // last_cols holds Omega[:, perm[(p-1)q + j]] in the original ordering.
    PredictorBlocks b;
    b.p = p;
    b.q = q;
    b.omega_21.resize(q, (p - 1) * q);
    b.omega_22.resize(q, q);
    for (Index j = 0; j < q; ++j) {
        for (Index i = 0; i < (p - 1) * q; ++i) b.omega_21(j, i) = last_cols(perm[static_cast<std::size_t>(i)], j);
        for (Index i = 0; i < q; ++i) b.omega_22(j, i) = last_cols(perm[static_cast<std::size_t>((p - 1) * q + i)], j);
    }
    b.omega_22 = symmetrize(b.omega_22);
    return b;
}

} // namespace

PredictorBlocks predictor_blocks(const MatrixXd& omega, const Dims& dims, Index time_mode)
{
    const Index d = product(dims);
    if (omega.rows() != d || omega.cols() != d) throw std::invalid_argument("predictor_blocks: size mismatch");
    const Index p = dims.at(static_cast<std::size_t>(time_mode));
    if (p < 2) throw std::invalid_argument("predictor_blocks: need at least two frames");
    const Index q = d / p;
    const auto perm = time_major_permutation(dims, time_mode);
    MatrixXd cols(d, q);
    for (Index j = 0; j < q; ++j) cols.col(j) = omega.col(perm[static_cast<std::size_t>((p - 1) * q + j)]);
    return blocks_from_columns(cols, perm, p, q);
}

PredictorBlocks predictor_blocks(const StructuredMatrix& omega, const Dims& dims, Index time_mode)
{
    const Index d = product(dims);
    if (omega.size() != d) throw std::invalid_argument("predictor_blocks: size mismatch");
    if (omega.structure() == Structure::Dense) return predictor_blocks(omega.dense_matrix(), dims, time_mode);
    const Index p = dims.at(static_cast<std::size_t>(time_mode));
    if (p < 2) throw std::invalid_argument("predictor_blocks: need at least two frames");
    const Index q = d / p;
    const auto perm = time_major_permutation(dims, time_mode);
    MatrixXd cols(d, q);
    VectorXd e = VectorXd::Zero(d);
    for (Index j = 0; j < q; ++j) {
        const Index idx = perm[static_cast<std::size_t>((p - 1) * q + j)];
        e[idx] = 1;
        cols.col(j) = omega.apply(e);
        e[idx] = 0;
    }
    return blocks_from_columns(cols, perm, p, q);
}

VectorXd forward_predict(const PredictorBlocks& b, const VectorXd& history)
{
    if (history.size() != (b.p - 1) * b.q) throw std::invalid_argument("forward_predict: history has the wrong length");
    Eigen::LLT<MatrixXd> llt(b.omega_22);
    if (llt.info() != Eigen::Success) throw std::domain_error("forward_predict: Omega_22 is not positive definite");
    const VectorXd rhs = -(b.omega_21 * history);
    VectorXd y = llt.solve(rhs);
    const double scale = std::max(rhs.norm(), 1e-300);
    VectorXd r = rhs - b.omega_22 * y;
    for (int it = 0; it < 3 && r.norm() > 1e-10 * scale; ++it) {
        y += llt.solve(r);
        r = rhs - b.omega_22 * y;
    }
    if (r.norm() > 1e-10 * scale && rhs.norm() > 0) throw std::runtime_error("forward_predict: solve did not reach the residual target");
    return y;
}

VectorXd forward_predict(const MatrixXd& omega, Index p, Index q, const VectorXd& history)
{
    if (omega.rows() != p * q || omega.cols() != p * q) throw std::invalid_argument("forward_predict: size mismatch");
    PredictorBlocks b;
    b.p = p;
    b.q = q;
    b.omega_21 = omega.bottomLeftCorner(q, (p - 1) * q);
    b.omega_22 = symmetrize(omega.bottomRightCorner(q, q));
    return forward_predict(b, history);
}

// ---------------------------------------------------------------------------

double lasso_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& beta, double lambda)
{
    const double n = static_cast<double>(x.rows());
    return (y - x * beta).squaredNorm() / (2 * n) + lambda * beta.cwiseAbs().sum();
}

VectorXd lasso_cd(const MatrixXd& gram, const VectorXd& xty, double lambda, double tol, int max_sweeps)
{
    // gram = X^T X / n, xty = X^T y / n; r = xty - gram * beta is the
    // negative smooth gradient.
    const Index P = gram.rows();
    VectorXd beta = VectorXd::Zero(P);
    VectorXd r = xty;
    auto kkt = [&] {
        double worst = 0;
        for (Index i = 0; i < P; ++i) {
            double v;
            if (beta[i] != 0) v = std::abs(r[i] - lambda * (beta[i] > 0 ? 1.0 : -1.0));
            else v = std::max(std::abs(r[i]) - lambda, 0.0);
            if (gram(i, i) <= 0) v = 0;
            worst = std::max(worst, v);
        }
        return worst;
    };
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (Index i = 0; i < P; ++i) {
            const double gii = gram(i, i);
            if (gii <= 0) continue;
            const double z = r[i] + gii * beta[i];
            const double b = soft_threshold(z, lambda) / gii;
            const double delta = b - beta[i];
            if (delta != 0) {
                r.noalias() -= gram.col(i) * delta;
                beta[i] = b;
            }
        }
        if (kkt() <= tol) break;
    }
    return beta;
}


IndLasso ind_lasso(const MatrixXd& x, const MatrixXd& y, double lambda, double tol, int max_sweeps)
{
    if (x.rows() < 2) throw std::invalid_argument("ind_lasso: need at least two training samples");
    if (y.rows() != x.rows()) throw std::invalid_argument("ind_lasso: histories and targets differ in sample count");
    const double n = static_cast<double>(x.rows());
    const MatrixXd gram = x.transpose() * x / n;
    const MatrixXd xty = x.transpose() * y / n;
    IndLasso out;
    out.lambda = lambda;
    out.coef.resize(y.cols(), x.cols());
    for (Index j = 0; j < y.cols(); ++j) out.coef.row(j) = lasso_cd(gram, xty.col(j), lambda, tol, max_sweeps).transpose();
    return out;
}

} // namespace tcov
