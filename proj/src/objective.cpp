#include <cmath>
#include <stdexcept>

#include "tensorcov/estimators.hpp"

namespace tcov {

namespace {

void check_factors(const Dims& dims, const std::vector<MatrixXd>& factors)
{
    if (factors.size() != dims.size()) throw std::invalid_argument("need one factor per tensor mode");
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (factors[k].rows() != dims[k] || factors[k].cols() != dims[k])
            throw std::invalid_argument("factor " + std::to_string(k) + " has the wrong size");
}

std::vector<MatrixXd> literal(const std::vector<MatrixXd>& per_mode)
{
    return std::vector<MatrixXd>(per_mode.rbegin(), per_mode.rend());
}

void check_penalties(const std::vector<double>& lambda, std::size_t K)
{
    if (lambda.size() != K && lambda.size() != 1) throw std::invalid_argument("need one penalty per mode");
}

double lam(const std::vector<double>& lambda, std::size_t k) { return lambda.size() == 1 ? lambda[0] : lambda[k]; }

// Y = ((+)_k A_k) Z, columnwise, factors per tensor mode.
MatrixXd kron_sum_apply(const Dims& dims, const std::vector<MatrixXd>& factors, const MatrixXd& z)
{
    MatrixXd y = MatrixXd::Zero(z.rows(), z.cols());
    VectorXd tmp(z.rows());
    for (Index c = 0; c < z.cols(); ++c)
        for (std::size_t k = 0; k < factors.size(); ++k) {
            mode_product_into(z.col(c).data(), dims, factors[k], static_cast<Index>(k), tmp.data());
            y.col(c) += tmp;
        }
    return y;
}

// Tensor of diagonal sums sum_k diag(A_k)[t_k].
VectorXd diagonal_sums(const Dims& dims, const std::vector<MatrixXd>& factors)
{
    const Index d = product(dims);
    VectorXd out = VectorXd::Zero(d);
    Index stride = 1;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        const Index dk = dims[k];
        for (Index t = 0; t < d; ++t) out[t] += factors[k](t / stride % dk, t / stride % dk);
        stride *= dk;
    }
    return out;
}

} // namespace

double tlasso_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors, const std::vector<double>& lambda,
                        bool penalize_diagonal)
{
    check_factors(s.dims(), factors);
    check_penalties(lambda, factors.size());
    const double d = static_cast<double>(s.dim());
    const StructuredMatrix omega = StructuredMatrix::from_modes(Structure::KronProduct, factors);
    double f = s.trace_product(omega);
    for (std::size_t k = 0; k < factors.size(); ++k) {
        Eigen::LLT<MatrixXd> llt(factors[k]);
        if (llt.info() != Eigen::Success) throw std::domain_error("tlasso objective: factor is not positive definite");
        const double m = d / static_cast<double>(factors[k].rows());
        f -= m * 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        f += m * lam(lambda, k) * l1_norm(factors[k], penalize_diagonal);
    }
    return f;
}

double teralasso_smooth(const std::vector<MatrixXd>& mode_traces, const std::vector<MatrixXd>& factors)
{
    if (mode_traces.size() != factors.size()) throw std::invalid_argument("teralasso: mode count mismatch");
    double f = 0;
    for (std::size_t k = 0; k < factors.size(); ++k) f += mode_traces[k].cwiseProduct(factors[k]).sum();
    return f - EigKronSum(literal(factors)).logdet();
}

std::vector<MatrixXd> teralasso_gradient(const std::vector<MatrixXd>& mode_traces, const std::vector<MatrixXd>& factors)
{
    const Index K = static_cast<Index>(factors.size());
    const EigKronSum eig(literal(factors));
    const VectorXd s = eig.spectrum();
    if (s.minCoeff() <= 0) throw std::domain_error("teralasso: Kronecker sum is not positive definite");
    const VectorXd inv = s.cwiseInverse();
    std::vector<MatrixXd> g(K);
    for (Index k = 0; k < K; ++k) g[k] = mode_traces[k] - eig.partial_trace_spectral(inv, K - 1 - k);
    return g;
}

double teralasso_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors,
                           const std::vector<double>& lambda, bool penalize_diagonal)
{
    check_factors(s.dims(), factors);
    check_penalties(lambda, factors.size());
    std::vector<MatrixXd> traces;
    for (std::size_t k = 0; k < factors.size(); ++k) traces.push_back(s.mode_trace(static_cast<Index>(k)));
    double f = teralasso_smooth(traces, factors);
    const double d = static_cast<double>(s.dim());
    for (std::size_t k = 0; k < factors.size(); ++k)
        f += d / static_cast<double>(factors[k].rows()) * lam(lambda, k) * l1_norm(factors[k], penalize_diagonal);
    return f;
}

double sg_palm_smooth(const SecondMoments& s, const std::vector<MatrixXd>& factors)
{
    check_factors(s.dims(), factors);
    const MatrixXd y = kron_sum_apply(s.dims(), factors, s.z());
    const VectorXd ds = diagonal_sums(s.dims(), factors);
    if (ds.minCoeff() <= 0) throw std::domain_error("sg_palm: diagonal Kronecker sum is not positive");
    return y.squaredNorm() - ds.array().log().sum();
}

std::vector<MatrixXd> sg_palm_gradient(const SecondMoments& s, const std::vector<MatrixXd>& factors)
{
    check_factors(s.dims(), factors);
    const Dims& dims = s.dims();
    const Index K = static_cast<Index>(dims.size());
    const MatrixXd y = kron_sum_apply(dims, factors, s.z());
    const VectorXd inv = diagonal_sums(dims, factors).cwiseInverse();
    std::vector<MatrixXd> g(K);
    MatrixXd uz, uy, uinv;
    for (Index k = 0; k < K; ++k) {
        MatrixXd acc = MatrixXd::Zero(dims[k], dims[k]);
        for (Index c = 0; c < s.rank(); ++c) {
            unfold_into(s.z().col(c).data(), dims, k, uz);
            unfold_into(y.col(c).data(), dims, k, uy);
            acc.noalias() += uz * uy.transpose();
        }
        g[k] = acc + acc.transpose();
        unfold_into(inv.data(), dims, k, uinv);
        g[k].diagonal() -= uinv.rowwise().sum();
    }
    return g;
}

double sg_palm_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors, const std::vector<double>& lambda,
                         bool penalize_diagonal)
{
    check_penalties(lambda, factors.size());
    double f = sg_palm_smooth(s, factors);
    for (std::size_t k = 0; k < factors.size(); ++k) f += lam(lambda, k) * l1_norm(factors[k], penalize_diagonal);
    return f;
}

double objective(Method method, const StructuredMatrix& model, const SecondMoments& s,
                 const std::vector<double>& lambda, bool penalize_diagonal)
{
    auto need = [&](Structure st) {
        if (model.structure() != st)
            throw std::invalid_argument("objective: model structure " + std::string(to_string(model.structure())) +
                                        " does not match method " + std::string(to_string(method)));
    };
    const std::vector<MatrixXd> per_mode(model.factors().rbegin(), model.factors().rend());
    switch (method) {
    case Method::Glasso:
        need(Structure::Dense);
        if (lambda.empty()) throw std::invalid_argument("objective: missing penalty");
        return glasso_objective(s.dense(), model.dense_matrix(), lambda[0], penalize_diagonal);
    case Method::Tlasso:
        need(Structure::KronProduct);
        return tlasso_objective(s, per_mode, lambda, penalize_diagonal);
    case Method::TeraLasso:
        need(Structure::KronSum);
        return teralasso_objective(s, per_mode, lambda, penalize_diagonal);
    case Method::SgPalm:
        need(Structure::SquaredKronSum);
        return sg_palm_objective(s, per_mode, lambda, penalize_diagonal);
    case Method::KpLs:
    case Method::Kpca: break;
    }
    throw std::invalid_argument("objective: no likelihood objective for covariance-matching methods");
}

} // namespace tcov
