#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tensorcov/covariance.hpp"
#include "tensorcov/kronecker.hpp"

namespace tcov {

enum class Method { Glasso, KpLs, Kpca, Tlasso, TeraLasso, SgPalm };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);

enum class InitPolicy { Identity, Diagonal, Warm };

struct EstimatorConfig {
    std::vector<double> lambda;  // one per tensor mode; glasso and kpca read lambda[0]
    double tol = 1e-5;
    int max_iter = 500;
    double inner_tol = 1e-6;
    int inner_max_iter = 200;
    InitPolicy init = InitPolicy::Identity;
    std::optional<FactorSet> warm;  // per tensor mode, used when init == Warm
    bool penalize_diagonal = false;
    bool center = true;
    double time_limit_seconds = 0;  // 0 disables the wall-clock cap
    std::uint64_t seed = 0;

    void validate() const;
    double lambda_for(Index k) const;
};

struct FitResult {
    Method method = Method::Glasso;
    /// Fitted precision, or the fitted covariance for kp_ls / kpca.
    StructuredMatrix model;
    bool is_covariance = false;
    FactorSet factors;  // per tensor mode; empty for dense fits
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    double wall_time_seconds = 0;
    /// kpca only: sum_l A_l (x) B_l in literal Kronecker order.
    std::vector<std::pair<MatrixXd, MatrixXd>> kron_terms;
    Index rank = 0;
    std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// Graphical lasso on a dense second moment.

struct GlassoOptions {
    double tol = 1e-6;
    int max_iter = 200;
    bool penalize_diagonal = false;
    double time_limit_seconds = 0;
    const MatrixXd* warm = nullptr;
    bool diagonal_init = false;
};

struct GlassoSolution {
    MatrixXd precision;
    MatrixXd covariance;  // inverse of precision
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = false;
    double kkt = 0;
};

GlassoSolution glasso_solve(const MatrixXd& s, double lambda, const GlassoOptions& opt);
/// Largest subgradient violation of the glasso optimality conditions.
double glasso_kkt_residual(const MatrixXd& s, const MatrixXd& precision, const MatrixXd& covariance, double lambda,
                           bool penalize_diagonal);

FitResult glasso(const MatrixXd& s, double lambda, const EstimatorConfig& cfg);

// ---------------------------------------------------------------------------
// Kronecker product approximations of a covariance, K = 2. d1 and d2 are the
// literal Kronecker factor sizes, d1 being the slow index.

struct KpLsResult {
    MatrixXd a, b;
    double sigma1 = 0;
    double residual = 0;
};

KpLsResult kp_ls_factors(const MatrixXd& s, Index d1, Index d2);
FitResult kp_ls(const MatrixXd& s, Index d1, Index d2);
FitResult kpca(const MatrixXd& s, Index d1, Index d2, double lambda);
/// Same estimators computed from a factored second moment, never forming S.
FitResult kp_ls(const SecondMoments& s);
FitResult kpca(const SecondMoments& s, double lambda);

/// Dense sum of Kronecker terms.
MatrixXd materialize_terms(const std::vector<std::pair<MatrixXd, MatrixXd>>& terms);

// ---------------------------------------------------------------------------
// Tensor-structured precision estimators. lambdas are per tensor mode.

FitResult tlasso(const SecondMoments& s, const EstimatorConfig& cfg);
FitResult teralasso(const SecondMoments& s, const EstimatorConfig& cfg);
FitResult sg_palm(const SecondMoments& s, const EstimatorConfig& cfg);

FitResult tlasso(const Dataset& data, const EstimatorConfig& cfg);
FitResult teralasso(const Dataset& data, const EstimatorConfig& cfg);
FitResult sg_palm(const Dataset& data, const EstimatorConfig& cfg);

// ---------------------------------------------------------------------------
// Objectives, with factors per tensor mode and m_k = d / d_k.
//   glasso:    tr(S W) - logdet W + lambda |W|_1
//   tlasso:    tr(S (x)W) - sum_k m_k logdet W_k + sum_k m_k lambda_k |W_k|_1
//   teralasso: tr(S (+)P) - logdet (+)P + sum_k m_k lambda_k |P_k|_1
//   sg_palm:   tr(S ((+)A)^2) - logdet (+)diag(A) + sum_k lambda_k |A_k|_1
// The l1 norms skip the diagonal unless penalize_diagonal is set.

double l1_norm(const MatrixXd& m, bool include_diagonal);

double glasso_objective(const MatrixXd& s, const MatrixXd& precision, double lambda, bool penalize_diagonal = false);
double tlasso_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors, const std::vector<double>& lambda,
                        bool penalize_diagonal = false);
double teralasso_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors,
                           const std::vector<double>& lambda, bool penalize_diagonal = false);
double sg_palm_objective(const SecondMoments& s, const std::vector<MatrixXd>& factors, const std::vector<double>& lambda,
                         bool penalize_diagonal = false);

/// Dispatch on method; the model structure must match.
double objective(Method method, const StructuredMatrix& model, const SecondMoments& s,
                 const std::vector<double>& lambda, bool penalize_diagonal = false);

/// Gradients of the smooth parts with respect to each symmetric factor, as
/// the matrices G_k with d f = sum_k <G_k, dA_k> for symmetric dA_k.
std::vector<MatrixXd> teralasso_gradient(const std::vector<MatrixXd>& mode_traces,
                                         const std::vector<MatrixXd>& factors);
std::vector<MatrixXd> sg_palm_gradient(const SecondMoments& s, const std::vector<MatrixXd>& factors);
double teralasso_smooth(const std::vector<MatrixXd>& mode_traces, const std::vector<MatrixXd>& factors);
double sg_palm_smooth(const SecondMoments& s, const std::vector<MatrixXd>& factors);

// ---------------------------------------------------------------------------

/// Rate-guided penalties. Returns one value per tensor mode (a single value
/// for glasso and kpca).
std::vector<double> lambda_from_rate(Method method, const Dims& dims, Index N, double C);

double soft_threshold(double x, double t);

} // namespace tcov
