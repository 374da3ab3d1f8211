#pragma once

#include "tensorcov/io.hpp"
#include "tensorcov/kronecker.hpp"
#include "tensorcov/support.hpp"

namespace tcov {

inline constexpr double kFrobErrorFloor = -30.0;
inline constexpr double kSupportThreshold = 1e-6;

/// log(||est - truth||_F / ||truth||_F), clamped below at -30.
double frob_error(const MatrixXd& est, const MatrixXd& truth);
double frob_error(const StructuredMatrix& est, const MatrixXd& truth);
/// Column-by-column evaluation against a sparse truth; never forms est densely.
double frob_error(const StructuredMatrix& est, const SpMat& truth);

SupportPattern extract_support(const MatrixXd& m, double threshold = kSupportThreshold);
SupportPattern extract_support(const SpMat& m, double threshold = kSupportThreshold);

struct MccResult {
    double value = 0;
    bool degenerate = false;
    Index tp = 0, tn = 0, fp = 0, fn = 0;
};

MccResult mcc_from_counts(Index tp, Index tn, Index fp, Index fn);
/// Matthews correlation over the unordered off-diagonal pairs.
MccResult mcc_detail(const SupportPattern& est, const SupportPattern& truth);
double mcc(const SupportPattern& est, const SupportPattern& truth);

/// RMSE(pred, truth) / (max(truth) - min(truth)).
double nrmse(const VectorXd& pred, const VectorXd& truth);

// ---------------------------------------------------------------------------
// Forward linear prediction of the last time frame.

struct PredictorBlocks {
    MatrixXd omega_21;  // q x (p-1)q
    MatrixXd omega_22;  // q x q
    Index p = 0;
    Index q = 0;
};

/// Reorder vec(x) so the time mode is slowest and the other modes keep their
/// colexicographic order. Frames then occupy contiguous blocks of q entries.
VectorXd to_time_major(const VectorXd& v, const Dims& dims, Index time_mode);
std::vector<Index> time_major_permutation(const Dims& dims, Index time_mode);

/// Blocks of a precision matrix for predicting the last frame.
PredictorBlocks predictor_blocks(const MatrixXd& omega, const Dims& dims, Index time_mode);
/// Structured variant: only the q columns of the last frame are formed.
PredictorBlocks predictor_blocks(const StructuredMatrix& omega, const Dims& dims, Index time_mode);

/// y_hat = -Omega_22^{-1} Omega_21 history, history in time-major order.
VectorXd forward_predict(const PredictorBlocks& blocks, const VectorXd& history);
/// Omega already in time-major order with p frames of size q.
VectorXd forward_predict(const MatrixXd& omega, Index p, Index q, const VectorXd& history);

/// Separate l1-penalized least squares per output:
/// (1/2n) ||y_j - X b_j||^2 + lambda ||b_j||_1.
struct IndLasso {
    MatrixXd coef;  // outputs x features
    double lambda = 0;
    VectorXd predict(const VectorXd& history) const { return coef * history; }
};

/// histories: n x P, targets: n x q (one row per training sample).
IndLasso ind_lasso(const MatrixXd& histories, const MatrixXd& targets, double lambda, double tol = 1e-6,
                   int max_sweeps = 10000);
/// Coordinate descent for one response; exposed for testing.
VectorXd lasso_cd(const MatrixXd& gram, const VectorXd& xty, double lambda, double tol, int max_sweeps);
double lasso_objective(const MatrixXd& x, const VectorXd& y, const VectorXd& beta, double lambda);

} // namespace tcov
