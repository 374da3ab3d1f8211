#pragma once

#include <vector>

#include "tensorcov/kronecker.hpp"

namespace tcov {

/// N observations of an order-K tensor, stored as the d x N matrix whose
/// columns are vec(x_n).
struct Dataset {
    Dims dims;
    MatrixXd samples;

    Index dim() const { return samples.rows(); }
    Index count() const { return samples.cols(); }
    Index order() const { return static_cast<Index>(dims.size()); }

    Tensor sample(Index n) const;

    static Dataset from_tensors(const std::vector<Tensor>& xs);
    /// Split an order-(K+1) tensor whose last mode indexes samples.
    static Dataset from_stacked(const Tensor& stacked);
    Tensor stacked() const;
};

/// Factored second moment S = Z Z^T. Every estimator touches S only through
/// partial traces and quadratic forms, so Z (d x m, m <= N) is enough.
class SecondMoments {
public:
    SecondMoments() = default;
    SecondMoments(Dims dims, MatrixXd z);

    /// Z = (X - mean) / sqrt(N), or X / sqrt(N) when center is false.
    static SecondMoments from_data(const Dataset& data, bool center = true);
    /// Z from the nonnegative eigenpairs of a dense PSD matrix.
    static SecondMoments from_dense(const MatrixXd& s, Dims dims);

    const Dims& dims() const { return dims_; }
    const MatrixXd& z() const { return z_; }
    Index dim() const { return z_.rows(); }
    Index rank() const { return z_.cols(); }

    MatrixXd dense(Index cap = 20000) const;
    double trace() const;

    /// Partial trace of S onto a tensor mode.
    MatrixXd mode_trace(Index mode) const;
    /// tr(S M) for a structured M.
    double trace_product(const StructuredMatrix& m) const;

    SecondMoments scaled(double c) const;

private:
    Dims dims_;
    MatrixXd z_;
};

/// S = (1/N) sum_n (x_n - m)(x_n - m)^T; m = 0 when center is false.
MatrixXd sample_covariance(const Dataset& data, bool center = true);

/// Mode-k sufficient statistic of the flip-flop update:
/// S_k = d_k/(N d) sum_n V_n V_n^T with V_n = unfold(x_n, k) (x)_{j != k} W_j^{1/2}^T.
/// whiteners are indexed by tensor mode; an empty list means identity. The
/// entry for mode k is ignored.
MatrixXd mode_gram(const SecondMoments& s, Index k, const std::vector<MatrixXd>& whiteners = {});
MatrixXd mode_gram(const Dataset& data, Index k, const std::vector<MatrixXd>& whiteners = {});

} // namespace tcov
