#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tcov {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Mode sizes of a tensor, mode 0 first.
using Dims = std::vector<Index>;

Index product(std::span<const Index> dims);

/// Order-K real array stored colexicographically: the first index varies
/// fastest, so the flat buffer is exactly vec(X).
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Dims dims);
    Tensor(Dims dims, VectorXd data);

    static Tensor from_matrix(const MatrixXd& m);

    const Dims& dims() const { return dims_; }
    Index order() const { return static_cast<Index>(dims_.size()); }
    Index dim(Index k) const { return dims_.at(static_cast<std::size_t>(k)); }
    Index size() const { return data_.size(); }

    const VectorXd& data() const { return data_; }
    VectorXd& data() { return data_; }

    double operator()(std::span<const Index> idx) const;
    double& operator()(std::span<const Index> idx);

    /// Reinterpret as a d_0 x (d/d_0) matrix. Order-1 tensors become a column.
    MatrixXd as_matrix() const;

private:
    Index offset(std::span<const Index> idx) const;

    Dims dims_;
    VectorXd data_;
};

VectorXd vec(const Tensor& x);
Tensor unvec(const VectorXd& v, Dims dims);

/// Mode-k matricization: d_k x (d/d_k), columns are mode-k fibers ordered
/// colexicographically over the remaining modes.
MatrixXd unfold(const Tensor& x, Index k);

/// Inverse of unfold for a tensor of the given dims.
Tensor fold(const MatrixXd& m, const Dims& dims, Index k);

/// X x_k M with M of size J x d_k.
Tensor mode_product(const Tensor& x, const MatrixXd& m, Index k);

// Raw-buffer variants used by the estimators on sample columns.
void mode_product_into(const double* in, const Dims& dims, const MatrixXd& m, Index k, double* out);
void unfold_into(const double* in, const Dims& dims, Index k, MatrixXd& out);

} // namespace tcov
