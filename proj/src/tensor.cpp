#include "tensorcov/tensor.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

namespace tcov {

Index product(std::span<const Index> dims)
{
    Index p = 1;
    for (Index d : dims) p *= d;
    return p;
}

namespace {

void check_dims(const Dims& dims)
{
    if (dims.empty()) throw std::invalid_argument("tensor needs at least one mode");
    for (Index d : dims)
        if (d <= 0) throw std::invalid_argument("tensor mode sizes must be positive");
}

// Sizes of the blocks before and after mode k.
std::pair<Index, Index> split(const Dims& dims, Index k)
{
    if (k < 0 || k >= static_cast<Index>(dims.size()))
        throw std::out_of_range("mode index " + std::to_string(k) + " out of range");
    Index left = 1, right = 1;
    for (Index j = 0; j < k; ++j) left *= dims[j];
    for (Index j = k + 1; j < static_cast<Index>(dims.size()); ++j) right *= dims[j];
    return {left, right};
}

} // namespace

Tensor::Tensor(Dims dims) : dims_(std::move(dims))
{
    check_dims(dims_);
    data_ = VectorXd::Zero(product(dims_));
}

Tensor::Tensor(Dims dims, VectorXd data) : dims_(std::move(dims)), data_(std::move(data))
{
    check_dims(dims_);
    if (data_.size() != product(dims_))
        throw std::invalid_argument("tensor data length does not match dims");
}

Tensor Tensor::from_matrix(const MatrixXd& m)
{
    return Tensor({m.rows(), m.cols()}, Eigen::Map<const VectorXd>(m.data(), m.size()));
}

Index Tensor::offset(std::span<const Index> idx) const
{
    if (idx.size() != dims_.size()) throw std::invalid_argument("index arity mismatch");
    Index off = 0, stride = 1;
    for (std::size_t j = 0; j < dims_.size(); ++j) {
        if (idx[j] < 0 || idx[j] >= dims_[j]) throw std::out_of_range("tensor index out of range");
        off += idx[j] * stride;
        stride *= dims_[j];
    }
    return off;
}

double Tensor::operator()(std::span<const Index> idx) const { return data_[offset(idx)]; }
double& Tensor::operator()(std::span<const Index> idx) { return data_[offset(idx)]; }

MatrixXd Tensor::as_matrix() const
{
    const Index rows = dims_.front();
    return Eigen::Map<const MatrixXd>(data_.data(), rows, data_.size() / rows);
}

VectorXd vec(const Tensor& x) { return x.data(); }

Tensor unvec(const VectorXd& v, Dims dims) { return Tensor(std::move(dims), v); }

void unfold_into(const double* in, const Dims& dims, Index k, MatrixXd& out)
{
    const auto [left, right] = split(dims, k);
    const Index dk = dims[k];
    out.resize(dk, left * right);
    for (Index b = 0; b < right; ++b) {
        Eigen::Map<const MatrixXd> block(in + b * left * dk, left, dk);
        out.middleCols(b * left, left) = block.transpose();
    }
}

MatrixXd unfold(const Tensor& x, Index k)
{
    MatrixXd out;
    unfold_into(x.data().data(), x.dims(), k, out);
    return out;
}

Tensor fold(const MatrixXd& m, const Dims& dims, Index k)
{
    const auto [left, right] = split(dims, k);
    const Index dk = dims[k];
    if (m.rows() != dk || m.cols() != left * right)
        throw std::invalid_argument("fold: matrix shape does not match dims");
    Tensor out(dims);
    for (Index b = 0; b < right; ++b) {
        Eigen::Map<MatrixXd> block(out.data().data() + b * left * dk, left, dk);
        block = m.middleCols(b * left, left).transpose();
    }
    return out;
}

void mode_product_into(const double* in, const Dims& dims, const MatrixXd& m, Index k, double* out)
{
    const auto [left, right] = split(dims, k);
    const Index dk = dims[k];
    if (m.cols() != dk) throw std::invalid_argument("mode_product: matrix columns must equal d_k");
    const Index J = m.rows();
    for (Index b = 0; b < right; ++b) {
        Eigen::Map<const MatrixXd> src(in + b * left * dk, left, dk);
        Eigen::Map<MatrixXd> dst(out + b * left * J, left, J);
        dst.noalias() = src * m.transpose();
    }
}

Tensor mode_product(const Tensor& x, const MatrixXd& m, Index k)
{
    Dims out_dims = x.dims();
    if (k < 0 || k >= x.order()) throw std::out_of_range("mode index out of range");
    out_dims[k] = m.rows();
    Tensor out(out_dims);
    mode_product_into(x.data().data(), x.dims(), m, k, out.data().data());
    return out;
}

} // namespace tcov
