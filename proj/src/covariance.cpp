#include "tensorcov/covariance.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace tcov {

Tensor Dataset::sample(Index n) const
{
    if (n < 0 || n >= count()) throw std::out_of_range("sample index out of range");
    return Tensor(dims, samples.col(n));
}

Dataset Dataset::from_tensors(const std::vector<Tensor>& xs)
{
    if (xs.empty()) throw std::invalid_argument("dataset needs at least one sample");
    Dataset out;
    out.dims = xs.front().dims();
    out.samples.resize(xs.front().size(), static_cast<Index>(xs.size()));
    for (std::size_t n = 0; n < xs.size(); ++n) {
        if (xs[n].dims() != out.dims) throw std::invalid_argument("samples have different dims");
        out.samples.col(static_cast<Index>(n)) = xs[n].data();
    }
    return out;
}

Dataset Dataset::from_stacked(const Tensor& stacked)
{
    if (stacked.order() < 2) throw std::invalid_argument("stacked dataset needs a sample mode");
    Dataset out;
    out.dims.assign(stacked.dims().begin(), stacked.dims().end() - 1);
    const Index n = stacked.dims().back();
    out.samples = Eigen::Map<const MatrixXd>(stacked.data().data(), product(out.dims), n);
    return out;
}

Tensor Dataset::stacked() const
{
    Dims d = dims;
    d.push_back(count());
    return Tensor(d, Eigen::Map<const VectorXd>(samples.data(), samples.size()));
}

// ---------------------------------------------------------------------------

SecondMoments::SecondMoments(Dims dims, MatrixXd z) : dims_(std::move(dims)), z_(std::move(z))
{
    if (product(dims_) != z_.rows()) throw std::invalid_argument("second moments: dims do not match rows");
}

SecondMoments SecondMoments::from_data(const Dataset& data, bool center)
{
    if (data.count() == 0) throw std::invalid_argument("empty dataset");
    if (product(data.dims) != data.dim()) throw std::invalid_argument("dataset dims do not match rows");
    MatrixXd z = data.samples;
    if (center) z.colwise() -= z.rowwise().mean();
    z /= std::sqrt(static_cast<double>(data.count()));
    return SecondMoments(data.dims, std::move(z));
}

SecondMoments SecondMoments::from_dense(const MatrixXd& s, Dims dims)
{
    if (s.rows() != s.cols() || s.rows() != product(dims))
        throw std::invalid_argument("second moments: matrix does not match dims");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(s));
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    const VectorXd& lam = es.eigenvalues();
    const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
    if (lam.minCoeff() < -1e-10 * scale) throw std::domain_error("sample covariance is not positive semidefinite");
    std::vector<Index> keep;
    for (Index i = 0; i < lam.size(); ++i)
        if (lam[i] > 1e-14 * scale) keep.push_back(i);
    MatrixXd z(s.rows(), static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
        z.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]) * std::sqrt(lam[keep[c]]);
    return SecondMoments(std::move(dims), std::move(z));
}

MatrixXd SecondMoments::dense(Index cap) const
{
    if (dim() > cap) throw std::length_error("refusing to form a dense " + std::to_string(dim()) + "-square covariance");
    MatrixXd s = MatrixXd::Zero(dim(), dim());
    s.selfadjointView<Eigen::Lower>().rankUpdate(z_);
    return s.selfadjointView<Eigen::Lower>();
}

double SecondMoments::trace() const { return z_.squaredNorm(); }

MatrixXd SecondMoments::mode_trace(Index mode) const
{
    const Index dk = dims_.at(static_cast<std::size_t>(mode));
    MatrixXd out = MatrixXd::Zero(dk, dk);
    MatrixXd u;
    for (Index c = 0; c < rank(); ++c) {
        unfold_into(z_.col(c).data(), dims_, mode, u);
        out.selfadjointView<Eigen::Lower>().rankUpdate(u);
    }
    return out.selfadjointView<Eigen::Lower>();
}

double SecondMoments::trace_product(const StructuredMatrix& m) const
{
    if (m.size() != dim()) throw std::invalid_argument("trace_product: size mismatch");
    double t = 0;
    for (Index c = 0; c < rank(); ++c) {
        const VectorXd zc = z_.col(c);
        t += zc.dot(m.apply(zc));
    }
    return t;
}

SecondMoments SecondMoments::scaled(double c) const
{
    if (c < 0) throw std::domain_error("second moments can only be scaled by c >= 0");
    return SecondMoments(dims_, z_ * std::sqrt(c));
}

// ---------------------------------------------------------------------------

MatrixXd sample_covariance(const Dataset& data, bool center)
{
    return SecondMoments::from_data(data, center).dense();
}

MatrixXd mode_gram(const SecondMoments& s, Index k, const std::vector<MatrixXd>& whiteners)
{
    const Dims& dims = s.dims();
    const Index K = static_cast<Index>(dims.size());
    if (k < 0 || k >= K) throw std::out_of_range("mode_gram: mode out of range");
    if (!whiteners.empty() && static_cast<Index>(whiteners.size()) != K)
        throw std::invalid_argument("mode_gram: need one whitener per mode");
    const double scale = static_cast<double>(dims[k]) / static_cast<double>(s.dim());
    if (whiteners.empty()) return scale * s.mode_trace(k);

    std::vector<MatrixXd> roots(K);
    for (Index j = 0; j < K; ++j) {
        if (j == k) continue;
        if (whiteners[j].rows() != dims[j] || whiteners[j].cols() != dims[j])
            throw std::invalid_argument("mode_gram: whitener has the wrong size");
        roots[j] = psd_sqrt(whiteners[j]);
    }
    const Index dk = dims[k];
    MatrixXd out = MatrixXd::Zero(dk, dk);
    VectorXd cur(s.dim()), next(s.dim());
    MatrixXd u;
    for (Index c = 0; c < s.rank(); ++c) {
        cur = s.z().col(c);
        for (Index j = 0; j < K; ++j) {
            if (j == k) continue;
            mode_product_into(cur.data(), dims, roots[j], j, next.data());
            cur.swap(next);
        }
        unfold_into(cur.data(), dims, k, u);
        out.selfadjointView<Eigen::Lower>().rankUpdate(u);
    }
    return scale * MatrixXd(out.selfadjointView<Eigen::Lower>());
}

MatrixXd mode_gram(const Dataset& data, Index k, const std::vector<MatrixXd>& whiteners)
{
    return mode_gram(SecondMoments::from_data(data, false), k, whiteners);
}

} // namespace tcov
