#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tensorcov/evaluation.hpp"

namespace tcov {

namespace {

double clamp_log(double num, double den)
{
    if (!(den > 0)) throw std::domain_error("frob_error: truth has zero norm");
    if (num == 0) return kFrobErrorFloor;
    return std::max(std::log(num / den), kFrobErrorFloor);
}

} // namespace

double frob_error(const MatrixXd& est, const MatrixXd& truth)
{
    if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw std::invalid_argument("frob_error: size mismatch");
    return clamp_log((est - truth).norm(), truth.norm());
}

double frob_error(const StructuredMatrix& est, const MatrixXd& truth)
{
    if (est.size() != truth.rows() || truth.rows() != truth.cols()) throw std::invalid_argument("frob_error: size mismatch");
    if (est.structure() == Structure::Dense) return frob_error(est.dense_matrix(), truth);
    const Index d = truth.rows();
    double err2 = 0;
    VectorXd e = VectorXd::Zero(d);
    for (Index j = 0; j < d; ++j) {
        e[j] = 1;
        err2 += (est.apply(e) - truth.col(j)).squaredNorm();
        e[j] = 0;
    }
    return clamp_log(std::sqrt(err2), truth.norm());
}

double frob_error(const StructuredMatrix& est, const SpMat& truth)
{
    if (est.size() != truth.rows() || truth.rows() != truth.cols()) throw std::invalid_argument("frob_error: size mismatch");
    const Index d = truth.rows();
    double err2 = 0;
    VectorXd e = VectorXd::Zero(d);
    for (Index j = 0; j < d; ++j) {
        e[j] = 1;
        VectorXd col = est.apply(e);
        for (SpMat::InnerIterator it(truth, j); it; ++it) col[it.row()] -= it.value();
        err2 += col.squaredNorm();
        e[j] = 0;
    }
    return clamp_log(std::sqrt(err2), truth.norm());
}

SupportPattern extract_support(const MatrixXd& m, double threshold)
{
    if (m.rows() != m.cols()) throw std::invalid_argument("extract_support: matrix must be square");
    SupportPattern sp;
    sp.dim = m.rows();
    sp.threshold = threshold;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < j; ++i)
            if (std::abs(m(i, j)) > threshold || std::abs(m(j, i)) > threshold) sp.pairs.emplace(i, j);
    return sp;
}

SupportPattern extract_support(const SpMat& m, double threshold)
{
    if (m.rows() != m.cols()) throw std::invalid_argument("extract_support: matrix must be square");
    SupportPattern sp;
    sp.dim = m.rows();
    sp.threshold = threshold;
    for (Index j = 0; j < m.outerSize(); ++j)
        for (SpMat::InnerIterator it(m, j); it; ++it)
            if (it.row() != it.col() && std::abs(it.value()) > threshold)
                sp.pairs.emplace(std::min(it.row(), it.col()), std::max(it.row(), it.col()));
    return sp;
}

MccResult mcc_from_counts(Index tp, Index tn, Index fp, Index fn)
{
    MccResult r{0, false, tp, tn, fp, fn};
    const double a = static_cast<double>(tp + fp), b = static_cast<double>(tp + fn);
    const double c = static_cast<double>(tn + fp), d = static_cast<double>(tn + fn);
    const double den = std::sqrt(a) * std::sqrt(b) * std::sqrt(c) * std::sqrt(d);
    if (den == 0) {
        r.degenerate = true;
        return r;
    }
    r.value = (static_cast<double>(tp) * static_cast<double>(tn) - static_cast<double>(fp) * static_cast<double>(fn)) / den;
    return r;
}

MccResult mcc_detail(const SupportPattern& est, const SupportPattern& truth)
{
    if (est.dim != truth.dim) throw std::invalid_argument("mcc: support dimensions differ");
    const Index total = truth.dim * (truth.dim - 1) / 2;
    Index tp = 0;
    for (const auto& p : est.pairs) tp += truth.pairs.count(p) ? 1 : 0;
    const Index fp = est.size() - tp;
    const Index fn = truth.size() - tp;
    const Index tn = total - tp - fp - fn;
    return mcc_from_counts(tp, tn, fp, fn);
}

double mcc(const SupportPattern& est, const SupportPattern& truth) { return mcc_detail(est, truth).value; }

double nrmse(const VectorXd& pred, const VectorXd& truth)
{
    if (pred.size() != truth.size() || truth.size() == 0) throw std::invalid_argument("nrmse: length mismatch");
    const double range = truth.maxCoeff() - truth.minCoeff();
    if (!(range > 0)) throw std::domain_error("nrmse: truth has zero range");
    const double rmse = std::sqrt((pred - truth).squaredNorm() / static_cast<double>(truth.size()));
    return rmse / range;
}

} // namespace tcov
