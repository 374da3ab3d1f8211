#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tensorcov/estimators.hpp"

namespace tcov {

namespace {

constexpr double kDiagFloor = 1e-8;
constexpr double kShrink = 0.5;
constexpr double kSufficient = 1e-4;
constexpr int kMaxHalvings = 50;

struct PalmState {
    Dims dims;
    std::vector<MatrixXd> a;  // per tensor mode
    MatrixXd y;               // ((+)A) Z
    VectorXd dsum;            // sum_k diag(A_k)[t_k] over tensor positions
};

VectorXd broadcast_diag(const Dims& dims, Index k, const VectorXd& v)
{
    const Index d = product(dims);
    Index stride = 1;
    for (Index j = 0; j < k; ++j) stride *= dims[j];
    VectorXd out(d);
    for (Index t = 0; t < d; ++t) out[t] = v[t / stride % dims[k]];
    return out;
}

MatrixXd block_gradient(const SecondMoments& s, const PalmState& st, Index k)
{
    const Index dk = st.dims[k];
    MatrixXd acc = MatrixXd::Zero(dk, dk), uz, uy, uinv;
    for (Index c = 0; c < s.rank(); ++c) {
        unfold_into(s.z().col(c).data(), st.dims, k, uz);
        unfold_into(st.y.col(c).data(), st.dims, k, uy);
        acc.noalias() += uz * uy.transpose();
    }
    MatrixXd g = acc + acc.transpose();
    const VectorXd inv = st.dsum.cwiseInverse();
    unfold_into(inv.data(), st.dims, k, uinv);
    g.diagonal() -= uinv.rowwise().sum();
    return g;
}

// Shift diagonals to a common mean; neutral for the objective when the
// diagonal is unpenalized. Skipped if it would push an entry below the floor.
void balance(PalmState& st)
{
    const double K = static_cast<double>(st.a.size());
    double tau = 0;
    std::vector<double> mu;
    for (const auto& a : st.a) {
        mu.push_back(a.diagonal().mean());
        tau += mu.back();
    }
    for (std::size_t k = 0; k < st.a.size(); ++k)
        if (st.a[k].diagonal().minCoeff() + tau / K - mu[k] <= kDiagFloor) return;
    for (std::size_t k = 0; k < st.a.size(); ++k) st.a[k].diagonal().array() += tau / K - mu[k];
}

} // namespace

FitResult sg_palm(const SecondMoments& s, const EstimatorConfig& cfg)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const Dims& dims = s.dims();
    const Index K = static_cast<Index>(dims.size());
    if (K < 2) throw std::invalid_argument("sg_palm needs at least two modes");
    if (cfg.lambda.size() != 1 && static_cast<Index>(cfg.lambda.size()) != K)
        throw std::invalid_argument("sg_palm: need one penalty per mode");
    std::vector<double> lambda(K);
    for (Index k = 0; k < K; ++k) lambda[k] = cfg.lambda_for(k);

    PalmState st;
    st.dims = dims;
    if (cfg.init == InitPolicy::Warm) {
        st.a = cfg.warm->factors;
        if (static_cast<Index>(st.a.size()) != K) throw std::invalid_argument("warm start has the wrong number of factors");
    } else if (cfg.init == InitPolicy::Diagonal) {
        // scalar start minimizing the unpenalized objective along c * I
        const double c = 1.0 / std::sqrt(2.0 * std::max(s.trace() / static_cast<double>(s.dim()), 1e-12)) /
                         static_cast<double>(K);
        for (Index k = 0; k < K; ++k) st.a.push_back(c * MatrixXd::Identity(dims[k], dims[k]));
    } else {
        for (Index k = 0; k < K; ++k) st.a.push_back(MatrixXd::Identity(dims[k], dims[k]));
    }
    for (auto& a : st.a) {
        a = symmetrize(a);
        if (a.diagonal().minCoeff() <= kDiagFloor) throw std::domain_error("sg_palm: initial diagonal is not positive");
    }
    st.y = MatrixXd::Zero(s.dim(), s.rank());
    {
        VectorXd tmp(s.dim());
        for (Index c = 0; c < s.rank(); ++c)
            for (Index k = 0; k < K; ++k) {
                mode_product_into(s.z().col(c).data(), dims, st.a[k], k, tmp.data());
                st.y.col(c) += tmp;
            }
    }
    st.dsum = VectorXd::Zero(s.dim());
    for (Index k = 0; k < K; ++k) st.dsum += broadcast_diag(dims, k, st.a[k].diagonal());

    auto pen = [&](Index k, const MatrixXd& a) { return lambda[k] * l1_norm(a, cfg.penalize_diagonal); };
    double penalty = 0;
    for (Index k = 0; k < K; ++k) penalty += pen(k, st.a[k]);
    double f = st.y.squaredNorm() - st.dsum.array().log().sum() + penalty;

    FitResult out;
    out.method = Method::SgPalm;
    out.objective_trace.push_back(f);
    std::vector<double> step(K, 1.0);
    MatrixXd ynext(s.dim(), s.rank());
    VectorXd tmp(s.dim());
    bool failed = false;

    for (int iter = 1; iter <= cfg.max_iter && !failed; ++iter) {
        const double f_sweep = f;
        for (Index k = 0; k < K; ++k) {
            const MatrixXd g = block_gradient(s, st, k);
            double t = iter == 1 ? 1.0 : std::min(1.0, step[k] / kShrink);
            bool accepted = false;
            for (int h = 0; h <= kMaxHalvings; ++h, t *= kShrink) {
                MatrixXd an = st.a[k] - t * g;
                const double thr = t * lambda[k];
                for (Index j = 0; j < dims[k]; ++j)
                    for (Index i = 0; i < dims[k]; ++i)
                        if (i != j || cfg.penalize_diagonal) an(i, j) = soft_threshold(an(i, j), thr);
                an = symmetrize(an);
                if (an.diagonal().minCoeff() <= kDiagFloor) continue;
                const MatrixXd delta = an - st.a[k];
                const VectorXd dn = st.dsum + broadcast_diag(dims, k, delta.diagonal());
                if (dn.minCoeff() <= 0) continue;
                ynext = st.y;
                for (Index c = 0; c < s.rank(); ++c) {
                    mode_product_into(s.z().col(c).data(), dims, delta, k, tmp.data());
                    ynext.col(c) += tmp;
                }
                const double pn = penalty - pen(k, st.a[k]) + pen(k, an);
                const double fn = ynext.squaredNorm() - dn.array().log().sum() + pn;
                if (fn <= f - kSufficient / (2 * t) * delta.squaredNorm()) {
                    st.a[k] = std::move(an);
                    st.y.swap(ynext);
                    st.dsum = dn;
                    penalty = pn;
                    f = fn;
                    step[k] = t;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) {
                out.warnings.push_back("line search failed on mode " + std::to_string(k));
                failed = true;
                break;
            }
        }
        if (!cfg.penalize_diagonal) balance(st);
        out.objective_trace.push_back(f);
        out.iterations = iter;
        if (failed) break;
        if (std::abs(f_sweep - f) <= cfg.tol * std::max(1.0, std::abs(f))) {
            out.converged = true;
            break;
        }
        if (cfg.time_limit_seconds > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > cfg.time_limit_seconds)
            break;
    }
    // The objective weights the diagonal log-det once where the Gaussian
    // likelihood of the Sylvester model weights it twice; its minimizer is the
    // likelihood-weighted one divided by sqrt(2), so undo that in the model.
    std::vector<MatrixXd> calibrated = st.a;
    for (auto& a : calibrated) a *= std::sqrt(2.0);
    out.model = StructuredMatrix::from_modes(Structure::SquaredKronSum, calibrated);
    out.factors.factors = std::move(st.a);
    out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

} // namespace tcov
