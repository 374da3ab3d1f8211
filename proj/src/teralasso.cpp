#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tensorcov/estimators.hpp"

namespace tcov {

namespace {

// Shift factor diagonals so every factor has mean diagonal tau/K. The Kronecker
// sum is unchanged.
void balance_diagonals(std::vector<MatrixXd>& f)
{
    const double K = static_cast<double>(f.size());
    double tau = 0;
    std::vector<double> mu;
    for (const auto& a : f) {
        mu.push_back(a.trace() / static_cast<double>(a.rows()));
        tau += mu.back();
    }
    for (std::size_t k = 0; k < f.size(); ++k) f[k].diagonal().array() += tau / K - mu[k];
}

double penalty(const std::vector<MatrixXd>& f, const std::vector<double>& weights, bool diag)
{
    double p = 0;
    for (std::size_t k = 0; k < f.size(); ++k) p += weights[k] * l1_norm(f[k], diag);
    return p;
}

} // namespace

FitResult teralasso(const SecondMoments& s, const EstimatorConfig& cfg)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const Dims& dims = s.dims();
    const Index K = static_cast<Index>(dims.size());
    if (K < 2) throw std::invalid_argument("teralasso needs at least two modes");
    if (cfg.lambda.size() != 1 && static_cast<Index>(cfg.lambda.size()) != K)
        throw std::invalid_argument("teralasso: need one penalty per mode");
    const double d = static_cast<double>(s.dim());
    std::vector<double> m(K), lambda(K), weight(K);
    for (Index k = 0; k < K; ++k) {
        m[k] = d / static_cast<double>(dims[k]);
        lambda[k] = cfg.lambda_for(k);
        weight[k] = m[k] * lambda[k];
    }
    std::vector<MatrixXd> traces;
    for (Index k = 0; k < K; ++k) traces.push_back(s.mode_trace(k));

    std::vector<MatrixXd> psi;
    if (cfg.init == InitPolicy::Warm) {
        psi = cfg.warm->factors;
        if (static_cast<Index>(psi.size()) != K) throw std::invalid_argument("warm start has the wrong number of factors");
    } else if (cfg.init == InitPolicy::Diagonal) {
        // A scalar start matched to the average variance.
        const double c = 1.0 / std::max(s.trace() / d, 1e-12) / static_cast<double>(K);
        for (Index k = 0; k < K; ++k) psi.push_back(c * MatrixXd::Identity(dims[k], dims[k]));
    } else {
        for (Index k = 0; k < K; ++k) psi.push_back(MatrixXd::Identity(dims[k], dims[k]));
    }
    for (auto& p : psi) p = symmetrize(p);

    FitResult out;
    out.method = Method::TeraLasso;
    double smooth = teralasso_smooth(traces, psi);
    double f = smooth + penalty(psi, weight, cfg.penalize_diagonal);
    out.objective_trace.push_back(f);

    double t = 1.0;
    std::vector<MatrixXd> next(K);
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        const std::vector<MatrixXd> g = teralasso_gradient(traces, psi);
        t = std::min(2.0 * t, 1e6);
        bool accepted = false;
        double smooth_next = 0;
        for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
            double lin = 0, quad = 0, min_eig = 0;
            for (Index k = 0; k < K; ++k) {
                next[k] = psi[k] - (t / m[k]) * g[k];
                const double thr = t * lambda[k];
                for (Index j = 0; j < dims[k]; ++j)
                    for (Index i = 0; i < dims[k]; ++i)
                        if (i != j || cfg.penalize_diagonal) next[k](i, j) = soft_threshold(next[k](i, j), thr);
                next[k] = symmetrize(next[k]);
                const MatrixXd delta = next[k] - psi[k];
                lin += g[k].cwiseProduct(delta).sum();
                quad += m[k] * delta.squaredNorm();
            }
            std::vector<MatrixXd> lit(next.rbegin(), next.rend());
            EigKronSum eig(lit);
            min_eig = eig.min_eigenvalue();
            if (!(min_eig > 0)) continue;
            smooth_next = 0;
            for (Index k = 0; k < K; ++k) smooth_next += traces[k].cwiseProduct(next[k]).sum();
            smooth_next -= eig.logdet();
            if (smooth_next <= smooth + lin + quad / (2 * t) + 1e-12 * std::abs(smooth)) {
                accepted = true;
                break;
            }
        }
        out.iterations = iter;
        if (!accepted) {
            out.warnings.push_back("step size search failed to keep the Kronecker sum positive definite");
            break;
        }
        psi = next;
        if (!cfg.penalize_diagonal) balance_diagonals(psi);
        smooth = smooth_next;
        const double fn = smooth + penalty(psi, weight, cfg.penalize_diagonal);
        out.objective_trace.push_back(fn);
        const bool small = std::abs(f - fn) <= cfg.tol * std::max(1.0, std::abs(fn));
        f = fn;
        if (small) {
            out.converged = true;
            break;
        }
        if (cfg.time_limit_seconds > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > cfg.time_limit_seconds)
            break;
    }
    out.model = StructuredMatrix::from_modes(Structure::KronSum, psi);
    out.factors.factors = std::move(psi);
    out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

} // namespace tcov
