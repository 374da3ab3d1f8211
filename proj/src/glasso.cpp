#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "tensorcov/estimators.hpp"

namespace tcov {

double soft_threshold(double x, double t)
{
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

double l1_norm(const MatrixXd& m, bool include_diagonal)
{
    double s = m.cwiseAbs().sum();
    if (!include_diagonal) s -= m.diagonal().cwiseAbs().sum();
    return s;
}

namespace {

// Returns false when m is not positive definite.
bool chol_logdet(const MatrixXd& m, double& logdet, Eigen::LLT<MatrixXd>* keep = nullptr)
{
    Eigen::LLT<MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) return false;
    const auto diag = llt.matrixLLT().diagonal();
    if ((diag.array() <= 0).any()) return false;
    logdet = 2.0 * diag.array().log().sum();
    if (keep) *keep = std::move(llt);
    return true;
}

// ADMM on the split X = Z with an exact eigen X-update. Its rate does not
// degrade with the conditioning of S the way the coordinate sweeps do, so it
// supplies a start point in the dense regime. Returns a positive definite
// iterate, or an empty matrix.
MatrixXd admm_start(const MatrixXd& s, const MatrixXd& x0, double lambda, bool penalize_diagonal, double target,
                    double seconds_left)
{
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const Index d = s.rows();
    MatrixXd z = x0, u = MatrixXd::Zero(d, d), x(d, d), zold(d, d);
    double rho = 1.0;
    MatrixXd best;
    for (int it = 1; it <= 1000; ++it) {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(rho * (z - u) - s);
        const VectorXd mu = es.eigenvalues();
        const VectorXd xe = (mu.array() + (mu.array().square() + 4 * rho).sqrt()) / (2 * rho);
        x.noalias() = es.eigenvectors() * xe.asDiagonal() * es.eigenvectors().transpose();
        zold = z;
        z = x + u;
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < d; ++i)
                if (i != j || penalize_diagonal) z(i, j) = soft_threshold(z(i, j), lambda / rho);
        u += x - z;
        const double r = (x - z).norm(), sd = rho * (z - zold).norm();
        if (r > 10 * sd) {
            rho *= 2;
            u /= 2;
        } else if (sd > 10 * r) {
            rho /= 2;
            u *= 2;
        }
        if (it % 25 != 0) continue;
        const MatrixXd zs = symmetrize(z);
        Eigen::LLT<MatrixXd> llt(zs);
        if (llt.info() == Eigen::Success) {
            best = zs;
            const MatrixXd w = llt.solve(MatrixXd::Identity(d, d));
            if (glasso_kkt_residual(s, zs, w, lambda, penalize_diagonal) <= target) break;
        }
        if (seconds_left > 0 && std::chrono::duration<double>(clock::now() - start).count() > seconds_left) break;
    }
    return best;
}

} // namespace

double glasso_objective(const MatrixXd& s, const MatrixXd& x, double lambda, bool penalize_diagonal)
{
    double ld = 0;
    if (!chol_logdet(x, ld)) throw std::domain_error("glasso objective: precision is not positive definite");
    return (s.cwiseProduct(x)).sum() - ld + lambda * l1_norm(x, penalize_diagonal);
}

double glasso_kkt_residual(const MatrixXd& s, const MatrixXd& x, const MatrixXd& w, double lambda,
                           bool penalize_diagonal)
{
    const Index d = s.rows();
    double worst = 0;
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < d; ++i) {
            const double g = s(i, j) - w(i, j);
            const double lam = (i == j && !penalize_diagonal) ? 0.0 : lambda;
            double v;
            if (x(i, j) != 0) v = std::abs(g + lam * (x(i, j) > 0 ? 1.0 : -1.0));
            else v = std::max(std::abs(g) - lam, 0.0);
            worst = std::max(worst, v);
        }
    return worst;
}

GlassoSolution glasso_solve(const MatrixXd& s_in, double lambda, const GlassoOptions& opt)
{
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    if (s_in.rows() != s_in.cols() || s_in.rows() == 0) throw std::invalid_argument("glasso: S must be square");
    if (!(lambda >= 0)) throw std::invalid_argument("glasso: lambda must be nonnegative");
    if (!s_in.allFinite()) throw std::invalid_argument("glasso: S has non-finite entries");
    if (!is_symmetric(s_in, 1e-8)) throw std::invalid_argument("glasso: S is not symmetric");
    const MatrixXd s = symmetrize(s_in);
    const Index d = s.rows();
    const double scale = std::max(1.0, s.diagonal().cwiseAbs().maxCoeff());
    {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-8 * scale) throw std::domain_error("glasso: S is not positive semidefinite");
    }
    auto lam = [&](Index i, Index j) { return (i == j && !opt.penalize_diagonal) ? 0.0 : lambda; };

    GlassoSolution out;
    MatrixXd x;
    if (opt.warm) {
        x = symmetrize(*opt.warm);
    } else if (opt.diagonal_init) {
        x = MatrixXd::Zero(d, d);
        for (Index i = 0; i < d; ++i) x(i, i) = 1.0 / std::max(s(i, i) + lam(i, i), 1e-12);
    } else {
        x = MatrixXd::Identity(d, d);
    }
    Eigen::LLT<MatrixXd> llt;
    double ld = 0;
    if (!chol_logdet(x, ld, &llt)) throw std::domain_error("glasso: initial precision is not positive definite");
    double f = (s.cwiseProduct(x)).sum() - ld + lambda * l1_norm(x, opt.penalize_diagonal);
    {
        // The ridge inverse is near the optimum when the penalty is small and
        // S ill conditioned, where Newton from a diagonal start is heavily damped.
        MatrixXd ridge = s;
        ridge.diagonal().array() += std::max(lambda, 1e-8 * scale);
        Eigen::LLT<MatrixXd> rl(ridge);
        if (rl.info() == Eigen::Success) {
            MatrixXd xr = symmetrize(rl.solve(MatrixXd::Identity(d, d)));
            Eigen::LLT<MatrixXd> llt_r;
            double ldr = 0;
            if (chol_logdet(xr, ldr, &llt_r)) {
                const double fr = (s.cwiseProduct(xr)).sum() - ldr + lambda * l1_norm(xr, opt.penalize_diagonal);
                if (fr < f) {
                    x = std::move(xr);
                    f = fr;
                    llt = std::move(llt_r);
                }
            }
        }
    }
    MatrixXd w = llt.solve(MatrixXd::Identity(d, d));
    if (d >= 64) {
        Index free_pairs = 0;
        const MatrixXd g0 = s - w;
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i < j; ++i)
                if (x(i, j) != 0 || std::abs(g0(i, j)) > lambda) ++free_pairs;
        const double target = 10 * opt.tol * scale;
        if (4 * free_pairs >= d * (d - 1) / 2 && glasso_kkt_residual(s, x, w, lambda, opt.penalize_diagonal) > target) {
            double left = 0;
            if (opt.time_limit_seconds > 0)
                left = std::max(1e-3, opt.time_limit_seconds - std::chrono::duration<double>(clock::now() - start).count());
            MatrixXd xa = admm_start(s, x, lambda, opt.penalize_diagonal, target, left);
            Eigen::LLT<MatrixXd> llt_a;
            double lda = 0;
            if (xa.size() && chol_logdet(xa, lda, &llt_a)) {
                const double fa = (s.cwiseProduct(xa)).sum() - lda + lambda * l1_norm(xa, opt.penalize_diagonal);
                if (fa < f) {
                    x = std::move(xa);
                    f = fa;
                    llt = std::move(llt_a);
                    w = llt.solve(MatrixXd::Identity(d, d));
                }
            }
        }
    }
    out.objective_trace.push_back(f);

    MatrixXd D(d, d), V(d, d);
    std::vector<std::pair<Index, Index>> active;
    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        const MatrixXd g = s - w;
        out.kkt = glasso_kkt_residual(s, x, w, lambda, opt.penalize_diagonal);
        if (out.kkt <= opt.tol * scale) {
            out.converged = true;
            break;
        }
        active.clear();
        for (Index j = 0; j < d; ++j)
            for (Index i = 0; i <= j; ++i)
                if (i == j || x(i, j) != 0 || std::abs(g(i, j)) > lam(i, j)) active.emplace_back(i, j);

        // Newton direction from coordinate descent on the quadratic model.
        D.setZero();
        V.setZero();  // V = W D, so (W D W)_ij = V.row(i) . W.col(j)
        // Sweep until the largest coordinate move is small next to the first
        // sweep's, so late outer iterations get an accurate Newton direction.
        const int sweeps = std::min(5 + 2 * iter, 60);
        double first_move = 0;
        for (int sw = 0; sw < sweeps; ++sw) {
            double move = 0;
            for (const auto& [i, j] : active) {
                const double wdw = V.row(i).dot(w.col(j));
                if (i == j) {
                    const double a = w(i, i) * w(i, i);
                    const double b = s(i, i) - w(i, i) + wdw;
                    const double c = x(i, i) + D(i, i);
                    const double mu = -c + soft_threshold(c - b / a, lam(i, i) / a);
                    move = std::max(move, std::abs(mu));
                    if (mu != 0) {
                        D(i, i) += mu;
                        V.col(i) += mu * w.col(i);
                    }
                } else {
                    const double a = w(i, j) * w(i, j) + w(i, i) * w(j, j);
                    const double b = s(i, j) - w(i, j) + wdw;
                    const double c = x(i, j) + D(i, j);
                    const double mu = -c + soft_threshold(c - b / a, lam(i, j) / a);
                    move = std::max(move, std::abs(mu));
                    if (mu != 0) {
                        D(i, j) += mu;
                        D(j, i) += mu;
                        V.col(j) += mu * w.col(i);
                        V.col(i) += mu * w.col(j);
                    }
                }
            }
            if (sw == 0) first_move = move;
            if (move <= 1e-4 * first_move) break;
        }

        const double l1_old = l1_norm(x, opt.penalize_diagonal);
        const double delta =
            (g.cwiseProduct(D)).sum() + lambda * (l1_norm(x + D, opt.penalize_diagonal) - l1_old);
        if (!(delta < 0)) {
            // Model predicts no decrease; the iterate is optimal to working precision.
            out.converged = out.kkt <= 10 * opt.tol * scale;
            break;
        }
        double alpha = 1.0;
        bool accepted = false;
        MatrixXd xn;
        for (int ls = 0; ls < 60; ++ls, alpha *= 0.5) {
            xn = x + alpha * D;
            double ldn = 0;
            if (!chol_logdet(xn, ldn, &llt)) continue;
            const double fn = (s.cwiseProduct(xn)).sum() - ldn + lambda * l1_norm(xn, opt.penalize_diagonal);
            if (fn <= f + 1e-3 * alpha * delta) {
                f = fn;
                accepted = true;
                break;
            }
        }
        out.iterations = iter;
        if (!accepted) break;
        x = xn;
        w = llt.solve(MatrixXd::Identity(d, d));
        w = symmetrize(w);
        out.objective_trace.push_back(f);
        if (opt.time_limit_seconds > 0 &&
            std::chrono::duration<double>(clock::now() - start).count() > opt.time_limit_seconds)
            break;
    }
    if (!out.converged) out.kkt = glasso_kkt_residual(s, x, w, lambda, opt.penalize_diagonal);
    out.precision = std::move(x);
    out.covariance = std::move(w);
    return out;
}

FitResult glasso(const MatrixXd& s, double lambda, const EstimatorConfig& cfg)
{
    const auto start = std::chrono::steady_clock::now();
    GlassoOptions opt;
    opt.tol = cfg.tol;
    opt.max_iter = cfg.max_iter;
    opt.penalize_diagonal = cfg.penalize_diagonal;
    opt.time_limit_seconds = cfg.time_limit_seconds;
    opt.diagonal_init = cfg.init == InitPolicy::Diagonal;
    MatrixXd warm;
    if (cfg.init == InitPolicy::Warm) {
        if (!cfg.warm || cfg.warm->factors.size() != 1) throw std::invalid_argument("glasso: warm start needs one factor");
        warm = cfg.warm->factors.front();
        opt.warm = &warm;
    }
    GlassoSolution sol = glasso_solve(s, lambda, opt);
    FitResult r;
    r.method = Method::Glasso;
    r.objective_trace = std::move(sol.objective_trace);
    r.iterations = sol.iterations;
    r.converged = sol.converged;
    r.model = StructuredMatrix::dense(std::move(sol.precision));
    r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

} // namespace tcov
