#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "oracles.hpp"
#include "tensorcov/estimators.hpp"
#include "tensorcov/evaluation.hpp"
#include "tensorcov/generators.hpp"

using namespace tcov;

namespace {

double off_l1(const MatrixXd& m)
{
    double s = 0;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            if (i != j) s += std::abs(m(i, j));
    return s;
}

double glasso_obj(const MatrixXd& s, const MatrixXd& w, double lambda)
{
    return (s * w).trace() - oracle::logdet(w) + lambda * off_l1(w);
}

/// Proximal gradient with backtracking, run to stationarity.
MatrixXd glasso_oracle(const MatrixXd& s, double lambda)
{
    MatrixXd w = s.diagonal().cwiseInverse().asDiagonal();
    double t = 1;
    for (int it = 0; it < 200000; ++it) {
        const MatrixXd g = s - w.inverse();
        const double f = glasso_obj(s, w, 0.0);
        MatrixXd next;
        for (;;) {
            next = w - t * g;
            for (Index j = 0; j < w.cols(); ++j)
                for (Index i = 0; i < w.rows(); ++i)
                    if (i != j) next(i, j) = std::copysign(std::max(std::abs(next(i, j)) - t * lambda, 0.0), next(i, j));
            Eigen::LLT<MatrixXd> llt(next);
            if (llt.info() == Eigen::Success && glasso_obj(s, next, 0.0) <= f + 1e-15 + (g.array() * (next - w).array()).sum() + (next - w).squaredNorm() / (2 * t))
                break;
            t /= 2;
        }
        const double step = (next - w).norm();
        w = next;
        t *= 1.5;
        if (step < 1e-14) break;
    }
    return w;
}

std::vector<double> all(double v, std::size_t k) { return std::vector<double>(k, v); }

bool non_increasing(const std::vector<double>& tr)
{
    for (std::size_t i = 1; i < tr.size(); ++i)
        if (tr[i] > tr[i - 1] + 1e-9 * std::max(1.0, std::abs(tr[i - 1]))) return false;
    return true;
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

double rel_err(const MatrixXd& est, const MatrixXd& truth) { return (est - truth).norm() / truth.norm(); }

} // namespace

TEST_SUITE("glasso")
{
    TEST_CASE("identity is optimal for identity covariance")
    {
        EstimatorConfig cfg;
        cfg.lambda = {0.3};
        const FitResult r = glasso(MatrixXd::Identity(5, 5), 0.3, cfg);
        CHECK((r.model.dense_matrix() - MatrixXd::Identity(5, 5)).norm() < 1e-8);
        CHECK(r.converged);
    }

    TEST_CASE("full shrinkage gives the inverse diagonal")
    {
        oracle::Rng rng(1);
        const MatrixXd s = rng.spd(5);
        double lam = 0;
        for (Index j = 0; j < 5; ++j)
            for (Index i = 0; i < 5; ++i)
                if (i != j) lam = std::max(lam, std::abs(s(i, j)));
        EstimatorConfig cfg;
        cfg.lambda = {lam};
        cfg.tol = 1e-12;
        const MatrixXd w = glasso(s, lam, cfg).model.dense_matrix();
        CHECK((w - MatrixXd(s.diagonal().cwiseInverse().asDiagonal())).norm() < 1e-8);
    }

    TEST_CASE("matches a long-run proximal gradient oracle")
    {
        for (std::uint64_t seed = 2; seed < 5; ++seed) {
            oracle::Rng rng(seed);
            const MatrixXd s = rng.spd(4);
            const MatrixXd ref = glasso_oracle(s, 0.1);
            GlassoOptions opt;
            opt.tol = 1e-9;
            const GlassoSolution sol = glasso_solve(s, 0.1, opt);
            CHECK(sol.converged);
            CHECK(glasso_obj(s, sol.precision, 0.1) == doctest::Approx(glasso_obj(s, ref, 0.1)).epsilon(1e-6));
            CHECK(glasso_kkt_residual(s, sol.precision, sol.covariance, 0.1, false) <= 10 * opt.tol);
            CHECK(glasso_objective(s, sol.precision, 0.1) == doctest::Approx(glasso_obj(s, sol.precision, 0.1)));
            CHECK(non_increasing(sol.objective_trace));
            CHECK(Eigen::LLT<MatrixXd>(sol.precision).info() == Eigen::Success);
        }
    }

    TEST_CASE("rejects indefinite input")
    {
        EstimatorConfig cfg;
        cfg.lambda = {0.1};
        CHECK_THROWS(glasso(-MatrixXd::Identity(3, 3), 0.1, cfg));
    }

    TEST_CASE("diagonal is never penalized")
    {
        const MatrixXd s = VectorXd::LinSpaced(4, 1, 4).asDiagonal();
        EstimatorConfig cfg;
        cfg.lambda = {0.1};
        cfg.tol = 1e-12;
        const MatrixXd a = glasso(s, 0.1, cfg).model.dense_matrix();
        cfg.lambda = {5};
        const MatrixXd b = glasso(s, 5, cfg).model.dense_matrix();
        CHECK((a - b).norm() < 1e-10);
        CHECK((a - MatrixXd(s.diagonal().cwiseInverse().asDiagonal())).norm() < 1e-10);
    }
}

TEST_SUITE("kronecker pca")
{
    TEST_CASE("kp_ls recovers an exact product")
    {
        oracle::Rng rng(5);
        const MatrixXd a = rng.spd(2), b = rng.spd(3);
        const MatrixXd s = oracle::kron_loop(a, b);
        const KpLsResult r = kp_ls_factors(s, 2, 3);
        CHECK((oracle::kron_loop(r.a, r.b) - s).norm() <= 1e-10);
        CHECK(r.residual <= 1e-10);
        const FitResult f = kp_ls(s, 2, 3);
        CHECK(f.is_covariance);
        CHECK((f.model.materialize() - s).norm() <= 1e-10);
        CHECK((kp_ls(SecondMoments::from_dense(s, {3, 2})).model.materialize() - s).norm() <= 1e-10);
    }

    TEST_CASE("kp_ls of the identity")
    {
        const KpLsResult r = kp_ls_factors(MatrixXd::Identity(6, 6), 2, 3);
        CHECK((oracle::kron_loop(r.a, r.b) - MatrixXd::Identity(6, 6)).norm() < 1e-12);
        const double c = r.a(0, 0);
        CHECK((r.a - c * MatrixXd::Identity(2, 2)).norm() < 1e-12);
        CHECK((r.b - MatrixXd::Identity(3, 3) / c).norm() < 1e-12);
    }

    TEST_CASE("kp_ls residual is the tail spectrum")
    {
        oracle::Rng rng(6);
        const MatrixXd s = rng.spd(6);
        const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(oracle::rearrange(s, 2, 3)).singularValues();
        const double tail = std::sqrt(sv.tail(sv.size() - 1).squaredNorm());
        const KpLsResult r = kp_ls_factors(s, 2, 3);
        CHECK(r.residual == doctest::Approx(tail).epsilon(1e-10));
        CHECK((s - oracle::kron_loop(r.a, r.b)).norm() == doctest::Approx(tail).epsilon(1e-10));
        CHECK(r.sigma1 == doctest::Approx(sv[0]).epsilon(1e-12));
    }

    TEST_CASE("kpca thresholding")
    {
        oracle::Rng rng(7);
        const MatrixXd s = rng.spd(6);
        const FitResult f0 = kpca(s, 2, 3, 0);
        CHECK((f0.model.materialize() - s).norm() <= 1e-10);
        const double s1 = Eigen::JacobiSVD<MatrixXd>(oracle::rearrange(s, 2, 3)).singularValues()[0];
        const FitResult fz = kpca(s, 2, 3, 2 * s1 + 1e-9);
        CHECK(fz.model.materialize().norm() < 1e-12);
        CHECK(fz.rank == 0);
        // Factored input gives the same model.
        const FitResult fm = kpca(SecondMoments::from_dense(s, {3, 2}), 0.3);
        CHECK((fm.model.materialize() - kpca(s, 2, 3, 0.3).model.materialize()).norm() < 1e-9);
    }

    TEST_CASE("kpca recovers a two-term sum")
    {
        oracle::Rng rng(8);
        const MatrixXd s = 3 * oracle::kron_loop(rng.spd(3), rng.spd(2)) + oracle::kron_loop(rng.spd(3), rng.spd(2));
        const VectorXd sv = Eigen::JacobiSVD<MatrixXd>(oracle::rearrange(s, 3, 2)).singularValues();
        REQUIRE(sv[2] < 1e-10);
        const FitResult f = kpca(s, 3, 2, sv[1]);  // between 2*sigma_3 = 0 and 2*sigma_2
        CHECK(f.rank == 2);
        // Surviving terms are shrunk by lambda/2; undo the shrink for the residual check.
        MatrixXd rebuilt = MatrixXd::Zero(6, 6);
        for (std::size_t l = 0; l < f.kron_terms.size(); ++l) {
            const double factor = sv[l] / (sv[l] - sv[1] / 2);
            rebuilt += factor * oracle::kron_loop(f.kron_terms[l].first, f.kron_terms[l].second);
        }
        CHECK((rebuilt - s).norm() <= 1e-8);
    }
}

TEST_SUITE("objectives")
{
    TEST_CASE("closed forms")
    {
        const SecondMoments eye = SecondMoments::from_dense(MatrixXd::Identity(6, 6), {3, 2});
        CHECK(tlasso_objective(eye, {MatrixXd::Identity(3, 3), MatrixXd::Identity(2, 2)}, {0, 0}) ==
              doctest::Approx(6));
        const double s = 0.7, a = 0.4, b = 1.1;
        const SecondMoments one = SecondMoments::from_dense(MatrixXd::Constant(1, 1, s), {1, 1});
        const std::vector<MatrixXd> f{MatrixXd::Constant(1, 1, a), MatrixXd::Constant(1, 1, b)};
        CHECK(teralasso_objective(one, f, {0, 0}) == doctest::Approx(s * (a + b) - std::log(a + b)));
        CHECK(sg_palm_objective(one, f, {0, 0}) == doctest::Approx(s * (a + b) * (a + b) - std::log(a + b)));
    }

    TEST_CASE("dense evaluation")
    {
        oracle::Rng rng(9);
        for (int trial = 0; trial < 5; ++trial) {
            Dataset d{{3, 2}, rng.matrix(6, 8)};
            const SecondMoments s = SecondMoments::from_data(d);
            const MatrixXd S = s.dense();
            const std::vector<MatrixXd> f{rng.spd(3), rng.spd(2)};
            const std::vector<double> lam{0.2, 0.3};
            const MatrixXd kp = oracle::kron_loop(f[1], f[0]), ks = oracle::kron_sum({f[1], f[0]});
            const double m0 = 2, m1 = 3;
            const double tl = (S * kp).trace() - m0 * oracle::logdet(f[0]) - m1 * oracle::logdet(f[1]) +
                              m0 * lam[0] * off_l1(f[0]) + m1 * lam[1] * off_l1(f[1]);
            const double te = (S * ks).trace() - oracle::logdet(ks) + m0 * lam[0] * off_l1(f[0]) +
                              m1 * lam[1] * off_l1(f[1]);
            const MatrixXd dg = oracle::kron_sum({MatrixXd(f[1].diagonal().asDiagonal()),
                                                  MatrixXd(f[0].diagonal().asDiagonal())});
            const double sg = (S * ks * ks).trace() - oracle::logdet(dg) + lam[0] * off_l1(f[0]) + lam[1] * off_l1(f[1]);
            CHECK(tlasso_objective(s, f, lam) == doctest::Approx(tl).epsilon(1e-10));
            CHECK(teralasso_objective(s, f, lam) == doctest::Approx(te).epsilon(1e-10));
            CHECK(sg_palm_objective(s, f, lam) == doctest::Approx(sg).epsilon(1e-10));
            CHECK(objective(Method::TeraLasso, StructuredMatrix::from_modes(Structure::KronSum, f), s, lam) ==
                  doctest::Approx(te).epsilon(1e-10));
            CHECK(objective(Method::Glasso, StructuredMatrix::dense(kp), s, {0.1}) ==
                  doctest::Approx((S * kp).trace() - oracle::logdet(kp) + 0.1 * off_l1(kp)).epsilon(1e-10));
        }
    }

    TEST_CASE("gradients match central differences")
    {
        oracle::Rng rng(10);
        for (int trial = 0; trial < 10; ++trial) {
            Dataset d{{3, 2}, rng.matrix(6, 10)};
            const SecondMoments s = SecondMoments::from_data(d);
            std::vector<MatrixXd> traces{s.mode_trace(0), s.mode_trace(1)};
            const std::vector<MatrixXd> f{rng.spd(3), rng.spd(2)};
            auto te = [&](const std::vector<MatrixXd>& x) { return teralasso_smooth(traces, x); };
            auto sg = [&](const std::vector<MatrixXd>& x) { return sg_palm_smooth(s, x); };
            const auto gte = teralasso_gradient(traces, f), gsg = sg_palm_gradient(s, f);
            for (std::size_t k = 0; k < 2; ++k) {
                MatrixXd fte(f[k].rows(), f[k].cols()), fsg = fte;
                MatrixXd ate = fte, asg = fte;
                for (Index i = 0; i < f[k].rows(); ++i)
                    for (Index j = 0; j < f[k].cols(); ++j) {
                        const double w = i == j ? 1 : 2;
                        fte(i, j) = oracle::fd_sym(te, f, k, i, j, 1e-5);
                        fsg(i, j) = oracle::fd_sym(sg, f, k, i, j, 1e-5);
                        ate(i, j) = w * gte[k](i, j);
                        asg(i, j) = w * gsg[k](i, j);
                    }
                CHECK((fte - ate).norm() <= 1e-6 * ate.norm());
                CHECK((fsg - asg).norm() <= 1e-6 * asg.norm());
            }
        }
    }
}

TEST_SUITE("tlasso")
{
    TEST_CASE("large penalties give diagonal factors")
    {
        oracle::Rng rng(11);
        Dataset d{{3, 4}, rng.matrix(12, 30)};
        EstimatorConfig cfg;
        cfg.lambda = all(100, 2);
        const FitResult r = tlasso(d, cfg);
        for (const auto& f : r.factors.factors) CHECK(off_l1(f) == 0);
    }

    TEST_CASE("recovers a sparse Kronecker product precision")
    {
        const MatrixXd o1 = random_sparse_spd(4, 0.4, 1), o2 = random_sparse_spd(4, 0.4, 2);
        const auto truth = StructuredMatrix::from_modes(Structure::KronProduct, {o1, o2});
        const Dataset d = sample_gaussian(truth, 500, 3);
        EstimatorConfig cfg;
        cfg.lambda = lambda_from_rate(Method::Tlasso, d.dims, 500, 0.1);
        const FitResult r = tlasso(d, cfg);
        CHECK(rel_err(r.model.materialize(), truth.materialize()) <= 0.1);
        CHECK(non_increasing(r.objective_trace));
        CHECK(r.model.min_eigenvalue() > 0);
        CHECK(r.factors.factors[0].trace() == doctest::Approx(4));
    }

    TEST_CASE("data scaling moves only the absorbed factor")
    {
        oracle::Rng rng(12);
        Dataset d{{3, 4}, rng.matrix(12, 40)};
        Dataset d2 = d;
        d2.samples *= 3;
        EstimatorConfig cfg;
        cfg.lambda = {0.02, 0.02};
        cfg.tol = 1e-12;
        cfg.inner_tol = 1e-12;
        const FitResult a = tlasso(d, cfg);
        // The last factor absorbs the 1/c^2, and glasso(c S, c lambda) = X / c.
        EstimatorConfig cfg2 = cfg;
        cfg2.lambda = {0.02, 0.02 * 9};
        const FitResult b = tlasso(d2, cfg2);
        CHECK((a.factors.factors[0] - b.factors.factors[0]).norm() < 1e-8 * a.factors.factors[0].norm());
        CHECK((a.model.materialize() / 9 - b.model.materialize()).norm() < 1e-7 * b.model.materialize().norm());
    }

    TEST_CASE("rejects a single mode")
    {
        oracle::Rng rng(13);
        Dataset d{{5}, rng.matrix(5, 10)};
        EstimatorConfig cfg;
        cfg.lambda = {0.1};
        CHECK_THROWS(tlasso(d, cfg));
    }
}

TEST_SUITE("teralasso")
{
    TEST_CASE("scalar stationarity with balanced split")
    {
        const double s = 0.8;
        EstimatorConfig cfg;
        cfg.lambda = {0, 0};
        cfg.tol = 1e-12;
        const FitResult r = teralasso(SecondMoments::from_dense(MatrixXd::Constant(1, 1, s), {1, 1}), cfg);
        CHECK(r.factors.factors[0](0, 0) == doctest::Approx(1 / (2 * s)).epsilon(1e-6));
        CHECK(r.factors.factors[1](0, 0) == doctest::Approx(1 / (2 * s)).epsilon(1e-6));
    }

    TEST_CASE("support recovery on a Kronecker sum truth")
    {
        std::vector<double> scores;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const MatrixXd p1 = random_sparse_spd(4, 0.4, 10 + seed), p2 = random_sparse_spd(4, 0.4, 20 + seed);
            const auto truth = StructuredMatrix::from_modes(Structure::KronSum, {p1, p2});
            const Dataset d = sample_gaussian(truth, 200, seed);
            EstimatorConfig cfg;
            cfg.lambda = lambda_from_rate(Method::TeraLasso, d.dims, 200, 0.3);
            const FitResult r = teralasso(d, cfg);
            CHECK(non_increasing(r.objective_trace));
            CHECK(r.model.min_eigenvalue() > 0);
            scores.push_back(mcc(extract_support(r.model.materialize()), extract_support(truth.materialize(), 1e-12)));
        }
        CHECK(median(scores) >= 0.8);
    }
}

TEST_SUITE("sg-palm")
{
    TEST_CASE("scalar stationarity")
    {
        const double s = 0.6;
        EstimatorConfig cfg;
        cfg.lambda = {0, 0};
        cfg.tol = 1e-13;
        cfg.max_iter = 5000;
        const FitResult r = sg_palm(SecondMoments::from_dense(MatrixXd::Constant(1, 1, s), {1, 1}), cfg);
        const double sum = r.factors.factors[0](0, 0) + r.factors.factors[1](0, 0);
        CHECK(sum == doctest::Approx(1 / std::sqrt(2 * s)).epsilon(1e-6));
        // The reported precision is the Gaussian maximum likelihood value 1/s.
        CHECK(r.model.materialize()(0, 0) == doctest::Approx(1 / s).epsilon(1e-6));
    }

    TEST_CASE("beats the other structured estimators on a squared Kronecker sum truth")
    {
        int wins = 0;
        std::vector<double> sg_err, tl_err, te_err;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const MatrixXd a1 = laplacian_1d(4), a2 = laplacian_1d(4);
            const auto truth = StructuredMatrix::from_modes(Structure::SquaredKronSum, {a1, a2});
            const MatrixXd omega = truth.materialize();
            const Dataset d = sample_gaussian(truth, 100, 100 + seed);
            const SecondMoments s = SecondMoments::from_data(d);
            double best[3] = {1e9, 1e9, 1e9};
            for (double c : {0.01, 0.03, 0.1, 0.3, 1.0, 3.0}) {
                EstimatorConfig cfg;
                cfg.lambda = lambda_from_rate(Method::SgPalm, d.dims, 100, c);
                best[0] = std::min(best[0], rel_err(sg_palm(s, cfg).model.materialize(), omega));
                cfg.lambda = lambda_from_rate(Method::Tlasso, d.dims, 100, c);
                best[1] = std::min(best[1], rel_err(tlasso(s, cfg).model.materialize(), omega));
                cfg.lambda = lambda_from_rate(Method::TeraLasso, d.dims, 100, c);
                best[2] = std::min(best[2], rel_err(teralasso(s, cfg).model.materialize(), omega));
            }
            sg_err.push_back(best[0]);
            tl_err.push_back(best[1]);
            te_err.push_back(best[2]);
            if (best[0] < best[1] && best[0] < best[2]) ++wins;
        }
        CHECK(median(sg_err) < median(tl_err));
        CHECK(median(sg_err) < median(te_err));
    }

    TEST_CASE("trace monotone and diagonal positive")
    {
        oracle::Rng rng(14);
        Dataset d{{3, 4}, rng.matrix(12, 25)};
        EstimatorConfig cfg;
        cfg.lambda = lambda_from_rate(Method::SgPalm, d.dims, 25, 0.3);
        const FitResult r = sg_palm(d, cfg);
        CHECK(non_increasing(r.objective_trace));
        for (const auto& f : r.factors.factors) CHECK(f.diagonal().minCoeff() > 1e-8);
    }
}

TEST_SUITE("penalties")
{
    TEST_CASE("rate rules")
    {
        for (Method m : {Method::SgPalm, Method::TeraLasso, Method::Tlasso})
            for (double l : lambda_from_rate(m, {1, 1}, 1, 1.0)) CHECK(l == 0);
        const auto sg = lambda_from_rate(Method::SgPalm, {64, 50}, 50, 1.0);
        CHECK(sg[1] == doctest::Approx(std::sqrt(std::log(3200.0))).epsilon(1e-14));
        CHECK(sg[1] == doctest::Approx(2.841).epsilon(1e-3));
        const auto te = lambda_from_rate(Method::TeraLasso, {4, 16}, 10, 2.0);
        CHECK(te[0] / te[1] == doctest::Approx(std::sqrt(4.0 / 16.0)));
        CHECK(te[0] == doctest::Approx(2 * std::sqrt(std::log(64.0) / (10 * 16.0))));
        const auto tl = lambda_from_rate(Method::Tlasso, {4, 16}, 10, 1.0);
        CHECK(tl[1] == doctest::Approx(std::sqrt(std::log(16.0) / (10 * 64.0))));
        CHECK(lambda_from_rate(Method::Glasso, {4, 16}, 10, 1.0)[0] == doctest::Approx(std::sqrt(std::log(64.0) / 10)));
        CHECK_THROWS(lambda_from_rate(Method::SgPalm, {2, 2}, 0, 1.0));
    }

    TEST_CASE("config validation and names")
    {
        EstimatorConfig cfg;
        cfg.lambda = {-1};
        CHECK_THROWS(cfg.validate());
        cfg.lambda = {0.1};
        cfg.tol = 0;
        CHECK_THROWS(cfg.validate());
        CHECK(method_from_string("kglasso") == Method::Tlasso);
        CHECK(method_from_string(to_string(Method::SgPalm)) == Method::SgPalm);
        CHECK_THROWS(method_from_string("nope"));
        CHECK(soft_threshold(3, 1) == 2);
        CHECK(soft_threshold(-0.5, 1) == 0);
    }
}
