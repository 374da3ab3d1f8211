#include <chrono>
#include <cmath>
#include <stdexcept>

#include "tensorcov/estimators.hpp"

namespace tcov {

namespace {

std::vector<MatrixXd> initial_factors(const SecondMoments& s, const EstimatorConfig& cfg, bool precision_scale)
{
    const Dims& dims = s.dims();
    std::vector<MatrixXd> f;
    if (cfg.init == InitPolicy::Warm) {
        f = cfg.warm->factors;
        if (f.size() != dims.size()) throw std::invalid_argument("warm start has the wrong number of factors");
        for (std::size_t k = 0; k < dims.size(); ++k)
            if (f[k].rows() != dims[k] || f[k].cols() != dims[k])
                throw std::invalid_argument("warm start factor has the wrong size");
        return f;
    }
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (cfg.init == InitPolicy::Diagonal && precision_scale) {
            const MatrixXd g = mode_gram(s, static_cast<Index>(k));
            VectorXd diag = g.diagonal().cwiseMax(1e-12).cwiseInverse();
            f.push_back(diag.asDiagonal());
        } else {
            f.push_back(MatrixXd::Identity(dims[k], dims[k]));
        }
    }
    return f;
}

} // namespace

FitResult tlasso(const SecondMoments& s, const EstimatorConfig& cfg)
{
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();
    const Index K = static_cast<Index>(s.dims().size());
    if (K < 2) throw std::invalid_argument("tlasso needs at least two modes");
    if (cfg.lambda.size() != 1 && static_cast<Index>(cfg.lambda.size()) != K)
        throw std::invalid_argument("tlasso: need one penalty per mode");
    std::vector<double> lambda(K);
    for (Index k = 0; k < K; ++k) lambda[k] = cfg.lambda_for(k);

    FitResult out;
    out.method = Method::Tlasso;
    FactorSet fs;
    fs.factors = initial_factors(s, cfg, true);
    double f = tlasso_objective(s, fs.factors, lambda, cfg.penalize_diagonal);
    out.objective_trace.push_back(f);

    GlassoOptions opt;
    opt.tol = cfg.inner_tol;
    opt.max_iter = cfg.inner_max_iter;
    opt.penalize_diagonal = cfg.penalize_diagonal;
    for (int iter = 1; iter <= cfg.max_iter; ++iter) {
        for (Index k = 0; k < K; ++k) {
            const MatrixXd sk = mode_gram(s, k, fs.factors);
            opt.warm = &fs.factors[k];
            GlassoSolution sol = glasso_solve(sk, lambda[k], opt);
            if (!sol.converged)
                out.warnings.push_back("mode " + std::to_string(k) + " glasso stopped at KKT " + std::to_string(sol.kkt));
            fs.factors[k] = std::move(sol.precision);
        }
        normalize_trace(fs);
        const double fn = tlasso_objective(s, fs.factors, lambda, cfg.penalize_diagonal);
        out.objective_trace.push_back(fn);
        out.iterations = iter;
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
    out.model = StructuredMatrix::from_modes(Structure::KronProduct, fs.factors);
    out.factors = std::move(fs);
    out.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

namespace {

SecondMoments moments_for(const Dataset& data, const EstimatorConfig& cfg, std::vector<std::string>& warnings)
{
    bool center = cfg.center;
    if (center && data.count() == 1) {
        center = false;
        warnings.push_back("single sample: mean subtraction disabled");
    }
    return SecondMoments::from_data(data, center);
}

} // namespace

FitResult tlasso(const Dataset& data, const EstimatorConfig& cfg)
{
    std::vector<std::string> w;
    const auto start = std::chrono::steady_clock::now();
    FitResult r = tlasso(moments_for(data, cfg, w), cfg);
    r.warnings.insert(r.warnings.begin(), w.begin(), w.end());
    r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

FitResult teralasso(const Dataset& data, const EstimatorConfig& cfg)
{
    std::vector<std::string> w;
    const auto start = std::chrono::steady_clock::now();
    FitResult r = teralasso(moments_for(data, cfg, w), cfg);
    r.warnings.insert(r.warnings.begin(), w.begin(), w.end());
    r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

FitResult sg_palm(const Dataset& data, const EstimatorConfig& cfg)
{
    std::vector<std::string> w;
    const auto start = std::chrono::steady_clock::now();
    FitResult r = sg_palm(moments_for(data, cfg, w), cfg);
    r.warnings.insert(r.warnings.begin(), w.begin(), w.end());
    r.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

} // namespace tcov
