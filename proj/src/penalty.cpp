#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "tensorcov/estimators.hpp"

namespace tcov {

std::string_view to_string(Method m)
{
    switch (m) {
    case Method::Glasso: return "glasso";
    case Method::KpLs: return "kp-ls";
    case Method::Kpca: return "kpca";
    case Method::Tlasso: return "tlasso";
    case Method::TeraLasso: return "teralasso";
    case Method::SgPalm: return "sg-palm";
    }
    return "glasso";
}

Method method_from_string(std::string_view s)
{
    if (s == "glasso") return Method::Glasso;
    if (s == "kp-ls") return Method::KpLs;
    if (s == "kpca") return Method::Kpca;
    if (s == "tlasso" || s == "kglasso") return Method::Tlasso;
    if (s == "teralasso") return Method::TeraLasso;
    if (s == "sg-palm") return Method::SgPalm;
    throw std::invalid_argument("unknown method '" + std::string(s) + "'");
}

void EstimatorConfig::validate() const
{
    if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
    if (!(inner_tol > 0)) throw std::invalid_argument("inner_tol must be positive");
    if (max_iter < 1 || inner_max_iter < 1) throw std::invalid_argument("iteration caps must be at least 1");
    for (double l : lambda)
        if (!(l >= 0)) throw std::invalid_argument("penalties must be nonnegative");
    if (init == InitPolicy::Warm && !warm) throw std::invalid_argument("warm start requested without factors");
}

double EstimatorConfig::lambda_for(Index k) const
{
    if (lambda.empty()) return 0.0;
    if (lambda.size() == 1) return lambda[0];
    return lambda.at(static_cast<std::size_t>(k));
}

std::vector<double> lambda_from_rate(Method method, const Dims& dims, Index N, double C)
{
    if (N < 1) throw std::invalid_argument("lambda_from_rate: N must be positive");
    if (!(C > 0)) throw std::invalid_argument("lambda_from_rate: C must be positive");
    const double n = static_cast<double>(N);
    const double d = static_cast<double>(product(dims));
    const double logd = std::log(d);
    std::vector<double> out;
    switch (method) {
    case Method::SgPalm:
        for (Index dk : dims) out.push_back(C * std::sqrt(static_cast<double>(dk) * logd / n));
        break;
    case Method::TeraLasso:
        for (Index dk : dims) out.push_back(C * std::sqrt(logd / (n * d / static_cast<double>(dk))));
        break;
    case Method::Tlasso:
        for (Index dk : dims) out.push_back(C * std::sqrt(std::log(static_cast<double>(dk)) / (n * d)));
        break;
    case Method::Glasso: out.push_back(C * std::sqrt(logd / n)); break;
    case Method::Kpca: {
        if (dims.size() != 2) throw std::invalid_argument("kpca rule needs two modes");
        const double a = static_cast<double>(dims[0]), b = static_cast<double>(dims[1]);
        out.push_back(C * std::sqrt((a * a + b * b + std::log(std::max({a, b, n}))) / n));
        break;
    }
    case Method::KpLs: out.push_back(0.0); break;
    }
    return out;
}

} // namespace tcov
