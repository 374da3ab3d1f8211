#include "tensorcov/generators.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>

#include "tensorcov/rng.hpp"

namespace tcov {

std::string_view to_string(ProcessKind k)
{
    switch (k) {
    case ProcessKind::Poisson2D: return "poisson2d";
    case ProcessKind::PoissonAR1: return "poisson-ar1";
    case ProcessKind::ConvectionDiffusion: return "convection-diffusion";
    }
    return "poisson-ar1";
}

ProcessKind process_kind_from_string(std::string_view s)
{
    if (s == "poisson2d") return ProcessKind::Poisson2D;
    if (s == "poisson-ar1") return ProcessKind::PoissonAR1;
    if (s == "convection-diffusion") return ProcessKind::ConvectionDiffusion;
    throw std::invalid_argument("unknown process kind '" + std::string(s) + "'");
}

void ProcessSpec::validate() const
{
    if (d1 < 1 || d2 < 1 || T < 1) throw std::invalid_argument("grid sizes must be positive");
    if (!(sigma_w >= 0)) throw std::invalid_argument("sigma_w must be nonnegative");
    if (kind == ProcessKind::PoissonAR1 && !(std::abs(a) < 1)) throw std::invalid_argument("AR coefficient needs |a| < 1");
    if (kind == ProcessKind::ConvectionDiffusion) {
        if (!(theta > 0)) throw std::invalid_argument("diffusivity theta must be positive");
        if (!(h > 0) || !(dt > 0)) throw std::invalid_argument("mesh step and time step must be positive");
    }
}

Dims ProcessSpec::tensor_dims() const
{
    if (kind == ProcessKind::Poisson2D) return {d2, d1};
    if (layout == Layout::Cube) return {d2, d1, T};
    return {d1 * d2, T};
}

MatrixXd laplacian_1d(Index n)
{
    if (n < 1) throw std::invalid_argument("laplacian_1d: n must be positive");
    MatrixXd a = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        a(i, i) = 2;
        if (i + 1 < n) a(i, i + 1) = a(i + 1, i) = -1;
    }
    return a;
}

MatrixXd difference_1d(Index n)
{
    if (n < 1) throw std::invalid_argument("difference_1d: n must be positive");
    MatrixXd d = MatrixXd::Identity(n, n);
    for (Index i = 1; i < n; ++i) d(i, i - 1) = -1;
    return d;
}

MatrixXd ar1_bidiagonal(Index T, double a)
{
    if (T < 1) throw std::invalid_argument("ar1_bidiagonal: T must be positive");
    if (!(std::abs(a) < 1)) throw std::invalid_argument("ar1_bidiagonal: need |a| < 1");
    MatrixXd b = MatrixXd::Identity(T, T);
    for (Index i = 0; i + 1 < T; ++i) b(i, i + 1) = -a;
    return b;
}

namespace {

SpMat sparse(const MatrixXd& m) { return m.sparseView(); }

SpMat speye(Index n)
{
    SpMat i(n, n);
    i.setIdentity();
    return i;
}

SpMat skron(const SpMat& a, const SpMat& b)
{
    SpMat out = Eigen::kroneckerProduct(a, b);
    return out;
}

void finish(GroundTruth& gt)
{
    gt.tensor_dims = gt.spec.tensor_dims();
    if (gt.L.rows() <= kExplicitPrecisionCap) {
        const double s2 = gt.spec.sigma_w * gt.spec.sigma_w;
        if (!(s2 > 0)) return;
        SpMat p = (gt.L.transpose() * gt.L).pruned();
        p /= s2;
        gt.precision = std::move(p);
    }
}

} // namespace

GroundTruth build_poisson_2d(const ProcessSpec& spec)
{
    if (spec.kind != ProcessKind::Poisson2D) throw std::invalid_argument("spec is not a Poisson2D process");
    spec.validate();
    GroundTruth gt;
    gt.spec = spec;
    const SpMat a1 = sparse(laplacian_1d(spec.d1)), a2 = sparse(laplacian_1d(spec.d2));
    gt.L = skron(a1, speye(spec.d2)) + skron(speye(spec.d1), a2);
    if (spec.sigma_w > 0) {
        const double c = 1.0 / spec.sigma_w;
        gt.structured_precision =
            StructuredMatrix::squared_kron_sum({c * laplacian_1d(spec.d1), c * laplacian_1d(spec.d2)});
    }
    finish(gt);
    return gt;
}

GroundTruth build_poisson_ar1(const ProcessSpec& spec)
{
    if (spec.kind != ProcessKind::PoissonAR1) throw std::invalid_argument("spec is not a Poisson-AR(1) process");
    spec.validate();
    GroundTruth gt;
    gt.spec = spec;
    const MatrixXd b = ar1_bidiagonal(spec.T, spec.a);
    const SpMat c = skron(sparse(laplacian_1d(spec.d1)), speye(spec.d2)) + skron(speye(spec.d1), sparse(laplacian_1d(spec.d2)));
    gt.L = skron(sparse(b.transpose()), c);
    if (spec.sigma_w > 0 && c.rows() <= kDefaultMaterializeCap) {
        const MatrixXd cd = c;
        const double s2 = spec.sigma_w * spec.sigma_w;
        gt.structured_precision = StructuredMatrix::kron_product({b * b.transpose() / s2, cd * cd});
    }
    finish(gt);
    return gt;
}

GroundTruth build_convection_diffusion(const ProcessSpec& spec)
{
    if (spec.kind != ProcessKind::ConvectionDiffusion)
        throw std::invalid_argument("spec is not a convection-diffusion process");
    spec.validate();
    GroundTruth gt;
    gt.spec = spec;
    const SpMat It = speye(spec.T), I1 = speye(spec.d1), I2 = speye(spec.d2);
    const SpMat Dt = sparse(difference_1d(spec.T));
    const SpMat A1 = sparse(laplacian_1d(spec.d1)), A2 = sparse(laplacian_1d(spec.d2));
    const SpMat D1 = sparse(difference_1d(spec.d1)), D2 = sparse(difference_1d(spec.d2));
    const SpMat spatial_i = skron(I1, I2);
    SpMat lap = skron(It, skron(A1, I2)) + skron(It, skron(I1, A2));
    SpMat adv = skron(It, skron(D1, I2)) + skron(It, skron(I1, D2));
    gt.L = skron(Dt, spatial_i) / spec.dt + lap * (spec.theta / (spec.h * spec.h)) + adv * (spec.epsilon / (2 * spec.h));
    gt.L.prune(0.0);
    finish(gt);
    return gt;
}

GroundTruth build_process(const ProcessSpec& spec)
{
    switch (spec.kind) {
    case ProcessKind::Poisson2D: return build_poisson_2d(spec);
    case ProcessKind::PoissonAR1: return build_poisson_ar1(spec);
    case ProcessKind::ConvectionDiffusion: return build_convection_diffusion(spec);
    }
    throw std::invalid_argument("unknown process kind");
}

VectorXd GroundTruth::precision_apply(const VectorXd& v) const
{
    const double s2 = spec.sigma_w * spec.sigma_w;
    return L.transpose() * (L * v) / s2;
}

MatrixXd GroundTruth::precision_dense(Index cap) const
{
    if (size() > cap) throw std::length_error("precision too large to materialize");
    const MatrixXd l = L;
    return l.transpose() * l / (spec.sigma_w * spec.sigma_w);
}

MatrixXd GroundTruth::covariance_dense(Index cap) const
{
    if (size() > cap) throw std::length_error("covariance too large to materialize");
    Eigen::SparseLU<SpMat> lu(L);
    if (lu.info() != Eigen::Success) throw std::runtime_error("operator is singular");
    const MatrixXd linv = lu.solve(MatrixXd::Identity(size(), size()));
    return spec.sigma_w * spec.sigma_w * linv * linv.transpose();
}

Dataset sample_process(const GroundTruth& gt, Index N, double sigma_w, std::uint64_t seed)
{
    if (N < 1) throw std::invalid_argument("sample_process: N must be positive");
    Dataset out;
    out.dims = gt.tensor_dims;
    out.samples = MatrixXd::Zero(gt.size(), N);
    if (sigma_w == 0) return out;
    SpMat l = gt.L;
    l.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(l);
    if (lu.info() != Eigen::Success) throw std::runtime_error("sample_process: operator is singular");
    for (Index n = 0; n < N; ++n) {
        NormalStream rng(seed, static_cast<std::uint64_t>(n));
        const VectorXd w = sigma_w * rng.normals(gt.size());
        VectorXd u = lu.solve(w);
        if (lu.info() != Eigen::Success) throw std::runtime_error("sample_process: solve failed");
        const double wn = w.norm();
        VectorXd r = w - l * u;
        // one step of refinement is usually enough when the first solve misses
        for (int it = 0; it < 3 && r.norm() > 1e-10 * wn; ++it) {
            u += lu.solve(r);
            r = w - l * u;
        }
        if (r.norm() > 1e-10 * wn) throw std::runtime_error("sample_process: residual check failed");
        out.samples.col(n) = u;
    }
    return out;
}

Dataset sample_gaussian(const StructuredMatrix& precision, Index N, std::uint64_t seed)
{
    if (N < 1) throw std::invalid_argument("sample_gaussian: N must be positive");
    const Index d = precision.size();
    Dataset out;
    out.dims = precision.tensor_dims();
    out.samples.resize(d, N);

    std::function<VectorXd(const VectorXd&)> draw;
    switch (precision.structure()) {
    case Structure::KronProduct: {
        std::vector<MatrixXd> roots;
        for (const auto& f : precision.factors()) {
            Eigen::SelfAdjointEigenSolver<MatrixXd> es(f);
            if (es.eigenvalues().minCoeff() <= 0) throw std::domain_error("precision factor is not positive definite");
            roots.push_back(es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                            es.eigenvectors().transpose());
        }
        const StructuredMatrix r = StructuredMatrix::kron_product(roots);
        draw = [r](const VectorXd& z) { return r.apply(z); };
        break;
    }
    case Structure::KronSum: {
        auto eig = std::make_shared<EigKronSum>(precision.factors());
        const VectorXd s = eig->spectrum();
        if (s.minCoeff() <= 0) throw std::domain_error("precision is not positive definite");
        const VectorXd f = s.cwiseSqrt().cwiseInverse();
        draw = [eig, f](const VectorXd& z) { return eig->apply_spectral(f, z); };
        break;
    }
    case Structure::SquaredKronSum: {
        auto eig = std::make_shared<EigKronSum>(precision.factors());
        const VectorXd s = eig->spectrum();
        if ((s.array() == 0.0).any()) throw std::domain_error("precision is singular");
        const VectorXd f = s.cwiseInverse();
        draw = [eig, f](const VectorXd& z) { return eig->apply_spectral(f, z); };
        break;
    }
    case Structure::Dense: {
        Eigen::LLT<MatrixXd> llt(precision.dense_matrix());
        if (llt.info() != Eigen::Success) throw std::domain_error("precision is not positive definite");
        const MatrixXd u = llt.matrixU();
        draw = [u](const VectorXd& z) { return VectorXd(u.triangularView<Eigen::Upper>().solve(z)); };
        break;
    }
    }
    for (Index n = 0; n < N; ++n) {
        NormalStream rng(seed, static_cast<std::uint64_t>(n));
        out.samples.col(n) = draw(rng.normals(d));
    }
    return out;
}

MatrixXd random_sparse_spd(Index n, double p, std::uint64_t seed)
{
    NormalStream rng(seed, 0x5bd1e995ULL);
    MatrixXd m = MatrixXd::Zero(n, n);
    for (Index j = 0; j < n; ++j)
        for (Index i = j + 1; i < n; ++i)
            if (rng.uniform() < p) {
                const double mag = 0.2 + 0.3 * rng.uniform();
                m(i, j) = m(j, i) = rng.uniform() < 0.5 ? -mag : mag;
            }
    for (Index i = 0; i < n; ++i) m(i, i) = 1.0 + m.row(i).cwiseAbs().sum();
    return m;
}

} // namespace tcov
