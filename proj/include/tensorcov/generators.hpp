#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "tensorcov/covariance.hpp"
#include "tensorcov/io.hpp"
#include "tensorcov/kronecker.hpp"

namespace tcov {

enum class ProcessKind { Poisson2D, PoissonAR1, ConvectionDiffusion };

std::string_view to_string(ProcessKind k);
ProcessKind process_kind_from_string(std::string_view s);

/// How a space-time field is laid out as a tensor. Flat gives the order-2
/// tensor (d1*d2, T); Cube gives the order-3 tensor (d2, d1, T). In both the
/// time index varies slowest, matching the operator's leading time factor.
enum class Layout { Flat, Cube };

struct ProcessSpec {
    ProcessKind kind = ProcessKind::PoissonAR1;
    Index d1 = 8;
    Index d2 = 8;
    Index T = 50;
    double a = -0.5;
    double theta = 0.05;
    double epsilon = 0.01;
    double h = 1.0;
    double dt = 1.0;
    double sigma_w = 0.1;
    std::uint64_t seed = 0;
    Layout layout = Layout::Flat;

    void validate() const;
    Index rows() const { return d1 * d2 * (kind == ProcessKind::Poisson2D ? 1 : T); }
    Dims tensor_dims() const;
};

inline constexpr Index kExplicitPrecisionCap = 20000;

struct GroundTruth {
    ProcessSpec spec;
    SpMat L;                         // L vec(U) = vec(W)
    std::optional<SpMat> precision;  // sigma_w^-2 L^T L when rows <= cap
    std::optional<StructuredMatrix> structured_precision;
    Dims tensor_dims;

    Index size() const { return L.rows(); }
    VectorXd precision_apply(const VectorXd& v) const;
    MatrixXd precision_dense(Index cap = kDefaultMaterializeCap) const;
    MatrixXd covariance_dense(Index cap = kDefaultMaterializeCap) const;
};

MatrixXd laplacian_1d(Index n);
MatrixXd difference_1d(Index n);
MatrixXd ar1_bidiagonal(Index T, double a);

GroundTruth build_poisson_2d(const ProcessSpec& spec);
GroundTruth build_poisson_ar1(const ProcessSpec& spec);
GroundTruth build_convection_diffusion(const ProcessSpec& spec);
GroundTruth build_process(const ProcessSpec& spec);

/// N replicates of L vec(U) = vec(W), W ~ N(0, sigma_w^2 I). Replicate n
/// uses noise substream n of the seed.
Dataset sample_process(const GroundTruth& gt, Index N, double sigma_w, std::uint64_t seed);

/// N draws of N(0, Omega^-1) for a structured precision Omega, shaped by its
/// tensor dims.
Dataset sample_gaussian(const StructuredMatrix& precision, Index N, std::uint64_t seed);

/// Random sparse SPD matrix: each off-diagonal pair is present with
/// probability p with magnitude in [0.2, 0.5] and random sign. Diagonal is
/// one plus the absolute off-diagonal row sum.
MatrixXd random_sparse_spd(Index n, double p, std::uint64_t seed);

} // namespace tcov
