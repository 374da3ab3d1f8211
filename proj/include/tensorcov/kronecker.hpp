#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "tensorcov/tensor.hpp"

namespace tcov {

// Factor-ordering convention
// --------------------------
// A StructuredMatrix lists its factors in literal Kronecker order: the
// materialized matrix is F_0 (x) F_1 (x) ... (x) F_{K-1}, so F_0 owns the
// slowest-varying index. Under colexicographic vec this means F_i acts on
// tensor mode K-1-i. Estimators work per tensor mode and convert with
// StructuredMatrix::from_modes, which reverses the list.

enum class Structure { KronProduct, KronSum, SquaredKronSum, Dense };

std::string_view to_string(Structure s);
Structure structure_from_string(std::string_view s);

enum class Normalization { None, TraceFixed, FrobeniusFixed };

/// Per-mode square factors, indexed by tensor mode.
struct FactorSet {
    std::vector<MatrixXd> factors;
    Normalization normalization = Normalization::None;

    Index order() const { return static_cast<Index>(factors.size()); }
    Dims dims() const;
};

/// Rescale so trace(F_k) = d_k for every k but the last, which absorbs the
/// product of the scales. Leaves the Kronecker product unchanged.
void normalize_trace(FactorSet& fs);

inline constexpr Index kDefaultMaterializeCap = 4096;

MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

/// Symmetric d x d matrix represented by factors and a structure tag.
class StructuredMatrix {
public:
    StructuredMatrix() = default;

    static StructuredMatrix kron_product(std::vector<MatrixXd> factors);
    static StructuredMatrix kron_sum(std::vector<MatrixXd> factors);
    static StructuredMatrix squared_kron_sum(std::vector<MatrixXd> factors);
    static StructuredMatrix dense(MatrixXd m);

    /// Build from factors indexed by tensor mode (mode 0 fastest in vec).
    static StructuredMatrix from_modes(Structure s, const std::vector<MatrixXd>& per_mode);

    Structure structure() const { return structure_; }
    const std::vector<MatrixXd>& factors() const { return factors_; }
    const MatrixXd& dense_matrix() const;

    /// Factor sizes in literal Kronecker order.
    Dims dims() const;
    /// The same sizes as tensor-mode dims (reversed).
    Dims tensor_dims() const;
    Index size() const;

    VectorXd apply(const VectorXd& v) const;
    MatrixXd materialize(Index cap = kDefaultMaterializeCap) const;

    double logdet() const;
    double min_eigenvalue() const;
    VectorXd solve(const VectorXd& v) const;

    StructuredMatrix scaled(double c) const;

private:
    StructuredMatrix(Structure s, std::vector<MatrixXd> factors);

    Structure structure_ = Structure::Dense;
    std::vector<MatrixXd> factors_;
    MatrixXd dense_;
};

/// Per-factor eigendecompositions of a Kronecker sum, A_k = U_k diag(l_k) U_k^T.
/// Factors are in literal Kronecker order.
class EigKronSum {
public:
    explicit EigKronSum(const std::vector<MatrixXd>& factors);

    const std::vector<MatrixXd>& eigvecs() const { return eigvecs_; }
    const std::vector<VectorXd>& eigvals() const { return eigvals_; }
    Dims dims() const;

    /// All d eigenvalues sum_k l_k[i_k], positioned at the Kronecker index
    /// of the corresponding eigenvector.
    VectorXd spectrum() const;
    double min_eigenvalue() const;
    double logdet() const;

    /// f(A_0 (+) ... (+) A_{K-1}) v for an elementwise spectral function f
    /// given as its values on spectrum().
    VectorXd apply_spectral(const VectorXd& f_of_spectrum, const VectorXd& v) const;

    /// Partial trace onto literal factor k of f(sum), where f is given on
    /// spectrum(): U_k diag(h) U_k^T with h_i the sum of f over co-indices.
    MatrixXd partial_trace_spectral(const VectorXd& f_of_spectrum, Index k) const;

private:
    std::vector<MatrixXd> eigvecs_;
    std::vector<VectorXd> eigvals_;
};

/// Entry permutation mapping the d1*d2 square S to the d1^2 x d2^2 matrix with
/// R(A (x) B) = vec(A) vec(B)^T, A of size d1 and B of size d2.
MatrixXd rearrange(const MatrixXd& s, Index d1, Index d2);
MatrixXd rearrange_inverse(const MatrixXd& m, Index d1, Index d2);

/// Contract M over every literal Kronecker factor except k. dims are the
/// factor sizes in literal order. Adjoint of A -> I (x) .. (x) A (x) .. (x) I.
MatrixXd partial_trace(const MatrixXd& m, Index k, const Dims& dims);

/// Same contraction addressed by tensor mode of a colexicographic vec.
MatrixXd mode_partial_trace(const MatrixXd& m, Index mode, const Dims& tensor_dims);

/// Symmetric PSD square root via eigendecomposition; eigenvalues above
/// -tol*scale are clamped to zero, more negative ones are rejected.
MatrixXd psd_sqrt(const MatrixXd& w, double tol = 1e-10);

MatrixXd symmetrize(const MatrixXd& m);
bool is_symmetric(const MatrixXd& m, double rel_tol = 1e-12);

} // namespace tcov
