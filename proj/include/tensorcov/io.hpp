#pragma once

#include <filesystem>
#include <string>

#include <Eigen/SparseCore>

#include "tensorcov/tensor.hpp"

namespace tcov {

using SpMat = Eigen::SparseMatrix<double>;

// MWT1: magic "MWT1", u8 order K, K little-endian u64 dims, then the data as
// little-endian f64 in colexicographic order.
void write_mwt1(const std::filesystem::path& path, const Tensor& x);
Tensor read_mwt1(const std::filesystem::path& path);
std::string encode_mwt1(const Tensor& x);
Tensor decode_mwt1(const std::string& bytes);

// Sparse triplet text: "rows cols nnz" header then 0-based "i j value" lines.
void write_triplets(const std::filesystem::path& path, const SpMat& m);
SpMat read_triplets(const std::filesystem::path& path);

// Dense matrix as comma separated rows, values printed with %.17g.
void write_csv_matrix(const std::filesystem::path& path, const MatrixXd& m);
MatrixXd read_csv_matrix(const std::filesystem::path& path);

/// Write to a sibling temporary and rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

std::string format_double(double v);

} // namespace tcov
