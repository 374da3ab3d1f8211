#include "tensorcov/io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace tcov {

namespace {

void put_u64(std::string& out, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

} // namespace

std::string encode_mwt1(const Tensor& x)
{
    if (x.order() > 255) throw std::invalid_argument("MWT1 supports at most 255 modes");
    std::string out = "MWT1";
    out.push_back(static_cast<char>(x.order()));
    for (Index d : x.dims()) put_u64(out, static_cast<std::uint64_t>(d));
    out.reserve(out.size() + 8 * static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(x.data()[i]));
    return out;
}

Tensor decode_mwt1(const std::string& in)
{
    if (in.size() < 5 || in.compare(0, 4, "MWT1") != 0) throw std::runtime_error("MWT1: bad magic");
    const std::size_t K = static_cast<unsigned char>(in[4]);
    if (K == 0) throw std::runtime_error("MWT1: zero-order tensor");
    std::size_t pos = 5;
    if (in.size() < pos + 8 * K) throw std::runtime_error("MWT1: truncated header");
    Dims dims;
    std::uint64_t total = 1;
    for (std::size_t k = 0; k < K; ++k, pos += 8) {
        const std::uint64_t d = get_u64(in, pos);
        if (d == 0 || d > (std::uint64_t{1} << 40)) throw std::runtime_error("MWT1: invalid dimension");
        total *= d;
        if (total > (std::uint64_t{1} << 40)) throw std::runtime_error("MWT1: tensor too large");
        dims.push_back(static_cast<Index>(d));
    }
    if (in.size() - pos != 8 * total) throw std::runtime_error("MWT1: payload length does not match dims");
    VectorXd data(static_cast<Index>(total));
    for (Index i = 0; i < data.size(); ++i, pos += 8) data[i] = std::bit_cast<double>(get_u64(in, pos));
    return Tensor(std::move(dims), std::move(data));
}

void write_mwt1(const std::filesystem::path& path, const Tensor& x) { write_file_atomic(path, encode_mwt1(x)); }

Tensor read_mwt1(const std::filesystem::path& path) { return decode_mwt1(read_file(path)); }

std::string format_double(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_triplets(const std::filesystem::path& path, const SpMat& m)
{
    std::ostringstream os;
    os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
    SpMat c = m;
    c.makeCompressed();
    // row-major listing so the file reads naturally
    std::vector<std::tuple<Index, Index, double>> entries;
    for (Index j = 0; j < c.outerSize(); ++j)
        for (SpMat::InnerIterator it(c, j); it; ++it) entries.emplace_back(it.row(), it.col(), it.value());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });
    for (const auto& [i, j, v] : entries) os << i << ' ' << j << ' ' << format_double(v) << '\n';
    write_file_atomic(path, os.str());
}

SpMat read_triplets(const std::filesystem::path& path)
{
    std::istringstream is(read_file(path));
    Index rows = 0, cols = 0, nnz = 0;
    if (!(is >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
        throw std::runtime_error("triplets: bad header in " + path.string());
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(nnz));
    for (Index n = 0; n < nnz; ++n) {
        Index i = 0, j = 0;
        double v = 0;
        if (!(is >> i >> j >> v)) throw std::runtime_error("triplets: truncated file " + path.string());
        if (i < 0 || i >= rows || j < 0 || j >= cols) throw std::runtime_error("triplets: index out of range");
        trips.emplace_back(i, j, v);
    }
    SpMat m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

void write_csv_matrix(const std::filesystem::path& path, const MatrixXd& m)
{
    std::string out;
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_double(m(i, j));
        }
        out += '\n';
    }
    write_file_atomic(path, out);
}

MatrixXd read_csv_matrix(const std::filesystem::path& path)
{
    std::istringstream is(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("csv: ragged rows in " + path.string());
        rows.push_back(std::move(row));
    }
    MatrixXd m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
    return m;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace tcov
