#include "tensorcov/harness.hpp"

#include <cmath>
#include <stdexcept>

#include "tensorcov/io.hpp"

namespace tcov {

std::string encode_heatmap(const MatrixXd& m, bool zero_is_white, double threshold)
{
    if (!m.allFinite()) throw std::invalid_argument("heatmap: matrix has non-finite entries");
    MatrixXd a = m.cwiseAbs();
    if (threshold > 0) a = (a.array() > threshold).select(a, 0.0);

    double lo = std::numeric_limits<double>::infinity(), hi = 0;
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            if (a(i, j) != 0) {
                lo = std::min(lo, a(i, j));
                hi = std::max(hi, a(i, j));
            }
    if (!zero_is_white) lo = 0;

    std::string out = "P5\n" + std::to_string(a.cols()) + " " + std::to_string(a.rows()) + "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(a.size()));
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) {
            const double v = a(i, j);
            unsigned char px = 255;
            if (v != 0) {
                const double t = hi > lo ? (v - lo) / (hi - lo) : 1.0;
                // Nonzeros stop at 254 so they never read as zero.
                px = static_cast<unsigned char>(std::lround(254.0 * (1.0 - t)));
            }
            out.push_back(static_cast<char>(px));
        }
    return out;
}

void emit_heatmap(const MatrixXd& m, const std::filesystem::path& path, bool zero_is_white, double threshold)
{
    write_file_atomic(path, encode_heatmap(m, zero_is_white, threshold));
}

} // namespace tcov
