#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tensorcov/estimators.hpp"
#include "tensorcov/generators.hpp"

namespace tcov {

/// One method column of an experiment. Penalties come from the rate rule
/// lambda = C * rate when c_grid is set, otherwise lambda is used verbatim.
/// "ind-lasso" is accepted alongside the estimator names for prediction runs.
struct MethodSpec {
    std::string name;
    std::vector<double> c_grid;
    std::vector<double> lambda;
    double tol = 1e-5;
    int max_iter = 500;
    double inner_tol = 1e-6;
    double time_limit_seconds = 0;
};

/// Forward prediction of the last time frame. The trailing holdout fraction
/// of the samples is the test split; with selection "validation" the
/// trailing validation fraction of the training split picks C.
struct PredictionSpec {
    double holdout_fraction = 0.2;
    double validation_fraction = 0.25;
};

struct ExperimentSpec {
    ProcessSpec process;
    Index samples = 50;
    std::vector<std::uint64_t> seeds;
    std::vector<MethodSpec> methods;
    std::vector<std::string> metrics = {"fnorm", "mcc", "runtime"};
    std::filesystem::path output_dir;
    std::optional<PredictionSpec> prediction;
    std::string selection = "fnorm";  // or "validation"
    int workers = 0;                   // 0 reads TENSORCOV_WORKERS, default 1

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentSpec from_json(const nlohmann::json& j);
};

/// Default grid: 8 log-spaced values over [1e-2, 1e1].
std::vector<double> default_c_grid();

/// 4x4 grid, T = 10, N = 25.
void apply_small_preset(ExperimentSpec& spec);

struct ResultRecord {
    std::string method;
    std::uint64_t seed = 0;
    double c = 0;  // selected rate constant, 0 for fixed penalties
    std::vector<double> lambda_used;
    std::string metric;
    double value = 0;
    double wall_time_seconds = 0;
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    std::string error;
};

nlohmann::json to_json(const ResultRecord& r);
ResultRecord record_from_json(const nlohmann::json& j);

/// Generate, fit, evaluate. Cells are (method, seed); each finished cell is
/// written to output_dir/cells and reused on a rerun with the same spec.
std::vector<ResultRecord> run_experiment(const ExperimentSpec& spec);

/// Criterion values of every grid point of one cell, for auditing the
/// selection. Recomputes the cell without touching the output directory.
struct GridPoint {
    double c = 0;
    double criterion = 0;
};
std::vector<GridPoint> evaluate_grid(const ExperimentSpec& spec, const MethodSpec& method, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Summary tables

enum class TableFormat { Csv, Json };

struct TableRow {
    std::string method;
    std::string metric;
    double mean = 0;
    double se = 0;  // sample standard deviation over sqrt(n)
    Index n = 0;
};

/// One row per (method, metric) over the non-failed records, in first-seen order.
std::vector<TableRow> summarize(const std::vector<ResultRecord>& records);
std::string format_table(const std::vector<TableRow>& rows, TableFormat format, bool transpose = false);
/// Inverse of the non-transposed CSV layout.
std::vector<TableRow> parse_table_csv(const std::string& text);
void emit_table(const std::vector<ResultRecord>& records, const std::filesystem::path& path, TableFormat format,
                bool transpose = false);

// ---------------------------------------------------------------------------
// Heatmaps

/// Binary PGM (P5) of |m|. Zeros are white; nonzero magnitudes map linearly
/// to 254 (smallest) .. 0 (largest). Without zero_is_white the scale starts
/// at zero instead of the smallest nonzero magnitude. Entries with
/// |m| <= threshold are treated as zero.
std::string encode_heatmap(const MatrixXd& m, bool zero_is_white = true, double threshold = 0);
void emit_heatmap(const MatrixXd& m, const std::filesystem::path& path, bool zero_is_white = true,
                  double threshold = 0);

} // namespace tcov
