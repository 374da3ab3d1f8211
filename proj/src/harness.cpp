#include "tensorcov/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "tensorcov/evaluation.hpp"
#include "tensorcov/io.hpp"

namespace tcov {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* kIndLasso = "ind-lasso";

bool is_ind_lasso(const MethodSpec& m) { return m.name == kIndLasso; }

std::string layout_name(Layout l) { return l == Layout::Cube ? "cube" : "flat"; }

Layout layout_from_string(const std::string& s)
{
    if (s == "flat") return Layout::Flat;
    if (s == "cube") return Layout::Cube;
    throw std::invalid_argument("unknown layout '" + s + "'");
}

json process_to_json(const ProcessSpec& p)
{
    return {{"kind", std::string(to_string(p.kind))},
            {"d1", p.d1},
            {"d2", p.d2},
            {"T", p.T},
            {"a", p.a},
            {"theta", p.theta},
            {"epsilon", p.epsilon},
            {"h", p.h},
            {"dt", p.dt},
            {"sigma_w", p.sigma_w},
            {"layout", layout_name(p.layout)}};
}

ProcessSpec process_from_json(const json& j)
{
    ProcessSpec p;
    if (j.contains("kind")) p.kind = process_kind_from_string(j.at("kind").get<std::string>());
    p.d1 = j.value("d1", p.d1);
    p.d2 = j.value("d2", p.d2);
    p.T = j.value("T", p.T);
    p.a = j.value("a", p.a);
    p.theta = j.value("theta", p.theta);
    p.epsilon = j.value("epsilon", p.epsilon);
    p.h = j.value("h", p.h);
    p.dt = j.value("dt", p.dt);
    p.sigma_w = j.value("sigma_w", p.sigma_w);
    if (j.contains("layout")) p.layout = layout_from_string(j.at("layout").get<std::string>());
    return p;
}

std::uint64_t fnv1a(const std::string& s)
{
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int worker_count(const ExperimentSpec& spec)
{
    if (spec.workers > 0) return spec.workers;
    if (const char* env = std::getenv("TENSORCOV_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

/// Bytes currently available, or 0 when unknown.
double available_memory()
{
    std::ifstream in("/proc/meminfo");
    std::string key;
    double kb = 0;
    std::string unit;
    while (in >> key >> kb >> unit)
        if (key == "MemAvailable:") return kb * 1024.0;
    return 0;
}

// ---------------------------------------------------------------------------
// Shared truth, computed once per experiment.

struct Truth {
    GroundTruth gt;
    std::optional<SupportPattern> support;
    std::optional<MatrixXd> covariance;
};

Truth make_truth(const ExperimentSpec& spec)
{
    Truth t{build_process(spec.process), std::nullopt, std::nullopt};
    if (t.gt.precision) t.support = extract_support(*t.gt.precision, 1e-12);
    bool needs_cov = false;
    for (const auto& m : spec.methods)
        if (m.name == "kpca" || m.name == "kp-ls") needs_cov = true;
    if (needs_cov && t.gt.size() <= 4096) t.covariance = t.gt.covariance_dense(4096);
    return t;
}

// ---------------------------------------------------------------------------
// Fitting

struct Split {
    Dataset train;
    Dataset test;
};

Dataset columns(const Dataset& d, Index from, Index count)
{
    return Dataset{d.dims, d.samples.middleCols(from, count)};
}

Split split_tail(const Dataset& d, double fraction)
{
    const Index n = d.count();
    Index tail = static_cast<Index>(std::llround(fraction * static_cast<double>(n)));
    tail = std::clamp<Index>(tail, 1, n - 2);
    return {columns(d, 0, n - tail), columns(d, n - tail, tail)};
}

struct Fit {
    FitResult result;      // in standardized units
    StructuredMatrix model;  // in data units
    double scale2 = 1;
    double c = 0;
    std::vector<double> lambda;
    IndLasso lasso;
};

void check_dense_memory(Index d, const char* what)
{
    const double need = 6.0 * static_cast<double>(d) * static_cast<double>(d) * sizeof(double);
    const double have = available_memory();
    if (have > 0 && need > 0.8 * have) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s: dense working set of %.1f GB exceeds available memory (%.1f GB)", what,
                      need / 1e9, have / 1e9);
        throw std::runtime_error(buf);
    }
}

Index time_mode_of(const Dims& dims) { return static_cast<Index>(dims.size()) - 1; }

/// Histories (time-major, all but the last frame) and last-frame targets.
void prediction_design(const Dataset& d, MatrixXd& histories, MatrixXd& targets)
{
    const Index tm = time_mode_of(d.dims);
    const Index q = d.dim() / d.dims[tm];
    const Index P = d.dim() - q;
    histories.resize(d.count(), P);
    targets.resize(d.count(), q);
    for (Index n = 0; n < d.count(); ++n) {
        const VectorXd v = to_time_major(d.samples.col(n), d.dims, tm);
        histories.row(n) = v.head(P).transpose();
        targets.row(n) = v.tail(q).transpose();
    }
}

Fit fit_once(const MethodSpec& ms, const Dataset& train, double c, bool use_grid, const Fit* warm)
{
    Fit out;
    out.c = c;
    if (is_ind_lasso(ms)) {
        MatrixXd h, y;
        prediction_design(train, h, y);
        const double n = static_cast<double>(h.rows());
        const double sc2 = h.squaredNorm() / (n * static_cast<double>(h.cols()));
        const double lambda =
            use_grid ? c * sc2 * std::sqrt(std::log(static_cast<double>(h.cols())) / n) : ms.lambda.at(0);
        const auto start = std::chrono::steady_clock::now();
        out.lasso = ind_lasso(h, y, lambda);
        out.result.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.result.converged = true;
        out.lambda = {lambda};
        return out;
    }

    const Method method = method_from_string(ms.name);
    EstimatorConfig cfg;
    cfg.tol = ms.tol;
    cfg.max_iter = ms.max_iter;
    cfg.inner_tol = ms.inner_tol;
    cfg.time_limit_seconds = ms.time_limit_seconds;
    const Index N = train.count();
    cfg.lambda = use_grid ? lambda_from_rate(method, train.dims, N, c) : ms.lambda;
    if (warm && !warm->result.factors.factors.empty()) {
        cfg.init = InitPolicy::Warm;
        cfg.warm = FactorSet{warm->result.factors.factors, Normalization::None};
    }

    const SecondMoments raw = SecondMoments::from_data(train, true);
    // Fit on data standardized to unit average variance.
    const double sc2 = raw.trace() / static_cast<double>(raw.dim());
    if (!(sc2 > 0)) throw std::runtime_error("training data has zero variance");
    const SecondMoments s = raw.scaled(1.0 / sc2);

    switch (method) {
    case Method::Glasso: {
        check_dense_memory(s.dim(), "glasso");
        if (warm) {
            cfg.init = InitPolicy::Warm;
            cfg.warm = FactorSet{{warm->result.model.dense_matrix()}, Normalization::None};
        }
        out.result = glasso(s.dense(), cfg.lambda.at(0), cfg);
        out.result.factors.factors.clear();
        break;
    }
    case Method::KpLs: out.result = kp_ls(s); break;
    case Method::Kpca: out.result = kpca(s, cfg.lambda.at(0)); break;
    case Method::Tlasso: out.result = tlasso(s, cfg); break;
    case Method::TeraLasso: out.result = teralasso(s, cfg); break;
    case Method::SgPalm: out.result = sg_palm(s, cfg); break;
    }
    out.scale2 = sc2;
    out.model = out.result.is_covariance ? out.result.model.scaled(sc2) : out.result.model.scaled(1.0 / sc2);
    out.lambda = cfg.lambda;
    return out;
}

/// Inverse of a fitted covariance, densely.
MatrixXd dense_precision_of(const Fit& f, Index cap)
{
    if (f.result.is_covariance) {
        const MatrixXd c = f.model.materialize(cap);
        Eigen::LDLT<MatrixXd> ldlt(c);
        return ldlt.solve(MatrixXd::Identity(c.rows(), c.cols()));
    }
    return f.model.materialize(cap);
}

SupportPattern structured_support(const StructuredMatrix& m, double threshold)
{
    SupportPattern p;
    p.dim = m.size();
    p.threshold = threshold;
    if (m.structure() == Structure::Dense) return extract_support(m.dense_matrix(), threshold);
    VectorXd e = VectorXd::Zero(m.size());
    for (Index j = 0; j < m.size(); ++j) {
        e[j] = 1;
        const VectorXd col = m.apply(e);
        e[j] = 0;
        for (Index i = 0; i < j; ++i)
            if (std::abs(col[i]) > threshold) p.pairs.emplace(i, j);
    }
    return p;
}

double prediction_error(const Fit& f, const Dataset& test)
{
    MatrixXd h, y;
    prediction_design(test, h, y);
    double total = 0;
    if (!f.lasso.coef.size()) {
        const Index tm = time_mode_of(test.dims);
        PredictorBlocks blocks = f.result.is_covariance
                                     ? predictor_blocks(dense_precision_of(f, 8192), test.dims, tm)
                                     : predictor_blocks(f.model, test.dims, tm);
        for (Index n = 0; n < h.rows(); ++n)
            total += nrmse(forward_predict(blocks, h.row(n).transpose()), y.row(n).transpose());
    } else {
        for (Index n = 0; n < h.rows(); ++n)
            total += nrmse(f.lasso.predict(h.row(n).transpose()), y.row(n).transpose());
    }
    return total / static_cast<double>(h.rows());
}

double fnorm_of(const Fit& f, const Truth& truth)
{
    if (f.result.is_covariance) {
        if (!truth.covariance) throw std::runtime_error("covariance truth too large to form densely");
        return frob_error(f.model, *truth.covariance);
    }
    if (!truth.gt.precision) throw std::runtime_error("precision truth too large to form");
    return frob_error(f.model, *truth.gt.precision);
}

struct CellOutcome {
    Fit fit;
    std::vector<GridPoint> grid;
};

CellOutcome run_cell(const ExperimentSpec& spec, const MethodSpec& ms, std::uint64_t seed, const Truth& truth)
{
    const Dataset all = sample_process(truth.gt, spec.samples, spec.process.sigma_w, seed);
    Dataset train = all, test;
    if (spec.prediction) {
        Split sp = split_tail(all, spec.prediction->holdout_fraction);
        train = std::move(sp.train);
        test = std::move(sp.test);
    }

    const bool use_grid = !ms.c_grid.empty();
    CellOutcome out;
    if (!use_grid) {
        out.fit = fit_once(ms, train, 0, false, nullptr);
        return out;
    }

    const bool by_validation = spec.selection == "validation" || is_ind_lasso(ms);
    Dataset fit_part = train, val_part;
    if (by_validation) {
        if (!spec.prediction) throw std::invalid_argument("validation selection needs a prediction block");
        Split sp = split_tail(train, spec.prediction->validation_fraction);
        fit_part = std::move(sp.train);
        val_part = std::move(sp.test);
    }

    // Descending C so each fit warm-starts from a sparser neighbour.
    std::vector<double> grid = ms.c_grid;
    std::sort(grid.begin(), grid.end(), std::greater<>());
    std::optional<Fit> prev, best;
    double best_value = std::numeric_limits<double>::infinity();
    for (double c : grid) {
        Fit f = fit_once(ms, fit_part, c, true, prev ? &*prev : nullptr);
        // A single grid point needs no criterion, which may be costly to form.
        const double v = grid.size() == 1 ? std::numeric_limits<double>::quiet_NaN()
                         : by_validation ? prediction_error(f, val_part) : fnorm_of(f, truth);
        out.grid.push_back({c, v});
        if (grid.size() == 1 || v < best_value) {
            best_value = v;
            best = f;
        }
        prev = std::move(f);
    }
    if (!best) throw std::runtime_error("no grid point produced a finite criterion");
    out.fit = by_validation ? fit_once(ms, train, best->c, true, nullptr) : std::move(*best);
    return out;
}

std::vector<ResultRecord> evaluate_cell(const ExperimentSpec& spec, const MethodSpec& ms, std::uint64_t seed,
                                        const Truth& truth, const Fit& fit)
{
    std::optional<Dataset> test;
    if (spec.prediction) {
        const Dataset all = sample_process(truth.gt, spec.samples, spec.process.sigma_w, seed);
        test = split_tail(all, spec.prediction->holdout_fraction).test;
    }
    std::vector<ResultRecord> out;
    for (const std::string& metric : spec.metrics) {
        ResultRecord r;
        r.method = ms.name;
        r.seed = seed;
        r.c = fit.c;
        r.lambda_used = fit.lambda;
        r.metric = metric;
        r.wall_time_seconds = fit.result.wall_time_seconds;
        r.iterations = fit.result.iterations;
        r.converged = fit.result.converged;
        if (metric == "runtime") {
            r.value = fit.result.wall_time_seconds;
        } else if (metric == "nrmse") {
            r.value = prediction_error(fit, *test);
        } else if (is_ind_lasso(ms)) {
            continue;  // no covariance model to score
        } else if (metric == "fnorm") {
            r.value = fnorm_of(fit, truth);
        } else if (metric == "mcc") {
            if (!truth.support) throw std::runtime_error("precision truth too large for mcc");
            const SupportPattern est = fit.result.is_covariance
                                           ? extract_support(dense_precision_of(fit, 4096))
                                           : structured_support(fit.model, kSupportThreshold);
            r.value = mcc(est, *truth.support);
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ResultRecord> failed_records(const ExperimentSpec& spec, const MethodSpec& ms, std::uint64_t seed,
                                         const std::string& error)
{
    std::vector<ResultRecord> out;
    for (const std::string& metric : spec.metrics) {
        if (is_ind_lasso(ms) && (metric == "fnorm" || metric == "mcc")) continue;
        ResultRecord r;
        r.method = ms.name;
        r.seed = seed;
        r.metric = metric;
        r.value = std::numeric_limits<double>::quiet_NaN();
        r.failed = true;
        r.error = error;
        out.push_back(std::move(r));
    }
    return out;
}

std::string spec_key(const ExperimentSpec& spec)
{
    json j = spec.to_json();
    j.erase("output_dir");
    j.erase("workers");
    return j.dump();
}

double finite_or(double v) { return std::isfinite(v) ? v : 0.0; }

std::string csv_escape(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    return out + "\"";
}

std::string records_csv(const std::vector<ResultRecord>& records)
{
    std::ostringstream os;
    os << "method,seed,c,lambda,metric,value,wall_time_seconds,iterations,converged,failed\n";
    for (const auto& r : records) {
        std::string lam;
        for (std::size_t i = 0; i < r.lambda_used.size(); ++i)
            lam += (i ? ";" : "") + format_double(r.lambda_used[i]);
        os << csv_escape(r.method) << ',' << r.seed << ',' << format_double(r.c) << ',' << lam << ','
           << csv_escape(r.metric) << ',' << (r.failed ? "nan" : format_double(r.value)) << ','
           << format_double(r.wall_time_seconds) << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ','
           << (r.failed ? 1 : 0) << '\n';
    }
    return os.str();
}

} // namespace

// ---------------------------------------------------------------------------

std::vector<double> default_c_grid()
{
    std::vector<double> g;
    for (int i = 0; i < 8; ++i) g.push_back(std::pow(10.0, -2.0 + 3.0 * i / 7.0));
    return g;
}

void apply_small_preset(ExperimentSpec& spec)
{
    spec.process.d1 = 4;
    spec.process.d2 = 4;
    spec.process.T = 10;
    spec.samples = 25;
}

void ExperimentSpec::validate() const
{
    process.validate();
    if (seeds.empty()) throw std::invalid_argument("experiment: no seeds");
    if (methods.empty()) throw std::invalid_argument("experiment: no methods");
    if (samples < 2) throw std::invalid_argument("experiment: need at least 2 samples");
    if (output_dir.empty()) throw std::invalid_argument("experiment: output_dir is empty");
    if (selection != "fnorm" && selection != "validation")
        throw std::invalid_argument("experiment: selection must be fnorm or validation");
    for (const auto& m : methods) {
        if (!is_ind_lasso(m)) method_from_string(m.name);
        if (m.c_grid.empty() && m.lambda.empty())
            throw std::invalid_argument("experiment: method '" + m.name + "' has neither c_grid nor lambda");
        for (double c : m.c_grid)
            if (!(c > 0)) throw std::invalid_argument("experiment: C values must be positive");
        if (is_ind_lasso(m) && !prediction) throw std::invalid_argument("experiment: ind-lasso needs prediction");
    }
    for (const auto& metric : metrics) {
        if (metric != "fnorm" && metric != "mcc" && metric != "nrmse" && metric != "runtime")
            throw std::invalid_argument("experiment: unknown metric '" + metric + "'");
        if (metric == "nrmse" && !prediction) throw std::invalid_argument("experiment: nrmse needs prediction");
    }
    if (prediction) {
        if (!(prediction->holdout_fraction > 0 && prediction->holdout_fraction < 1) ||
            !(prediction->validation_fraction > 0 && prediction->validation_fraction < 1))
            throw std::invalid_argument("experiment: prediction fractions must lie in (0, 1)");
        if (process.kind == ProcessKind::Poisson2D)
            throw std::invalid_argument("experiment: prediction needs a time mode");
    }
}

json ExperimentSpec::to_json() const
{
    json ms = json::array();
    for (const auto& m : methods)
        ms.push_back({{"name", m.name},
                      {"c_grid", m.c_grid},
                      {"lambda", m.lambda},
                      {"tol", m.tol},
                      {"max_iter", m.max_iter},
                      {"inner_tol", m.inner_tol},
                      {"time_limit_seconds", m.time_limit_seconds}});
    json j = {{"process", process_to_json(process)},
              {"samples", samples},
              {"seeds", seeds},
              {"methods", ms},
              {"metrics", metrics},
              {"output_dir", output_dir.string()},
              {"selection", selection},
              {"workers", workers}};
    if (prediction)
        j["prediction"] = {{"holdout_fraction", prediction->holdout_fraction},
                           {"validation_fraction", prediction->validation_fraction}};
    return j;
}

ExperimentSpec ExperimentSpec::from_json(const json& j)
{
    ExperimentSpec s;
    if (j.contains("process")) s.process = process_from_json(j.at("process"));
    s.samples = j.value("samples", s.samples);
    s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& mj : j.at("methods")) {
        MethodSpec m;
        if (mj.is_string()) {
            m.name = mj.get<std::string>();
            m.c_grid = default_c_grid();
        } else {
            m.name = mj.at("name").get<std::string>();
            if (mj.contains("c_grid")) {
                const auto& g = mj.at("c_grid");
                m.c_grid = g.is_string() && g.get<std::string>() == "default" ? default_c_grid()
                                                                             : g.get<std::vector<double>>();
            }
            if (mj.contains("lambda")) {
                const auto& l = mj.at("lambda");
                m.lambda = l.is_number() ? std::vector<double>{l.get<double>()} : l.get<std::vector<double>>();
            }
            if (m.c_grid.empty() && m.lambda.empty()) m.c_grid = default_c_grid();
            m.tol = mj.value("tol", m.tol);
            m.max_iter = mj.value("max_iter", m.max_iter);
            m.inner_tol = mj.value("inner_tol", m.inner_tol);
            m.time_limit_seconds = mj.value("time_limit_seconds", m.time_limit_seconds);
        }
        s.methods.push_back(std::move(m));
    }
    if (j.contains("metrics")) s.metrics = j.at("metrics").get<std::vector<std::string>>();
    s.output_dir = j.value("output_dir", std::string("results"));
    s.selection = j.value("selection", s.selection);
    s.workers = j.value("workers", 0);
    if (j.contains("prediction") && !j.at("prediction").is_null()) {
        PredictionSpec p;
        p.holdout_fraction = j.at("prediction").value("holdout_fraction", p.holdout_fraction);
        p.validation_fraction = j.at("prediction").value("validation_fraction", p.validation_fraction);
        s.prediction = p;
    }
    return s;
}

json to_json(const ResultRecord& r)
{
    json j = {{"method", r.method},
              {"seed", r.seed},
              {"c", r.c},
              {"lambda_used", r.lambda_used},
              {"metric", r.metric},
              {"wall_time_seconds", r.wall_time_seconds},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"failed", r.failed}};
    j["value"] = std::isfinite(r.value) ? json(r.value) : json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

ResultRecord record_from_json(const json& j)
{
    ResultRecord r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.c = j.value("c", 0.0);
    r.lambda_used = j.value("lambda_used", std::vector<double>{});
    r.metric = j.at("metric").get<std::string>();
    r.value = j.at("value").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("value").get<double>();
    r.wall_time_seconds = j.value("wall_time_seconds", 0.0);
    r.iterations = j.value("iterations", 0);
    r.converged = j.value("converged", false);
    r.failed = j.value("failed", false);
    r.error = j.value("error", std::string());
    return r;
}

std::vector<GridPoint> evaluate_grid(const ExperimentSpec& spec, const MethodSpec& method, std::uint64_t seed)
{
    const Truth truth = make_truth(spec);
    return run_cell(spec, method, seed, truth).grid;
}

std::vector<ResultRecord> run_experiment(const ExperimentSpec& spec)
{
    spec.validate();
    const fs::path cell_dir = spec.output_dir / "cells";
    fs::create_directories(cell_dir);
    const std::string key = spec_key(spec);
    const Truth truth = make_truth(spec);

    struct Cell {
        std::size_t method;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t m = 0; m < spec.methods.size(); ++m)
        for (std::uint64_t s : spec.seeds) cells.push_back({m, s});
    std::vector<std::vector<ResultRecord>> results(cells.size());

    auto cell_path = [&](const Cell& c) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key)));
        return cell_dir / (std::to_string(c.method) + "_" + spec.methods[c.method].name + "_seed" +
                           std::to_string(c.seed) + "_" + buf + ".json");
    };

    auto work = [&](std::size_t i) {
        const Cell& c = cells[i];
        const MethodSpec& ms = spec.methods[c.method];
        const fs::path path = cell_path(c);
        if (fs::exists(path)) {
            try {
                const json j = json::parse(read_file(path));
                if (j.at("spec") == key) {
                    for (const auto& r : j.at("records")) results[i].push_back(record_from_json(r));
                    return;
                }
            } catch (const std::exception&) {
                // Unreadable cell files are recomputed.
            }
        }
        try {
            CellOutcome out = run_cell(spec, ms, c.seed, truth);
            results[i] = evaluate_cell(spec, ms, c.seed, truth, out.fit);
            json grid = json::array();
            for (const auto& g : out.grid) grid.push_back({{"c", g.c}, {"criterion", finite_or(g.criterion)}});
            json recs = json::array();
            for (const auto& r : results[i]) recs.push_back(to_json(r));
            write_file_atomic(path, json{{"spec", key}, {"grid", grid}, {"records", recs}}.dump(1));
        } catch (const std::exception& e) {
            results[i] = failed_records(spec, ms, c.seed, e.what());
        }
    };

    const int workers = std::min<int>(worker_count(spec), static_cast<int>(cells.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < cells.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < cells.size(); i = next++) work(i);
            });
        for (auto& t : pool) t.join();
    }

    std::vector<ResultRecord> all;
    for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
    write_file_atomic(spec.output_dir / "records.csv", records_csv(all));
    if (!summarize(all).empty()) emit_table(all, spec.output_dir / "summary.csv", TableFormat::Csv);
    return all;
}

// ---------------------------------------------------------------------------

std::vector<TableRow> summarize(const std::vector<ResultRecord>& records)
{
    std::vector<TableRow> rows;
    std::map<std::pair<std::string, std::string>, std::vector<double>> values;
    for (const auto& r : records) {
        if (r.failed) continue;
        auto k = std::pair{r.method, r.metric};
        if (!values.count(k)) rows.push_back({r.method, r.metric, 0, 0, 0});
        values[k].push_back(r.value);
    }
    for (auto& row : rows) {
        const auto& v = values[{row.method, row.metric}];
        const double n = static_cast<double>(v.size());
        double mean = 0;
        for (double x : v) mean += x;
        mean /= n;
        double ss = 0;
        for (double x : v) ss += (x - mean) * (x - mean);
        row.mean = mean;
        row.se = v.size() > 1 ? std::sqrt(ss / (n - 1)) / std::sqrt(n) : 0.0;
        row.n = static_cast<Index>(v.size());
    }
    return rows;
}

std::string format_table(const std::vector<TableRow>& rows, TableFormat format, bool transpose)
{
    if (format == TableFormat::Json) {
        json arr = json::array();
        for (const auto& r : rows)
            arr.push_back({{"method", r.method}, {"metric", r.metric}, {"mean", r.mean}, {"se", r.se}, {"n", r.n}});
        if (!transpose) return arr.dump(1) + "\n";
        json by_metric = json::object();
        for (const auto& r : rows) by_metric[r.metric][r.method] = {{"mean", r.mean}, {"se", r.se}, {"n", r.n}};
        return by_metric.dump(1) + "\n";
    }
    std::ostringstream os;
    if (!transpose) {
        os << "method,metric,mean,se,n\n";
        for (const auto& r : rows)
            os << csv_escape(r.method) << ',' << csv_escape(r.metric) << ',' << format_double(r.mean) << ','
               << format_double(r.se) << ',' << r.n << '\n';
        return os.str();
    }
    // Methods as columns, one row per metric.
    std::vector<std::string> methods, metrics;
    for (const auto& r : rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
        if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end()) metrics.push_back(r.metric);
    }
    os << "metric";
    for (const auto& m : methods) os << ',' << csv_escape(m + " mean") << ',' << csv_escape(m + " se");
    os << '\n';
    for (const auto& metric : metrics) {
        os << csv_escape(metric);
        for (const auto& m : methods) {
            auto it = std::find_if(rows.begin(), rows.end(),
                                   [&](const TableRow& r) { return r.method == m && r.metric == metric; });
            if (it == rows.end())
                os << ",,";
            else
                os << ',' << format_double(it->mean) << ',' << format_double(it->se);
        }
        os << '\n';
    }
    return os.str();
}

std::vector<TableRow> parse_table_csv(const std::string& text)
{
    std::vector<TableRow> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "method,metric,mean,se,n")
        throw std::invalid_argument("table csv: unexpected header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char ch = line[i];
            if (quoted) {
                if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else if (ch == '"') {
                    quoted = false;
                } else {
                    cur.push_back(ch);
                }
            } else if (ch == '"') {
                quoted = true;
            } else if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(ch);
            }
        }
        fields.push_back(cur);
        if (fields.size() != 5) throw std::invalid_argument("table csv: expected 5 fields in '" + line + "'");
        rows.push_back({fields[0], fields[1], std::stod(fields[2]), std::stod(fields[3]), std::stoll(fields[4])});
    }
    return rows;
}

void emit_table(const std::vector<ResultRecord>& records, const fs::path& path, TableFormat format, bool transpose)
{
    if (records.empty()) throw std::invalid_argument("emit_table: no records");
    write_file_atomic(path, format_table(summarize(records), format, transpose));
}

} // namespace tcov
