#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tensorcov/estimators.hpp"
#include "tensorcov/evaluation.hpp"
#include "tensorcov/generators.hpp"
#include "tensorcov/harness.hpp"
#include "tensorcov/io.hpp"

using namespace tcov;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct GenerateArgs {
    std::string kind = "poisson-ar1";
    ProcessSpec spec;
    std::string layout = "flat";
    Index samples = 50;
    std::uint64_t seed = 0;
    std::string out;
};

struct FitArgs {
    std::string data;
    std::string method;
    std::vector<double> lambda;
    double c = 0;
    double tol = 1e-5;
    int max_iter = 500;
    std::string out;
};

struct EvalArgs {
    std::vector<std::string> fits;
    std::string truth;
    double threshold = kSupportThreshold;
};

struct BenchArgs {
    std::string spec;
    std::string out;
    bool small = false;
    std::string format = "csv";
    bool transpose = false;
    int workers = 0;
};

struct HeatmapArgs {
    std::string in;
    std::string out;
    double threshold = 0;
    bool scale_from_zero = false;
};

int run_generate(const GenerateArgs& a)
{
    ProcessSpec spec = a.spec;
    spec.kind = process_kind_from_string(a.kind);
    spec.layout = a.layout == "cube" ? Layout::Cube : Layout::Flat;
    spec.seed = a.seed;
    const GroundTruth gt = build_process(spec);
    const Dataset data = sample_process(gt, a.samples, spec.sigma_w, a.seed);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    write_mwt1(dir / "data.mwt1", data.stacked());
    if (gt.precision) write_triplets(dir / "precision.triplets", *gt.precision);
    const json meta = {{"kind", a.kind},      {"d1", spec.d1},           {"d2", spec.d2},       {"T", spec.T},
                       {"a", spec.a},         {"theta", spec.theta},     {"epsilon", spec.epsilon},
                       {"h", spec.h},         {"dt", spec.dt},           {"sigma_w", spec.sigma_w},
                       {"layout", a.layout},  {"samples", a.samples},    {"seed", a.seed},
                       {"tensor_dims", gt.tensor_dims}};
    write_file_atomic(dir / "truth.json", meta.dump(1) + "\n");
    std::printf("wrote %s (%lld samples of dimension %lld)\n", dir.string().c_str(),
                static_cast<long long>(data.count()), static_cast<long long>(data.dim()));
    return 0;
}

int run_fit(const FitArgs& a)
{
    const Method method = method_from_string(a.method);
    const Dataset data = Dataset::from_stacked(read_mwt1(a.data));
    EstimatorConfig cfg;
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    if (a.c > 0)
        cfg.lambda = lambda_from_rate(method, data.dims, data.count(), a.c);
    else if (!a.lambda.empty())
        cfg.lambda = a.lambda;
    else
        throw std::invalid_argument("fit: give --lambda or --C");
    if (cfg.lambda.size() == 1 && method != Method::Glasso && method != Method::Kpca)
        cfg.lambda.assign(data.dims.size(), cfg.lambda.front());

    const SecondMoments s = SecondMoments::from_data(data, true);
    FitResult r;
    switch (method) {
    case Method::Glasso: r = glasso(s.dense(), cfg.lambda.at(0), cfg); break;
    case Method::KpLs: r = kp_ls(s); break;
    case Method::Kpca: r = kpca(s, cfg.lambda.at(0)); break;
    case Method::Tlasso: r = tlasso(s, cfg); break;
    case Method::TeraLasso: r = teralasso(s, cfg); break;
    case Method::SgPalm: r = sg_palm(s, cfg); break;
    }

    const fs::path dir(a.out);
    fs::create_directories(dir);
    json meta = {{"method", std::string(to_string(method))},
                 {"lambda", cfg.lambda},
                 {"structure", std::string(to_string(r.model.structure()))},
                 {"is_covariance", r.is_covariance},
                 {"iterations", r.iterations},
                 {"converged", r.converged},
                 {"wall_time_seconds", r.wall_time_seconds},
                 {"objective_trace", r.objective_trace},
                 {"tensor_dims", data.dims},
                 {"warnings", r.warnings}};
    if (r.model.structure() == Structure::Dense) {
        write_csv_matrix(dir / "model.csv", r.model.dense_matrix());
    } else if (!r.factors.factors.empty()) {
        for (std::size_t k = 0; k < r.factors.factors.size(); ++k)
            write_csv_matrix(dir / ("mode" + std::to_string(k) + ".csv"), r.factors.factors[k]);
        meta["modes"] = r.factors.factors.size();
    } else {
        // Kronecker product covariance: literal factors.
        for (std::size_t k = 0; k < r.model.factors().size(); ++k)
            write_csv_matrix(dir / ("factor" + std::to_string(k) + ".csv"), r.model.factors()[k]);
        meta["literal_factors"] = r.model.factors().size();
    }
    write_file_atomic(dir / "fit.json", meta.dump(1) + "\n");
    std::printf("%s: %d iterations, converged %s, %.3f s\n", a.method.c_str(), r.iterations,
                r.converged ? "yes" : "no", r.wall_time_seconds);
    return 0;
}

StructuredMatrix load_model(const fs::path& dir, json& meta)
{
    meta = json::parse(read_file(dir / "fit.json"));
    const Structure st = structure_from_string(meta.at("structure").get<std::string>());
    if (st == Structure::Dense) return StructuredMatrix::dense(read_csv_matrix(dir / "model.csv"));
    std::vector<MatrixXd> f;
    if (meta.contains("modes")) {
        for (int k = 0; k < meta.at("modes").get<int>(); ++k)
            f.push_back(read_csv_matrix(dir / ("mode" + std::to_string(k) + ".csv")));
        return StructuredMatrix::from_modes(st, f);
    }
    for (int k = 0; k < meta.at("literal_factors").get<int>(); ++k)
        f.push_back(read_csv_matrix(dir / ("factor" + std::to_string(k) + ".csv")));
    return StructuredMatrix::kron_product(f);
}

int run_eval(const EvalArgs& a)
{
    const fs::path truth_dir(a.truth);
    const SpMat precision = read_triplets(truth_dir / "precision.triplets");
    const SupportPattern truth_support = extract_support(precision, 1e-12);
    std::optional<MatrixXd> covariance;
    int failures = 0;
    for (const auto& f : a.fits) {
        try {
            json meta;
            const StructuredMatrix model = load_model(f, meta);
            json out = {{"method", meta.at("method")}, {"lambda", meta.at("lambda")}};
            if (meta.at("is_covariance").get<bool>()) {
                if (!covariance) {
                    const MatrixXd p(precision);
                    covariance = p.ldlt().solve(MatrixXd::Identity(p.rows(), p.cols()));
                }
                const MatrixXd est = model.materialize();
                out["fnorm"] = frob_error(est, *covariance);
                const MatrixXd inv = est.ldlt().solve(MatrixXd::Identity(est.rows(), est.cols()));
                out["mcc"] = mcc(extract_support(inv, a.threshold), truth_support);
            } else {
                out["fnorm"] = frob_error(model, precision);
                out["mcc"] = mcc(extract_support(model.materialize(kExplicitPrecisionCap), a.threshold),
                                 truth_support);
            }
            out["wall_time_seconds"] = meta.at("wall_time_seconds");
            write_file_atomic(fs::path(f) / "metrics.json", out.dump(1) + "\n");
            std::cout << f << ": " << out.dump() << "\n";
        } catch (const std::exception& e) {
            std::cerr << f << ": " << e.what() << "\n";
            ++failures;
        }
    }
    return failures ? 1 : 0;
}

int run_bench(const BenchArgs& a)
{
    ExperimentSpec spec = ExperimentSpec::from_json(json::parse(read_file(a.spec)));
    if (a.small) apply_small_preset(spec);
    if (!a.out.empty()) spec.output_dir = a.out;
    if (a.workers > 0) spec.workers = a.workers;
    const auto records = run_experiment(spec);
    const TableFormat fmt = a.format == "json" ? TableFormat::Json : TableFormat::Csv;
    int failed = 0;
    for (const auto& r : records)
        if (r.failed) {
            ++failed;
            std::cerr << "failed: " << r.method << " seed " << r.seed << " " << r.metric << ": " << r.error << "\n";
        }
    if (records.size() > static_cast<std::size_t>(failed)) {
        const fs::path table = spec.output_dir / (fmt == TableFormat::Json ? "table.json" : "table.csv");
        emit_table(records, table, fmt, a.transpose);
        std::cout << format_table(summarize(records), fmt, a.transpose);
    }
    return failed ? 1 : 0;
}

int run_heatmap(const HeatmapArgs& a)
{
    const fs::path in(a.in);
    MatrixXd m;
    if (in.extension() == ".triplets")
        m = MatrixXd(read_triplets(in));
    else
        m = read_csv_matrix(in);
    emit_heatmap(m, a.out, !a.scale_from_zero, a.threshold);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tensor-structured covariance and precision estimation"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Sample a synthetic space-time process");
    g->add_option("--kind", gen.kind, "poisson2d, poisson-ar1 or convection-diffusion");
    g->add_option("--d1", gen.spec.d1);
    g->add_option("--d2", gen.spec.d2);
    g->add_option("--T", gen.spec.T);
    g->add_option("--a", gen.spec.a, "AR(1) coefficient");
    g->add_option("--theta", gen.spec.theta, "diffusion coefficient");
    g->add_option("--epsilon", gen.spec.epsilon, "convection coefficient");
    g->add_option("--grid-step", gen.spec.h, "spatial step h");
    g->add_option("--dt", gen.spec.dt);
    g->add_option("--sigma-w", gen.spec.sigma_w);
    g->add_option("--layout", gen.layout, "flat or cube");
    g->add_option("-n,--samples", gen.samples);
    g->add_option("--seed", gen.seed);
    g->add_option("-o,--out", gen.out)->required();

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit one estimator to an MWT1 sample tensor");
    f->add_option("--data", fit.data, "stacked samples, last mode indexes samples")->required();
    f->add_option("-m,--method", fit.method)->required();
    f->add_option("--lambda", fit.lambda, "penalties, one or one per mode");
    f->add_option("--C", fit.c, "rate constant; overrides --lambda");
    f->add_option("--tol", fit.tol);
    f->add_option("--max-iter", fit.max_iter);
    f->add_option("-o,--out", fit.out)->required();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score fitted models against a generated truth");
    e->add_option("--fit", ev.fits, "fit directories")->required();
    e->add_option("--truth", ev.truth, "generate output directory")->required();
    e->add_option("--threshold", ev.threshold);

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Run an experiment grid from a JSON spec");
    b->add_option("spec", bench.spec)->required();
    b->add_option("-o,--out", bench.out, "overrides output_dir");
    b->add_flag("--small", bench.small, "4x4 grid, T=10, N=25");
    b->add_option("--format", bench.format)->check(CLI::IsMember({"csv", "json"}));
    b->add_flag("--transpose", bench.transpose, "methods as columns");
    b->add_option("--workers", bench.workers);

    HeatmapArgs hm;
    auto* h = app.add_subcommand("heatmap", "Render a matrix as a PGM");
    h->add_option("-i,--in", hm.in, "CSV matrix or .triplets file")->required();
    h->add_option("-o,--out", hm.out)->required();
    h->add_option("--threshold", hm.threshold);
    h->add_flag("--scale-from-zero", hm.scale_from_zero);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*g) return run_generate(gen);
        if (*f) return run_fit(fit);
        if (*e) return run_eval(ev);
        if (*b) return run_bench(bench);
        if (*h) return run_heatmap(hm);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 2;
    }
    return 0;
}
