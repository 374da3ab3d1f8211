#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "oracles.hpp"
#include "tensorcov/evaluation.hpp"
#include "tensorcov/harness.hpp"
#include "tensorcov/io.hpp"

using namespace tcov;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("tcov_harness_" + name);
    fs::remove_all(p);
    return p;
}

ExperimentSpec tiny_spec(const fs::path& out)
{
    ExperimentSpec s;
    s.process.kind = ProcessKind::PoissonAR1;
    s.process.d1 = 2;
    s.process.d2 = 2;
    s.process.T = 4;
    s.samples = 20;
    s.seeds = {1, 2};
    s.methods = {{"sg-palm", {0.1, 1.0}}, {"teralasso", {0.3}}, {"kpca", {1.0}}};
    s.metrics = {"fnorm", "mcc", "runtime"};
    s.output_dir = out;
    return s;
}

std::vector<ResultRecord> without_runtime(std::vector<ResultRecord> rs)
{
    std::erase_if(rs, [](const ResultRecord& r) { return r.metric == "runtime"; });
    return rs;
}

} // namespace

TEST_SUITE("heatmap")
{
    TEST_CASE("zero matrix is white")
    {
        const std::string img = encode_heatmap(MatrixXd::Zero(4, 5));
        const std::string header = "P5\n5 4\n255\n";
        REQUIRE(img.size() == header.size() + 20);
        CHECK(img.substr(0, header.size()) == header);
        for (std::size_t i = header.size(); i < img.size(); ++i) CHECK(static_cast<unsigned char>(img[i]) == 255);
    }

    TEST_CASE("identity is white except a black diagonal")
    {
        const std::string img = encode_heatmap(MatrixXd::Identity(3, 3), true);
        const std::size_t off = std::string("P5\n3 3\n255\n").size();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(static_cast<unsigned char>(img[off + 3 * i + j]) == (i == j ? 0 : 255));
    }

    TEST_CASE("golden 3x3 file")
    {
        MatrixXd m(3, 3);
        m << 2.0, -0.5, 0.0, -0.5, 1.0, 0.0, 0.0, 0.0, 1.25;
        const fs::path out = scratch("golden.pgm");
        emit_heatmap(m, out);
        CHECK(read_file(out) == read_file(fs::path(TC_TEST_DATA) / "golden3x3.pgm"));
        fs::remove(out);
    }

    TEST_CASE("threshold drops small entries")
    {
        MatrixXd m = MatrixXd::Identity(2, 2);
        m(0, 1) = m(1, 0) = 1e-4;
        const std::string img = encode_heatmap(m, true, 1e-3);
        const std::size_t off = std::string("P5\n2 2\n255\n").size();
        CHECK(static_cast<unsigned char>(img[off + 1]) == 255);
        CHECK_THROWS(encode_heatmap(MatrixXd::Constant(2, 2, std::nan(""))));
    }
}

TEST_SUITE("tables")
{
    TEST_CASE("single record")
    {
        ResultRecord r;
        r.method = "sg-palm";
        r.metric = "fnorm";
        r.value = -0.5;
        const auto rows = summarize({r});
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].mean == -0.5);
        CHECK(rows[0].se == 0);
    }

    TEST_CASE("two-point statistics")
    {
        ResultRecord a, b;
        a.method = b.method = "tlasso";
        a.metric = b.metric = "mcc";
        a.value = 1;
        b.value = 3;
        const auto rows = summarize({a, b});
        CHECK(rows[0].mean == 2);
        CHECK(rows[0].se == doctest::Approx(1).epsilon(1e-15));
    }

    TEST_CASE("failed records are excluded")
    {
        ResultRecord a, b;
        a.method = b.method = "glasso";
        a.metric = b.metric = "fnorm";
        a.value = 1;
        b.failed = true;
        b.value = std::nan("");
        CHECK(summarize({a, b})[0].n == 1);
    }

    TEST_CASE("csv round trip is byte identical")
    {
        oracle::Rng rng(1);
        std::vector<ResultRecord> recs;
        for (const char* m : {"sg-palm", "tlasso", "has,comma"})
            for (const char* metric : {"fnorm", "mcc"})
                for (int s = 0; s < 3; ++s) {
                    ResultRecord r;
                    r.method = m;
                    r.metric = metric;
                    r.seed = s;
                    r.value = rng.normal() / 3;
                    recs.push_back(r);
                }
        const std::string csv = format_table(summarize(recs), TableFormat::Csv);
        CHECK(format_table(parse_table_csv(csv), TableFormat::Csv) == csv);
        const std::string t = format_table(summarize(recs), TableFormat::Csv, true);
        CHECK(t.rfind("metric,sg-palm mean,sg-palm se,", 0) == 0);
        const auto j = nlohmann::json::parse(format_table(summarize(recs), TableFormat::Json));
        CHECK(j.size() == 6);
    }
}

TEST_SUITE("experiments")
{
    TEST_CASE("spec json round trip and validation")
    {
        ExperimentSpec s = tiny_spec("out");
        s.prediction = PredictionSpec{};
        const ExperimentSpec back = ExperimentSpec::from_json(s.to_json());
        CHECK(back.to_json() == s.to_json());
        ExperimentSpec bad = s;
        bad.seeds.clear();
        CHECK_THROWS(bad.validate());
        bad = s;
        bad.methods.push_back({"nope", {1.0}});
        CHECK_THROWS(bad.validate());
        bad = s;
        bad.prediction.reset();
        bad.metrics.push_back("nrmse");
        CHECK_THROWS(bad.validate());
        CHECK(default_c_grid().size() == 8);
        CHECK(default_c_grid().front() == doctest::Approx(1e-2));
        CHECK(default_c_grid().back() == doctest::Approx(1e1));
    }

    TEST_CASE("records equal the manual pipeline")
    {
        const fs::path out = scratch("manual");
        ExperimentSpec spec = tiny_spec(out);
        spec.seeds = {5};
        spec.methods = {{"teralasso", {0.3}}};
        const auto recs = run_experiment(spec);
        REQUIRE(recs.size() == 3);

        const GroundTruth gt = build_process(spec.process);
        const Dataset d = sample_process(gt, spec.samples, spec.process.sigma_w, 5);
        const SecondMoments raw = SecondMoments::from_data(d);
        const double sc2 = raw.trace() / static_cast<double>(raw.dim());
        EstimatorConfig cfg;
        cfg.tol = spec.methods[0].tol;
        cfg.inner_tol = spec.methods[0].inner_tol;
        cfg.lambda = lambda_from_rate(Method::TeraLasso, d.dims, spec.samples, 0.3);
        const FitResult f = teralasso(raw.scaled(1 / sc2), cfg);
        const StructuredMatrix model = f.model.scaled(1 / sc2);
        CHECK(recs[0].metric == "fnorm");
        CHECK(recs[0].value == frob_error(model, *gt.precision));
        CHECK(recs[1].value == mcc(extract_support(model.materialize()), extract_support(*gt.precision, 1e-12)));
        CHECK(recs[0].lambda_used == cfg.lambda);
        CHECK(fs::exists(out / "records.csv"));
        CHECK(fs::exists(out / "summary.csv"));
        fs::remove_all(out);
    }

    TEST_CASE("determinism, resume and selection")
    {
        const fs::path a = scratch("det_a"), b = scratch("det_b");
        const auto ra = run_experiment(tiny_spec(a));
        const auto rb = run_experiment(tiny_spec(b));
        REQUIRE(ra.size() == rb.size());
        for (std::size_t i = 0; i < ra.size(); ++i)
            if (ra[i].metric != "runtime") CHECK(ra[i].value == rb[i].value);

        // Resume: drop one cell file and rerun; everything matches.
        std::vector<fs::path> cells;
        for (const auto& e : fs::directory_iterator(a / "cells")) cells.push_back(e.path());
        CHECK(cells.size() == 6);
        fs::remove(cells.front());
        const auto rc = run_experiment(tiny_spec(a));
        CHECK(nlohmann::json(without_runtime(rc).size()) == nlohmann::json(without_runtime(ra).size()));
        for (std::size_t i = 0; i < ra.size(); ++i)
            if (ra[i].metric != "runtime") CHECK(rc[i].value == ra[i].value);

        // The chosen C is the grid minimizer of the criterion.
        const ExperimentSpec spec = tiny_spec(a);
        for (std::uint64_t seed : spec.seeds) {
            const auto grid = evaluate_grid(spec, spec.methods[0], seed);
            REQUIRE(grid.size() == 2);
            const auto best = std::min_element(grid.begin(), grid.end(),
                                               [](auto& x, auto& y) { return x.criterion < y.criterion; });
            for (const auto& r : ra)
                if (r.method == "sg-palm" && r.seed == seed) {
                    CHECK(r.c == best->c);
                    if (r.metric == "fnorm") CHECK(r.value == best->criterion);
                }
        }
        fs::remove_all(a);
        fs::remove_all(b);
    }

    TEST_CASE("failed cells are flagged without aborting the grid")
    {
        const fs::path out = scratch("fail");
        ExperimentSpec spec = tiny_spec(out);
        spec.process.layout = Layout::Cube;  // three modes: kpca needs two
        spec.seeds = {1};
        const auto recs = run_experiment(spec);
        bool kpca_failed = false, others_ok = true;
        for (const auto& r : recs) {
            if (r.method == "kpca") kpca_failed = r.failed && !r.error.empty();
            else if (r.failed) others_ok = false;
        }
        CHECK(kpca_failed);
        CHECK(others_ok);
        fs::remove_all(out);
    }

    TEST_CASE("prediction block")
    {
        const fs::path out = scratch("pred");
        ExperimentSpec spec;
        spec.process.kind = ProcessKind::ConvectionDiffusion;
        spec.process.d1 = 2;
        spec.process.d2 = 2;
        spec.process.T = 4;
        spec.samples = 30;
        spec.seeds = {1};
        spec.methods = {{"sg-palm", {0.1, 1.0}}, {"ind-lasso", {0.1, 1.0}}};
        spec.metrics = {"nrmse", "runtime"};
        spec.selection = "validation";
        spec.prediction = PredictionSpec{};
        spec.output_dir = out;
        const auto recs = run_experiment(spec);
        REQUIRE(recs.size() == 4);
        for (const auto& r : recs) {
            CHECK_FALSE(r.failed);
            CHECK(std::isfinite(r.value));
        }
        fs::remove_all(out);
    }
}
