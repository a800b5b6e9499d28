#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tfconv/harness.hpp"

using namespace tfconv;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "tfconv_test_harness";
    fs::create_directories(dir);
    return dir / name;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

// header + 9 data rows
std::string ten_line_csv() {
    std::string s = "time,temp,pressure,label\n";
    for (int i = 0; i < 9; ++i)
        s += std::to_string(i) + "," + std::to_string(10 + i * 0.5) + "," + std::to_string(1000 - i * i) + ",x\n";
    return s;
}

CsvIngestSpec ten_line_spec(const fs::path& p) {
    CsvIngestSpec c;
    c.path = p.string();
    c.features = {"temp", "pressure"};
    c.targets = {"temp"};
    c.window = 3;
    return c;
}

ExperimentSpec rank_collapse_spec() {
    ExperimentSpec s;
    s.train.steps = 2000;
    s.train.mu = LearningRate::fixed(7e-4);
    const double sd = 1 / std::sqrt(6.0);
    s.train.init = InitScheme::gaussian({sd, 1 / 8.0, sd, sd, 0.1, sd});
    s.train.init.uniform_attention = true;
    return s;
}

}  // namespace

TEST(Synthetic, RealizableNoiseFreeHasZeroLossAtTeacher) {
    ModelConfig c;
    const auto data = gen_synthetic(4, c, 0.0, true);
    EXPECT_EQ(loss(teacher_params(4, c), data, c), 0.0);
    const auto noisy = gen_synthetic(4, c, 0.1, true);
    EXPECT_GT(loss(teacher_params(4, c), noisy, c), 0.0);
}

TEST(Synthetic, Deterministic) {
    ModelConfig c;
    const auto a = gen_synthetic(9, c, 0.0, false), b = gen_synthetic(9, c, 0.0, false);
    for (std::size_t p = 0; p < c.p; ++p) {
        EXPECT_EQ(a.xs[p], b.xs[p]);
        EXPECT_EQ(a.ys[p], b.ys[p]);
    }
    EXPECT_NE(gen_synthetic(10, c, 0.0, false).xs[0], a.xs[0]);
}

TEST(Synthetic, EntryMeanNearZero) {
    ModelConfig c;
    c.m = 100;
    c.d = 10;
    c.p = 100;  // 1e5 entries
    const auto data = gen_synthetic(1, c, 0.0, false);
    double s = 0;
    for (const auto& x : data.xs)
        for (double v : x.data()) s += v;
    EXPECT_LE(std::abs(s / 1e5), 0.02);
}

TEST(Ingest, WindowCount) {
    const auto p = scratch("ten.csv");
    write_file(p, ten_line_csv());
    const auto data = ingest_csv(ten_line_spec(p));
    EXPECT_EQ(data.size(), 6u);
    EXPECT_EQ(data.xs[0].rows(), 3u);
    EXPECT_EQ(data.xs[0].cols(), 2u);
    EXPECT_EQ(data.ys[0].cols(), 1u);
    // Y is X's temp column shifted one row
    EXPECT_EQ(data.ys[0](0, 0), data.xs[0](1, 0));
    EXPECT_EQ(data.ys[2](2, 0), data.xs[5](0, 0));
    auto capped = ten_line_spec(p);
    capped.cap = 4;
    EXPECT_EQ(ingest_csv(capped).size(), 4u);
    auto strided = ten_line_spec(p);
    strided.stride = 2;
    EXPECT_EQ(ingest_csv(strided).size(), 3u);
}

TEST(Ingest, ZScoreNormalizes) {
    const auto p = scratch("ten.csv");
    write_file(p, ten_line_csv());
    auto spec = ten_line_spec(p);
    spec.window = 8;  // one window: X rows 0..7, Y rows 1..8
    const auto data = ingest_csv(spec);
    ASSERT_EQ(data.size(), 1u);
    // temp over all nine data rows: X rows 0..7 plus the last target row
    std::vector<double> v;
    for (std::size_t i = 0; i < 8; ++i) v.push_back(data.xs[0](i, 0));
    v.push_back(data.ys[0](7, 0));
    double m = 0, s = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    for (double x : v) s += (x - m) * (x - m);
    EXPECT_NEAR(m, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt(s / double(v.size())), 1.0, 1e-10);
    spec.zscore = false;
    EXPECT_EQ(ingest_csv(spec).xs[0](2, 0), 11.0);
}

TEST(Ingest, ErrorsCarryLocation) {
    const auto p = scratch("bad.csv");
    write_file(p, ten_line_csv());
    auto spec = ten_line_spec(p);
    spec.features = {"temp", "humidity"};
    try {
        ingest_csv(spec);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 1u);
        EXPECT_NE(std::string(e.what()).find("humidity"), std::string::npos);
    }

    write_file(p, "time,temp,pressure\n0,1,2\n1,2,3\n2,oops,4\n3,4,5\n4,5,6\n");
    spec = ten_line_spec(p);
    try {
        ingest_csv(spec);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.row(), 4u);
        EXPECT_EQ(e.col(), 2u);
    }

    write_file(p, "time,temp,pressure\n0,1,2\n1,2,3\n");
    try {
        ingest_csv(ten_line_spec(p));
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("too short"), std::string::npos);
    }
    spec.path = scratch("does_not_exist.csv").string();
    EXPECT_THROW(ingest_csv(spec), ParseError);
}

TEST(Ingest, ByteIdenticalSerialization) {
    const auto a = scratch("a.csv"), b = scratch("b.csv");
    write_file(a, ten_line_csv());
    write_file(b, ten_line_csv());
    std::ostringstream sa, sb;
    write_dataset_csv(sa, ingest_csv(ten_line_spec(a)));
    write_dataset_csv(sb, ingest_csv(ten_line_spec(b)));
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Ingest, ShapeMismatchFailsLoudly) {
    const auto p = scratch("ten.csv");
    write_file(p, ten_line_csv());
    ExperimentSpec s;
    s.data.kind = DataSource::Kind::csv;
    s.data.csv = ten_line_spec(p);
    s.model.m = 3;
    s.model.d = 2;
    s.model.n = 1;
    s.model.p = 5;  // file yields 6
    EXPECT_THROW(make_dataset(s), ShapeError);
    s.model.p = 6;
    EXPECT_EQ(make_dataset(s).size(), 6u);
}

TEST(Sweep, OneRowPerValueEvenOnFailure) {
    ExperimentSpec s;
    s.model.d1 = 8;
    s.train.steps = 30;
    s.train.mu = LearningRate::fixed(1e-3);
    s.sweep = {SweepAxis::Kind::beta, {0.0, 0.25, 0.5, 0.75, 1.0}};
    auto pts = run_beta_sweep(s);
    ASSERT_EQ(pts.size(), 5u);
    for (const auto& p : pts) EXPECT_EQ(p.status, "ok");
    std::ostringstream os;
    write_sweep_summary_csv(os, pts);
    std::istringstream is(os.str());
    std::string line;
    std::size_t rows = 0;
    std::getline(is, line);
    EXPECT_EQ(line, "beta,ratio,rho,r2,status");
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 5u);

    s.train.mu = LearningRate::fixed(1e7);
    pts = run_beta_sweep(s);
    ASSERT_EQ(pts.size(), 5u);
    for (const auto& p : pts) EXPECT_NE(p.status, "ok");
}

TEST(Sweep, ParallelMatchesSerial) {
    ExperimentSpec s;
    s.model.d1 = 8;
    s.train.steps = 20;
    s.train.mu = LearningRate::fixed(1e-3);
    s.sweep = {SweepAxis::Kind::beta, {0.0, 0.5, 1.0}};
    s.workers = 1;
    std::ostringstream a, b;
    write_sweep_traces_csv(a, run_beta_sweep(s));
    s.workers = 3;
    write_sweep_traces_csv(b, run_beta_sweep(s));
    EXPECT_EQ(a.str(), b.str());
}

TEST(Sweep, RankCollapseConstructionOrdersRatios) {
    ExperimentSpec s = rank_collapse_spec();
    s.train.steps = 10;
    s.sweep = {SweepAxis::Kind::beta, {0.0, 0.25, 0.5, 0.75, 1.0}};
    const auto pts = run_beta_sweep(s);
    EXPECT_LE(pts[0].conditioning_ratio, 1e-10);
    for (std::size_t k = 1; k < pts.size(); ++k) EXPECT_GT(pts[k].conditioning_ratio, pts[k - 1].conditioning_ratio);
}

TEST(Ablation, RealizableResidualIsNotSlower) {
    ExperimentSpec s;
    s.model.d1 = 16;
    s.data.synthetic.realizable = true;
    s.train.steps = 300;
    s.train.mu = LearningRate::fixed(2e-3);
    const auto a = run_residual_ablation(s);
    EXPECT_LT(a.with_residual.trace.back().phi, a.with_residual.trace.front().phi);
    EXPECT_LT(a.without_residual.trace.back().phi, a.without_residual.trace.front().phi);
    EXPECT_LE(a.with_residual.fit.rho, a.without_residual.fit.rho);

    std::ostringstream x, y;
    write_ablation_summary(x, a);
    write_ablation_summary(y, run_residual_ablation(s));
    EXPECT_EQ(x.str(), y.str());
}

TEST(RankCollapseDemo, FlatWithoutResidualDecreasingWith) {
    const auto demo = run_rank_collapse_demo(rank_collapse_spec());
    EXPECT_LT(demo.plateau_decrease, 1e-3);
    EXPECT_TRUE(demo.residual_decreasing);
    EXPECT_LT(demo.runs.final_ratio(), 1e-2);
    EXPECT_EQ(demo.probes.size(), 3 * default_logit_scales().size());
}

TEST(TailDecrease, Definition) {
    LossTrace<double> t;
    for (std::size_t k = 0; k <= 400; ++k) t.records.push_back({k, 1.0 - 1e-4 * double(k)});
    EXPECT_NEAR(tail_relative_decrease(t, 100), 1e-2 / (1 - 0.03), 1e-12);
    EXPECT_FALSE(strictly_decreasing(LossTrace<double>{{{0, 1.0}, {1, 1.0}}}));
}

TEST(PlotData, RoundTripAndNaming) {
    std::vector<SweepPoint> pts(2);
    pts[0].beta = 0.25;
    pts[1].beta = 1;
    for (auto& p : pts)
        for (std::size_t k = 0; k < 3; ++k) p.trace.records.push_back({k, 1.0 / 3.0 + double(k) * p.beta});
    std::vector<PlotSeries> in = sweep_plot_series(pts);
    std::reverse(in.begin(), in.end());
    std::stringstream ss;
    emit_plot_data(ss, in);
    const auto out = read_plot_data(ss);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].name, "beta=0.25");
    EXPECT_EQ(out[1].name, "beta=1");
    EXPECT_EQ(out[0].points, in[1].points);
    EXPECT_EQ(out[1].points, in[0].points);

    std::stringstream one;
    emit_plot_data(one, {loss_series("train", pts[0].trace)});
    EXPECT_EQ(read_plot_data(one).size(), 1u);
    EXPECT_THROW(emit_plot_data(one, {}), std::invalid_argument);
    EXPECT_THROW(emit_plot_data(fs::path("/nonexistent_dir/x.csv"), in), std::runtime_error);
}
