#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "oracles.hpp"
#include "tfconv/harness.hpp"
#include "tfconv/quad.hpp"

using namespace tfconv;

namespace {

ModelConfig fixed_cfg() {
    ModelConfig c;
    c.m = 3;
    c.d = 2;
    c.d_qk = 2;
    c.d1 = 4;
    c.n = 2;
    c.p = 2;
    return c;
}

struct Fixed {
    ModelConfig cfg;
    Params<double> w;
    Dataset<double> data;
};

Fixed fixed_instance(std::uint64_t seed = 5) {
    const ModelConfig cfg = fixed_cfg();
    Rng rng(seed);
    auto w = init_params<double>(InitScheme::lecun(), cfg, rng);
    return Fixed{cfg, std::move(w), gen_synthetic(seed, cfg, 0.0, false)};
}

double onorm(const Matrix<double>& a) { return oracle::gram_singular_values(a).front(); }
double osmin(const Matrix<double>& a) { return oracle::gram_singular_values(a).back(); }

Matrix<double> identity_like(std::size_t r, std::size_t c) {
    Matrix<double> a(r, c);
    for (std::size_t i = 0; i < std::min(r, c); ++i) a(i, i) = 1;
    return a;
}

}  // namespace

TEST(Theory, Z0WithoutAttentionBranchIsScaledInput) {
    Fixed f = fixed_instance();
    f.w.wv = Matrix<double>(f.cfg.d, f.cfg.d);
    f.cfg.beta = 0.3;
    const auto& x = f.data.xs[0];
    EXPECT_LE(oracle::max_abs_diff(z0(x, f.w, f.cfg), oracle::scale(x, 0.3)), 1e-15);
}

TEST(Theory, Z0UnderUniformAttentionAveragesRows) {
    Fixed f = fixed_instance();
    f.w.wq = Matrix<double>(f.cfg.d, f.cfg.d_qk);
    const auto& x = f.data.xs[0];
    Matrix<double> mean(1, f.cfg.d);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) mean(0, j) += x(i, j) / double(x.rows());
    const auto mv = oracle::matmul(mean, f.w.wv);
    const auto z = z0(x, f.w, f.cfg);
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) EXPECT_NEAR(z(i, j), mv(0, j) + x(i, j), 1e-14);
}

TEST(Theory, PhiPStacksHiddenActivations) {
    const Fixed f = fixed_instance();
    const auto phi = phi_p(f.w, f.data, f.cfg);
    ASSERT_EQ(phi.rows(), f.cfg.d1);
    ASSERT_EQ(phi.cols(), f.cfg.m * f.cfg.p);
    for (std::size_t p = 0; p < f.cfg.p; ++p) {
        const auto h = oracle::forward(f.data.xs[p], f.w, f.cfg).h;
        for (std::size_t i = 0; i < f.cfg.m; ++i)
            for (std::size_t k = 0; k < f.cfg.d1; ++k) EXPECT_NEAR(phi(k, p * f.cfg.m + i), h(i, k), 1e-14);
    }
}

TEST(Theory, DeadReluGivesZeroAlpha) {
    Fixed f = fixed_instance();
    f.w.w1 = Matrix<double>(f.cfg.d, f.cfg.d1);
    EXPECT_EQ(min_singular_value(phi_p(f.w, f.data, f.cfg)), 0.0);
    EXPECT_EQ(alpha(f.w, f.data, f.cfg), 0.0);
}

TEST(Theory, AlphaMatchesOracleAndScalesWithWu) {
    Fixed f = fixed_instance();
    // wide FFN so phi_P has full column rank
    f.cfg.d1 = 16;
    Rng rng(8);
    f.w = init_params<double>(InitScheme::lecun(), f.cfg, rng);
    const auto phi = transpose(vstack<double>({oracle::forward(f.data.xs[0], f.w, f.cfg).h,
                                               oracle::forward(f.data.xs[1], f.w, f.cfg).h}));
    const double su = osmin(f.w.wu), sp = osmin(phi);
    const double a = alpha(f.w, f.data, f.cfg);
    EXPECT_GT(a, 0.0);
    // the Gram oracle loses digits on small singular values
    EXPECT_NEAR(a, su * su * sp * sp / 16, 1e-6 * a);
    Fixed g = f;
    g.w.wu *= 2.0;
    EXPECT_NEAR(alpha(g.w, g.data, g.cfg), 4 * a, 1e-10 * a);
    // right-multiplying Wu by an orthogonal matrix leaves alpha alone
    const double th = 0.7;
    const Matrix<double> q{{std::cos(th), -std::sin(th)}, {std::sin(th), std::cos(th)}};
    g = f;
    g.w.wu = oracle::matmul(f.w.wu, q);
    EXPECT_NEAR(alpha(g.w, g.data, g.cfg), a, 1e-10 * a);
    // a zero column in Wu
    g = f;
    for (std::size_t i = 0; i < g.cfg.d; ++i) g.w.wu(i, 1) = 0;
    EXPECT_EQ(alpha(g.w, g.data, g.cfg), 0.0);
}

TEST(Theory, CfCandidatesMatchIndependentRecomputation) {
    const Fixed f = fixed_instance();
    const auto& c = f.cfg;
    const double n1 = onorm(f.w.w1), n2 = onorm(f.w.w2), nu = onorm(f.w.wu);
    const double nv = onorm(f.w.wv), nq = onorm(f.w.wq), nk = onorm(f.w.wk);
    double zn = 0, xn = 0, xrs = 0;
    for (const auto& x : f.data.xs) {
        zn = std::max(zn, onorm(oracle::forward(x, f.w, c).z));
        const double xs = onorm(x);
        xn = std::max(xn, xs);
        for (std::size_t i = 0; i < x.rows(); ++i) xrs = std::max(xrs, oracle::frob(oracle::row(x, i)) * xs * xs);
    }
    const double M = c.m, P = c.p, dqk = c.d_qk;
    const double ffn = 729 * n1 * n1 * n2 * n2 * nu * nu / 16 + 9 * zn * zn;
    const double att = 243 * M * std::sqrt(P) * std::pow(xn, 3) * xrs * nv * nv / (4 * dqk);
    std::vector<double> ref{729 * n2 * n2 * nu * nu * zn * zn / 16, 9 * zn * zn, ffn * att * nq * nq,
                            ffn * att * nk * nk,
                            27 * M * std::sqrt(P) * xn * xn * (zn * zn + 81 * n1 * n1 * n2 * n2 * nu * nu / 16)};
    const auto got_arr = cf_candidates(spectral_summary(f.w, f.data, c), c);
    std::vector<double> got(got_arr.begin(), got_arr.end());
    std::sort(ref.begin(), ref.end());
    std::sort(got.begin(), got.end());
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(got[k], ref[k], 1e-10 * ref[k]) << k;
    const auto rep = constants(f.w, f.data, c);
    EXPECT_NEAR(rep.c_f, ref.back(), 1e-10 * ref.back());
    EXPECT_NEAR(rep.mu_theory, std::min(1 / rep.c_detailed, 1 / rep.alpha), 1e-15 * rep.mu_theory);
}

TEST(Theory, LambdaBarOfIdentityWeightsIsOne) {
    ModelConfig c = fixed_cfg();
    c.d_qk = c.d1 = c.n = c.d;
    Params<double> w = Params<double>::zeros(c);
    for (WeightId id : kWeightIds) w[id] = identity_like(w[id].rows(), w[id].cols());
    const auto s = spectral_summary(w, gen_synthetic(0, c, 0.0, false), c);
    EXPECT_NEAR(s.lambda_bar, 1.0, 1e-15);
    EXPECT_NEAR(s.lambda_underbar, 1.0, 1e-15);
}

TEST(Theory, InitRequirementAtInterpolationAndFarAway) {
    Fixed f = fixed_instance();
    f.cfg.d1 = 16;
    Rng rng(8);
    f.w = init_params<double>(InitScheme::lecun(), f.cfg, rng);
    for (std::size_t p = 0; p < f.data.size(); ++p) f.data.ys[p] = forward(f.data.xs[p], f.w, f.cfg).output;
    const auto rep = constants(f.w, f.data, f.cfg);
    EXPECT_EQ(rep.init.lhs, 0.0);
    EXPECT_TRUE(rep.init.met);
    for (auto& y : f.data.ys) y *= 1e6;
    EXPECT_FALSE(constants(f.w, f.data, f.cfg).init.met);
}

TEST(Theory, ConditioningRatioIdentityInput) {
    ModelConfig c = fixed_cfg();
    c.m = c.d;
    c.p = 1;
    Rng rng(1);
    auto w = init_params<double>(InitScheme::lecun(), c, rng);
    w.wv = Matrix<double>(c.d, c.d);
    Dataset<double> data{{Matrix<double>::identity(c.d)}, {Matrix<double>(c.m, c.n)}};
    EXPECT_NEAR(conditioning_ratio(w, data, c), 1.0, 1e-15);
}

TEST(Theory, ConditioningRatioCollapsesWithoutResidual) {
    Fixed f = fixed_instance();
    f.cfg.beta = 0.0;
    f.w.wq = Matrix<double>(f.cfg.d, f.cfg.d_qk);
    EXPECT_LE(conditioning_ratio(f.w, f.data, f.cfg), 1e-10);
}

TEST(Theory, ConditioningRatioApproachesInputAsWvVanishes) {
    Fixed f = fixed_instance();
    double ref = INFINITY, den = 0;
    for (const auto& x : f.data.xs) {
        ref = std::min(ref, std::pow(osmin(x), 2));
        den = std::max(den, onorm(x));
    }
    ref /= den;
    f.w.wv *= 1e-8;
    EXPECT_NEAR(conditioning_ratio(f.w, f.data, f.cfg), ref, 1e-6 * ref);
}

TEST(RankCollapse, UniformAttentionIsRankOne) {
    ModelConfig c;
    Rng rng(3);
    const auto w = init_params<double>(InitScheme::lecun(), c, rng);
    const auto x = gaussian_matrix(rng, c.m, c.d);
    const auto probes = rank_collapse_probe(x, w, c, {1.0, 0.1, 0.01, 0.0});
    ASSERT_EQ(probes.size(), 12u);
    for (const auto& p : probes) {
        if (p.scale != 0.0) continue;
        if (p.label == "z_residual") {
            EXPECT_EQ(p.rank, c.d);
        } else {
            EXPECT_LE(p.ratio, 1e-12) << p.label;
            EXPECT_EQ(p.rank, 1u) << p.label;
        }
    }
    // the attention output loses rank as the logits shrink
    EXPECT_GT(probes[0].ratio, probes[9].ratio);
    EXPECT_GT(probes[3].ratio, probes[9].ratio);
}

TEST(AlphaLowerBound, VanishesAtTheEdge) {
    ModelConfig c;
    c.d = 2;
    c.n = 8;  // sqrt(N)/2 = sqrt(d)
    c.d1 = 32;
    c.m = 2;
    c.p = 1;
    Rng rng(0);
    const auto w = init_params<double>(InitScheme::gaussian({1, 1, 1, 1, 1, 1}), c, rng);
    const auto data = gen_synthetic(0, c, 0.0, false);
    const auto lb = alpha_lower_bound(c, GaussianScales{}, data, w);
    ASSERT_TRUE(lb.has_value());
    EXPECT_NEAR(*lb, 0.0, 1e-30);
}

TEST(AlphaLowerBound, QuadraticInGamma1AndEmptyOutsideRegime) {
    ModelConfig c;
    c.d = 2;
    c.n = 12;
    c.d1 = 32;
    c.m = 2;
    c.p = 1;
    Rng rng(0);
    const auto w = init_params<double>(InitScheme::gaussian({1, 1, 1, 1, 1, 1}), c, rng);
    const auto data = gen_synthetic(0, c, 0.0, false);
    const double a = *alpha_lower_bound(c, GaussianScales{1.0, 1.0}, data, w);
    const double b = *alpha_lower_bound(c, GaussianScales{2.0, 1.0}, data, w);
    EXPECT_GT(a, 0.0);
    EXPECT_NEAR(b, 4 * a, 1e-12 * b);
    ModelConfig narrow = c;
    narrow.n = 7;
    EXPECT_FALSE(alpha_lower_bound(narrow, GaussianScales{}, gen_synthetic(0, narrow, 0.0, false), w).has_value());
}

TEST(Hermite, FirstCoefficient) {
    EXPECT_NEAR(hermite_mu1(Activation::relu()), 0.5, 1e-12);
    EXPECT_NEAR(hermite_mu1([](double g) { return g; }), 1.0, 1e-12);
    EXPECT_NEAR(hermite_mu1([](double) { return 1.0; }), 0.0, 1e-12);
    EXPECT_THROW(hermite_mu1([](double g) { return g; }, 16), std::invalid_argument);
}

TEST(Hermite, RuleIntegratesLowMoments) {
    const auto rule = gauss_hermite(64);
    double w = 0;
    for (double v : rule.weights) w += v;
    EXPECT_NEAR(w, std::sqrt(std::acos(-1.0)), 1e-12);
    EXPECT_NEAR(gaussian_expectation([](double g) { return g * g; }), 1.0, 1e-12);
    EXPECT_NEAR(gaussian_expectation([](double g) { return g * g * g * g; }), 3.0, 1e-11);
}

TEST(SvBounds, Interval) {
    const auto r = gaussian_sv_bounds_check(100, 4, 1.0, 1);
    EXPECT_DOUBLE_EQ(r.lower, 3.0);
    EXPECT_DOUBLE_EQ(r.upper, 17.0);
    EXPECT_THROW(gaussian_sv_bounds_check(16, 4, 1.0, 1), std::invalid_argument);
    EXPECT_THROW(gaussian_sv_bounds_check(100, 4, 0.0, 1), std::invalid_argument);
}

TEST(SvBounds, RareViolations) {
    const auto r = gaussian_sv_bounds_check(64, 2, 0.7, 1000, 4);
    EXPECT_LE(r.violations, 3u) << "failure bound " << r.failure_bound;
}

namespace {

TheoryReport<double> toy_report() {
    TheoryReport<double> r;
    r.alpha = 1.0;
    r.mu_theory = 0.1;
    r.c_w = 1.0;
    return r;
}

LossTrace<double> geometric_trace(double q, std::size_t n) {
    LossTrace<double> t;
    t.mu = 0.1;
    for (std::size_t k = 0; k <= n; ++k) {
        TraceRecord<double> r;
        r.t = k;
        r.phi = std::pow(q, double(k));
        t.records.push_back(r);
    }
    return t;
}

}  // namespace

TEST(Certificate, FlatZeroTraceCertifies) {
    auto t = geometric_trace(0.5, 10);
    for (auto& r : t.records) r.phi = 0;
    EXPECT_TRUE(convergence_certificate(t, toy_report()).certified());
}

TEST(Certificate, InjectedUptickIsFlagged) {
    auto t = geometric_trace(0.85, 20);
    EXPECT_TRUE(convergence_certificate(t, toy_report()).certified());
    t.records[7].phi *= 1.2;
    const auto c = convergence_certificate(t, toy_report());
    EXPECT_FALSE(c.certified());
    EXPECT_EQ(c.contraction_violations, 1u);
    EXPECT_FALSE(c.contraction_ok[6]);
}

TEST(Certificate, ThetaDriftViolationIsFlagged) {
    auto t = geometric_trace(0.85, 20);
    t.records[3].theta_dist = 10.0;
    const auto c = convergence_certificate(t, toy_report());
    EXPECT_EQ(c.theta_violations, 1u);
}

TEST(Certificate, RejectsOtherLearningRates) {
    auto t = geometric_trace(0.85, 5);
    t.mu = 0.2;
    EXPECT_THROW(convergence_certificate(t, toy_report()), std::invalid_argument);
}

TEST(Certificate, QuadPrecisionEndToEnd) {
    const auto inst = make_certified_instance<quad>(0);
    ASSERT_TRUE(inst.report.init.met);
    const auto run = run_gd(inst.params, inst.data, inst.cfg, 500, inst.report.mu_theory);
    const auto c = convergence_certificate(run.trace, inst.report);
    EXPECT_TRUE(c.certified()) << c.summary();
    EXPECT_LT(run.trace.back().phi, run.trace.front().phi);
}

TEST(TheoryJson, ParsesWithExpectedKeys) {
    const Fixed f = fixed_instance();
    std::ostringstream os;
    write_theory_json(os, constants(f.w, f.data, f.cfg), 5);
    const auto j = nlohmann::json::parse(os.str());
    EXPECT_EQ(j.at("seed"), 5);
    EXPECT_EQ(j.at("c_tilde"), 1.0);
    for (const char* k : {"alpha", "c_main", "c_detailed", "c1", "c2", "c_f", "c_w", "lambda_bar", "mu_theory",
                          "conditioning_ratio", "init_requirement"})
        EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j.at("c_f_candidates").size(), 5u);
    EXPECT_EQ(j.at("init_requirement").at("bounds").size(), 6u);
}
