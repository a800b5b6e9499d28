#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tfconv/harness.hpp"

using namespace tfconv;

namespace {

ModelConfig small_cfg(double beta = 1.0) {
    ModelConfig c;
    c.m = 4;
    c.d = 3;
    c.d_qk = 2;
    c.d1 = 5;
    c.n = 2;
    c.p = 3;
    c.beta = beta;
    return c;
}

}  // namespace

TEST(Model, ForwardMatchesScalarLoops) {
    for (double beta : {0.0, 0.4, 1.0}) {
        const ModelConfig c = small_cfg(beta);
        Rng rng(11);
        const auto w = init_params<double>(InitScheme::lecun(), c, rng);
        const auto data = gen_synthetic(3, c, 0.0, false);
        for (const auto& x : data.xs) {
            const auto tr = forward(x, w, c);
            const auto ref = oracle::forward(x, w, c);
            EXPECT_LE(oracle::max_abs_diff(tr.attn_weights, ref.s), 1e-14);
            EXPECT_LE(oracle::max_abs_diff(tr.z, ref.z), 1e-13);
            EXPECT_LE(oracle::max_abs_diff(tr.hidden, ref.h), 1e-13);
            EXPECT_LE(oracle::max_abs_diff(tr.output, ref.f), 1e-12);
        }
    }
}

TEST(Model, ConfigValidation) {
    ModelConfig c;
    c.beta = 1.5;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.beta = 0.5;
    c.d1 = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Model, ShapeErrors) {
    const ModelConfig c = small_cfg();
    const auto w = Params<double>::zeros(c);
    EXPECT_THROW(forward(Matrix<double>(c.m + 1, c.d), w, c), ShapeError);
    Dataset<double> d = gen_synthetic(0, c, 0.0, false);
    d.ys.pop_back();
    EXPECT_THROW(loss(w, d, c), ShapeError);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
    const Matrix<double> a{{1000, 1001, 999}, {-1e4, 0, 0}};
    const auto s = softmax_rows(a);
    for (std::size_t i = 0; i < 2; ++i) {
        double tot = 0;
        for (std::size_t j = 0; j < 3; ++j) {
            EXPECT_TRUE(std::isfinite(s(i, j)));
            tot += s(i, j);
        }
        EXPECT_NEAR(tot, 1.0, 1e-15);
    }
    EXPECT_NEAR(s(1, 1), 0.5, 1e-15);
}

TEST(Softmax, JacobianIsSymmetricPsdWithZeroRowSums) {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        const auto s = softmax_rows(gaussian_matrix(rng, 1, 6, 3.0));
        const auto j = softmax_jacobian(s.row(0));
        for (std::size_t a = 0; a < 6; ++a) {
            double row = 0;
            for (std::size_t b = 0; b < 6; ++b) {
                EXPECT_DOUBLE_EQ(j(a, b), j(b, a));
                row += j(a, b);
            }
            EXPECT_NEAR(row, 0.0, 1e-15);
        }
        for (double ev : oracle::symmetric_eigenvalues(j)) EXPECT_GE(ev, -1e-12);
    }
}

TEST(Softmax, JacobianRejectsNonDistribution) {
    const std::vector<double> bad{0.5, 0.6};
    EXPECT_THROW(softmax_jacobian(bad), std::invalid_argument);
}

TEST(Activation, ReluAndSmoothed) {
    const auto relu = Activation::relu();
    EXPECT_EQ(activation_value(-2.0, relu), 0.0);
    EXPECT_EQ(activation_value(3.0, relu), 3.0);
    EXPECT_EQ(activation_slope(0.0, relu), 0.0);
    const auto sm = Activation::smoothed(0.05);
    // smooth and close to relu away from 0
    EXPECT_NEAR(activation_value(1.0, sm), 1.0, 1e-12);
    EXPECT_NEAR(activation_value(-1.0, sm), 0.0, 1e-12);
    EXPECT_NEAR(activation_slope(0.0, sm), 0.5, 1e-15);
    const double h = 1e-6;
    for (double x : {-0.07, -0.01, 0.0, 0.02, 0.3}) {
        const double fd = (activation_value(x + h, sm) - activation_value(x - h, sm)) / (2 * h);
        EXPECT_NEAR(fd, activation_slope(x, sm), 1e-8);
    }
}

TEST(Model, VectorizedLossEqualsMatrixLoss) {
    Rng rng(9);
    for (int t = 0; t < 20; ++t) {
        ModelConfig c = small_cfg(rng.uniform());
        c.p = 1 + t % 4;
        const auto w = init_params<double>(InitScheme::lecun(), c, rng);
        const auto data = gen_synthetic(t, c, 0.0, false);
        const double a = loss(w, data, c), b = vectorized_loss(w, data, c);
        EXPECT_LE(std::abs(a - b), 1e-12 * std::max(1.0, a));
    }
}

TEST(Model, BetaZeroRemovesBothResiduals) {
    ModelConfig c = small_cfg(0.0);
    Rng rng(2);
    auto w = init_params<double>(InitScheme::lecun(), c, rng);
    w.wv = Matrix<double>(c.d, c.d);  // attention branch off
    const auto x = gaussian_matrix(rng, c.m, c.d);
    const auto tr = forward(x, w, c);
    EXPECT_EQ(frobenius_norm(tr.z), 0.0);
    EXPECT_EQ(frobenius_norm(tr.output), 0.0);
}
