#include <gtest/gtest.h>

#include <string>

#include "tfconv/spec_io.hpp"

using namespace tfconv;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_spec_text(text);
    } catch (const SpecError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(SpecIo, DefaultsFromEmptyDocument) {
    const auto s = parse_spec_text("{}");
    EXPECT_EQ(s.model.m, 8u);
    EXPECT_EQ(s.model.d1, 64u);
    EXPECT_EQ(s.train.steps, 2000u);
    EXPECT_EQ(s.sweep.kind, SweepAxis::Kind::none);
}

TEST(SpecIo, FullDocument) {
    const auto s = parse_spec_text(R"({
      "name": "x", "seed": 18446744073709551615, "out": "o", "workers": 2,
      "model": {"m": 3, "d": 2, "d_qk": 1, "d1": 9, "n": 2, "p": 5, "beta": 0.5, "activation": "smoothed", "tau": 0.1},
      "data": {"kind": "synthetic", "realizable": true, "noise": 0.01},
      "train": {"steps": 10, "mu": "theory", "record_every": 5,
                "init": {"kind": "gaussian", "uniform_attention": true,
                         "gammas": {"w1": 1, "w2": 2, "wq": 3, "wk": 4, "wv": 5, "wu": 6}}},
      "sweep": {"axis": "beta", "values": [0, 1]},
      "grad_check": {"configs": 3, "tol": 1e-6, "activation": "relu"}
    })");
    EXPECT_EQ(s.seed, 18446744073709551615ull);
    EXPECT_EQ(s.model.activation.kind, Activation::Kind::smoothed_relu);
    EXPECT_DOUBLE_EQ(s.model.activation.tau, 0.1);
    EXPECT_TRUE(s.data.synthetic.realizable);
    EXPECT_EQ(s.train.mu.kind, LearningRate::Kind::theory);
    EXPECT_EQ(s.train.init.gammas[static_cast<std::size_t>(WeightId::wv)], 5.0);
    EXPECT_TRUE(s.train.init.uniform_attention);
    EXPECT_EQ(s.sweep.values.size(), 2u);
    EXPECT_EQ(s.grad_check.configs, 3u);
}

TEST(SpecIo, UnknownKeysRejectedWithPath) {
    EXPECT_NE(error_of(R"({"modle": {}})").find("$: unknown key 'modle'"), std::string::npos);
    EXPECT_NE(error_of(R"({"model": {"dd": 1}})").find("$.model: unknown key 'dd'"), std::string::npos);
    EXPECT_NE(error_of(R"({"train": {"init": {"kind": "lecun", "gamma": 1}}})").find("$.train.init"),
              std::string::npos);
}

TEST(SpecIo, TypeAndRangeErrors) {
    EXPECT_NE(error_of(R"({"model": {"m": "8"}})").find("$.model.m"), std::string::npos);
    EXPECT_NE(error_of(R"({"model": {"m": -1}})").find("$.model.m"), std::string::npos);
    EXPECT_NE(error_of(R"({"model": {"beta": 2}})").find("beta"), std::string::npos);
    EXPECT_NE(error_of(R"({"seed": -3})").find("$.seed"), std::string::npos);
    EXPECT_NE(error_of(R"({"sweep": {"axis": "beta", "values": [0.5, 1.5]}})").find("beta"), std::string::npos);
    EXPECT_NE(error_of(R"({"sweep": {"axis": "beta", "values": []}})").find("non-empty"), std::string::npos);
    EXPECT_NE(error_of("{not json").find("invalid JSON"), std::string::npos);
}

TEST(SpecIo, LearningRateDirectives) {
    EXPECT_EQ(parse_spec_text(R"({"train": {"mu": "practical"}})").train.mu.kind, LearningRate::Kind::practical);
    EXPECT_DOUBLE_EQ(parse_spec_text(R"({"train": {"mu": 0.25}})").train.mu.value, 0.25);
    EXPECT_NE(error_of(R"({"train": {"mu": "fast"}})").find("$.train.mu"), std::string::npos);
    EXPECT_NE(error_of(R"({"train": {"mu": 0}})").find("mu"), std::string::npos);
}

TEST(SpecIo, ExplicitInitChecksShapes) {
    const std::string ok = R"({"model": {"m": 2, "d": 1, "d_qk": 1, "d1": 1, "n": 1, "p": 1},
      "train": {"init": {"kind": "explicit", "params":
        {"w1": [[1]], "w2": [[2]], "wq": [[3]], "wk": [[4]], "wv": [[5]], "wu": [[6]]}}}})";
    const auto s = parse_spec_text(ok);
    EXPECT_EQ(s.train.init.params->wk(0, 0), 4.0);
    std::string bad = ok;
    bad.replace(bad.find("[[6]]"), 5, "[[6, 7]]");
    EXPECT_NE(error_of(bad).find("$.train.init"), std::string::npos);
}

TEST(SpecIo, CsvPathsResolveAgainstSpecDirectory) {
    const auto s = parse_spec(nlohmann::json::parse(R"({"model": {"m": 4},
        "data": {"kind": "csv", "path": "data/w.csv", "features": ["a", "b"], "normalize": "none"}})"),
                              "/tmp/specs");
    EXPECT_EQ(s.data.csv.path, "/tmp/specs/data/w.csv");
    EXPECT_EQ(s.data.csv.window, 4u);
    EXPECT_EQ(s.data.csv.targets, s.data.csv.features);
    EXPECT_FALSE(s.data.csv.zscore);
}

TEST(SpecIo, MissingFileNamesPath) {
    try {
        load_spec("/nonexistent/spec.json");
        FAIL();
    } catch (const SpecError& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/spec.json"), std::string::npos);
    }
}
