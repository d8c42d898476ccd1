#include <string>

#include <gtest/gtest.h>

#include "koopdict/config.hpp"

using namespace koopdict;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, MinimalVdpFillsDefaults) {
    const auto c = parse_config_text(R"({"system": "vdp"})");
    EXPECT_EQ(c.system, SystemKind::vdp);
    EXPECT_EQ(c.vdp.mu, 1.0);
    EXPECT_EQ(c.lambda_grid.re_min, -5.0);
    EXPECT_EQ(c.lambda_grid.re_max, 5.0);
    EXPECT_EQ(c.lambda_grid.re_count, 401);
    EXPECT_EQ(c.modes, 10);
    EXPECT_EQ(c.seed, 42u);
    EXPECT_EQ(c.observable, "gauss3");
    ASSERT_TRUE(c.autoencoder.has_value());
    EXPECT_EQ(c.autoencoder->layer_spec(3).sizes, (std::vector<int>{3, 100, 100, 2, 100, 100, 3}));
    EXPECT_EQ(c.autoencoder->train.epochs, 2000);
    EXPECT_EQ(c.autoencoder->train.optimizer, ae::Optimizer::sgd);
    EXPECT_EQ(c.autoencoder->train.learning_rate, 0.05);
    EXPECT_EQ(c.segment.n, 50);
}

TEST(Config, MinimalRdFillsDefaults) {
    const auto c = parse_config_text(R"({"system": "reaction_diffusion"})");
    ASSERT_TRUE(c.delay.has_value());
    EXPECT_EQ(c.delay->k, 5);
    EXPECT_EQ(c.feature_width(), 10);
    EXPECT_EQ(c.autoencoder->layer_spec(10).sizes, (std::vector<int>{10, 3200, 100, 6, 100, 3200, 10}));
    EXPECT_EQ(c.observable, "gauss6");
    EXPECT_EQ(c.rd.D, 0.0322);
}

TEST(Config, WidthScaleShrinksOutermostHiddenLayer) {
    const auto c = parse_config_text(R"({"system": "reaction_diffusion", "autoencoder": {"width_scale": 0.25}})");
    EXPECT_EQ(c.autoencoder->layer_spec(10).sizes, (std::vector<int>{10, 800, 100, 6, 100, 800, 10}));
}

TEST(Config, AdamDefaultsItsLearningRate) {
    const auto c = parse_config_text(R"({"system": "vdp", "autoencoder": {"optimizer": "adam"}})");
    EXPECT_EQ(c.autoencoder->train.learning_rate, 1e-3);
}

TEST(Config, ArityMismatchNamesTheChain) {
    const auto msg = error_of(R"({"system": "vdp", "observable": "gauss6"})");
    EXPECT_NE(msg.find("dimension chain"), std::string::npos) << msg;
    EXPECT_NE(error_of(R"({"system": "reaction_diffusion", "autoencoder": {"latent": 2}})").find("dimension chain"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"system": "vdp", "autoencoder": {"input": 10}})").find("dimension chain"),
              std::string::npos);
    EXPECT_NE(error_of(R"({"system": "vdp", "autoencoder": {"latent": 3}})").find("dimension chain"),
              std::string::npos);
}

TEST(Config, ExpressionObservableArity) {
    const auto ok = parse_config_text(R"({"system": "vdp", "observable": {"expression": "z1*z2"}})");
    EXPECT_TRUE(ok.observable_is_expression);
    EXPECT_FALSE(error_of(R"({"system": "vdp", "observable": {"expression": "z3"}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "observable": {"expression": "z1 +"}})").empty());
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_NE(error_of(R"({"system": "vdp", "sedd": 1})").find("sedd"), std::string::npos);
    EXPECT_NE(error_of(R"({"system": "vdp", "vdp": {"muu": 1}})").find("vdp.muu"), std::string::npos);
    EXPECT_FALSE(error_of(R"({"system": "vdp", "reaction_diffusion": {}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "synthetic", "observable": "gauss3"})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "autoencoder": {"activation": "tanh"}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "rd"})").empty());
    EXPECT_FALSE(error_of(R"({"seed": 1})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "seed": "x"})").empty());
}

TEST(Config, ParseErrorsReportLine) {
    const auto msg = error_of("{\n  \"system\": \"vdp\",\n  \"seed\": 42,,\n}");
    EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
}

TEST(Config, ValidationCatchesBadValues) {
    EXPECT_FALSE(error_of(R"({"system": "vdp", "modes": 0})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "delay": {"k": 3}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "reaction_diffusion", "delay": {"k": 4}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "reaction_diffusion", "reaction_diffusion": {"dt": 0.01}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "lambda_grid": {"re_min": 1, "re_max": -1}})").empty());
    EXPECT_FALSE(error_of(R"({"system": "vdp", "lambda_segment": {"a": [1, 0], "b": [1, 0]}})").empty());
}

TEST(Config, ManifestEchoRoundTrips) {
    for (const char* text :
         {R"({"system": "vdp", "seed": 7, "modes": 3, "observable": "sumsq"})",
          R"({"system": "vdp", "autoencoder": null, "observable": {"expression": "z1 + z2"}})",
          R"({"system": "reaction_diffusion", "autoencoder": {"width_scale": 0.25, "optimizer": "adam"}})",
          R"({"system": "synthetic", "synthetic": {"modes": [{"lambda": [0, 1.5], "h": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20]}]}})"}) {
        const auto c = parse_config_text(text);
        const auto echo = to_json(c);
        const auto again = parse_config_json(echo);
        EXPECT_EQ(to_json(again), echo) << text;
    }
}

TEST(Config, BypassRunsSolverOnRawCoordinates) {
    const auto c = parse_config_text(R"({"system": "vdp", "autoencoder": null})");
    EXPECT_FALSE(c.autoencoder.has_value());
    EXPECT_EQ(c.feature_width(), 2);
}
