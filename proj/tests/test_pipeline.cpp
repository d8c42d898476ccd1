#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "koopdict/koopdict.hpp"

using namespace koopdict;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("koopdict_pipeline_" + name);
    fs::remove_all(dir);
    return dir;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(KOOPDICT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << text;
    return path;
}

std::size_t line_count(const fs::path& path) {
    std::ifstream in(path);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

ExperimentConfig small_vdp(const fs::path& out, int epochs) {
    auto c = parse_config_text(R"({
        "system": "vdp",
        "vdp": {"mu": 1.0, "dt": 0.02, "n_steps": 40},
        "lambda_segment": {"a": [1.0, 0.0], "b": [2.0, 0.0], "n": 8},
        "autoencoder": {"hidden": [12, 8], "latent": 2, "epochs": 1, "optimizer": "adam"}
    })");
    c.output_dir = out.string();
    c.autoencoder->train.epochs = epochs;
    return c;
}

ExperimentConfig small_rd(const fs::path& out) {
    auto c = parse_config_text(R"({
        "system": "reaction_diffusion",
        "modes": 3,
        "reaction_diffusion": {"n_x": 20, "dt": 0.001, "t_end": 6.0, "output_stride": 500},
        "autoencoder": {"hidden": [16, 8], "epochs": 3, "optimizer": "adam"}
    })");
    c.output_dir = out.string();
    return c;
}

}  // namespace

TEST(Synthetic, SinglePlantedModeIsRecovered) {
    auto c = default_config(SystemKind::synthetic);
    c.output_dir = scratch("single").string();
    const auto r = run_pipeline(c);
    ASSERT_EQ(r.synthetic.size(), 1u);
    EXPECT_EQ(r.synthetic[0].recovered_lambda, std::complex<double>(-0.5, 0.0));
    EXPECT_LT(r.synthetic[0].h_rel_error, 1e-8);
    EXPECT_LT(r.synthetic[0].residual_ratio, 1e-9);
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "synthetic_report.csv"));
    EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "manifest.json"));
    fs::remove_all(c.output_dir);
}

TEST(Synthetic, TwoSeparatedModesInTwoSteps) {
    auto c = default_config(SystemKind::synthetic);
    c.output_dir = scratch("two").string();
    c.modes = 2;
    c.synthetic.m = 39;
    const double bin = 2.0 * std::numbers::pi / ((c.synthetic.m + 1) * c.synthetic.dt);
    c.synthetic.modes = {SyntheticMode{{0.0, bin}, {}, {3.0, 1.0}}, SyntheticMode{{0.0, -2.0 * bin}, {}, {1.0, -0.5}}};
    c.lambda_grid.re_min = -1.0;
    c.lambda_grid.re_max = 1.0;
    c.lambda_grid.re_count = 9;
    c.lambda_grid.im_min = -4.0 * bin;
    c.lambda_grid.im_max = 4.0 * bin;
    c.lambda_grid.im_count = 9;
    const auto r = run_pipeline(c);
    ASSERT_EQ(r.synthetic.size(), 2u);
    EXPECT_EQ(r.synthetic[0].planted_index, 0u);
    EXPECT_EQ(r.synthetic[1].planted_index, 1u);
    for (const auto& s : r.synthetic) {
        EXPECT_LT(std::abs(s.recovered_lambda - s.planted_lambda), 1e-12);
        EXPECT_LT(s.h_rel_error, 1e-8);
    }
    EXPECT_LT(r.synthetic[1].residual_ratio, 1e-6);
    fs::remove_all(c.output_dir);
}

TEST(Synthetic, HalfStepOffGridPicksABracketingCandidate) {
    auto c = default_config(SystemKind::synthetic);
    c.output_dir = scratch("offgrid").string();
    c.synthetic.modes[0].lambda = {-0.5 + 0.0125, 0.0};
    const auto r = run_pipeline(c);
    const double re = r.synthetic[0].recovered_lambda.real();
    EXPECT_TRUE(re == -0.5 || re == -0.475) << re;
    EXPECT_EQ(r.synthetic[0].recovered_lambda.imag(), 0.0);
    fs::remove_all(c.output_dir);
}

TEST(Manifest, HashesVerifyAndDetectTampering) {
    auto c = default_config(SystemKind::synthetic);
    c.output_dir = scratch("manifest").string();
    const auto r = run_pipeline(c);
    EXPECT_TRUE(verify_manifest(c.output_dir, r.manifest));
    EXPECT_EQ(r.manifest.files.size(), 4u);

    std::ifstream in(fs::path(c.output_dir) / "manifest.json");
    const auto doc = json::parse(in);
    EXPECT_EQ(doc["version"], kVersion);
    EXPECT_EQ(doc["files"].size(), r.manifest.files.size());
    EXPECT_EQ(parse_config_json(doc["config"]).synthetic.n, c.synthetic.n);

    std::ofstream(fs::path(c.output_dir) / "h_mode1.csv", std::ios::app) << "0,0,0\n";
    EXPECT_FALSE(verify_manifest(c.output_dir, r.manifest));
    fs::remove_all(c.output_dir);
}

TEST(Manifest, Sha256KnownVector) {
    const auto path = write_text(scratch("sha") / "abc.txt", "abc");
    EXPECT_EQ(sha256_file(path), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    fs::remove_all(path.parent_path());
}

TEST(Vdp, SingleModeWritesOneFamily) {
    auto c = small_vdp(scratch("k1"), 200);
    c.modes = 1;
    const auto r = run_pipeline(c);
    const fs::path out = c.output_dir;
    EXPECT_TRUE(fs::exists(out / "error_vs_lambda_mode1.csv"));
    EXPECT_TRUE(fs::exists(out / "h_mode1.csv"));
    EXPECT_FALSE(fs::exists(out / "error_vs_lambda_mode2.csv"));
    EXPECT_EQ(line_count(out / "min_error_vs_mode.csv"), 3u);
    EXPECT_EQ(line_count(out / "error_vs_lambda_mode1.csv"), 402u);
    EXPECT_EQ(line_count(out / "h_mode1.csv"), 9u);
    EXPECT_EQ(line_count(out / "trajectories.csv"), 1u + 8u * 41u);
    EXPECT_EQ(line_count(out / "train_loss.csv"), 201u);
    EXPECT_TRUE(verify_manifest(out, r.manifest));
    fs::remove_all(out);
}

TEST(Vdp, DeterministicAcrossRuns) {
    auto a = small_vdp(scratch("det_a"), 200);
    auto b = small_vdp(scratch("det_b"), 200);
    a.modes = b.modes = 4;
    const auto ra = run_pipeline(a);
    const auto rb = run_pipeline(b);
    ASSERT_EQ(ra.manifest.files.size(), rb.manifest.files.size());
    for (std::size_t i = 0; i < ra.manifest.files.size(); ++i) {
        EXPECT_EQ(ra.manifest.files[i].path, rb.manifest.files[i].path);
        EXPECT_EQ(ra.manifest.files[i].sha256, rb.manifest.files[i].sha256) << ra.manifest.files[i].path;
    }
    fs::remove_all(a.output_dir);
    fs::remove_all(b.output_dir);
}

TEST(Vdp, BypassDecomposesRawCoordinates) {
    auto c = small_vdp(scratch("bypass"), 0);
    c.autoencoder.reset();
    c.modes = 3;
    const auto r = run_pipeline(c);
    ASSERT_TRUE(r.decomposition.has_value());
    EXPECT_EQ(r.decomposition->modes.size(), 3u);
    EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "model.bin"));
    fs::remove_all(c.output_dir);
}

TEST(Vdp, SavedModelReproducesModes) {
    auto c = small_vdp(scratch("reuse_a"), 200);
    c.modes = 3;
    const auto first = run_pipeline(c);
    RunOptions opts;
    opts.model = ae::load_model(fs::path(c.output_dir) / "model.bin");
    auto c2 = c;
    c2.output_dir = scratch("reuse_b").string();
    const auto second = run_pipeline(c2, opts);
    EXPECT_EQ(first.decomposition->residual_norms, second.decomposition->residual_norms);
    EXPECT_FALSE(fs::exists(fs::path(c2.output_dir) / "model.bin"));

    auto wrong = c2;
    wrong.autoencoder->hidden = {10, 8};
    EXPECT_THROW(run_pipeline(wrong, opts), ConfigError);
    fs::remove_all(c.output_dir);
    fs::remove_all(c2.output_dir);
}

TEST(Vdp, StageFailureNamesStageAndCleansUp) {
    auto c = small_vdp(scratch("diverge"), 50);
    c.autoencoder->hidden = {12};
    c.autoencoder->activation = ae::Activation::linear;
    c.autoencoder->output_activation = ae::OutputActivation::linear;
    c.autoencoder->train.optimizer = ae::Optimizer::sgd;
    c.autoencoder->train.learning_rate = 1e6;
    try {
        run_pipeline(c);
        FAIL() << "expected a stage error";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "train");
        EXPECT_TRUE(e.numeric());
    }
    EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "trajectories.csv"));
    EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "manifest.json"));
    fs::remove_all(c.output_dir);
}

TEST(Rd, SurfacesAndMidSeries) {
    auto c = small_rd(scratch("rd_sim"));
    RunOptions opts;
    opts.stop = StopAfter::simulate;
    run_pipeline(c, opts);
    const fs::path out = c.output_dir;
    EXPECT_EQ(line_count(out / "rd_surface_u1.csv"), 1u + 20u * 13u);
    EXPECT_EQ(line_count(out / "rd_mid_u2.csv"), 1u + 13u);

    // The mid series repeats the surface entries at ix = (n_x - 1) / 2.
    std::ifstream surf(out / "rd_surface_u1.csv"), mid(out / "rd_mid_u1.csv");
    std::string line;
    std::getline(surf, line);
    std::getline(mid, line);
    std::vector<std::string> from_surface, from_mid;
    while (std::getline(surf, line))
        if (line.rfind("9,", 0) == 0) from_surface.push_back(line.substr(line.rfind(',') + 1));
    while (std::getline(mid, line)) from_mid.push_back(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(from_surface, from_mid);
    EXPECT_FALSE(fs::exists(out / "features.csv"));
    fs::remove_all(out);
}

TEST(Rd, FullRunAtToyScale) {
    auto c = small_rd(scratch("rd_full"));
    const auto r = run_pipeline(c);
    ASSERT_TRUE(r.decomposition.has_value());
    EXPECT_EQ(r.model->spec.sizes, (std::vector<int>{10, 16, 8, 6, 8, 16, 10}));
    EXPECT_EQ(r.latent->n(), 18u);
    EXPECT_EQ(r.latent->m(), 8);
    const auto& res = r.decomposition->residual_norms;
    for (std::size_t k = 1; k < res.size(); ++k) EXPECT_LE(res[k], res[k - 1]);
    EXPECT_TRUE(verify_manifest(c.output_dir, r.manifest));
    fs::remove_all(c.output_dir);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const auto good = write_text(dir / "syn.json", R"({"system": "synthetic"})");
    const auto unknown = write_text(dir / "unknown.json", R"({"system": "synthetic", "colour": 1})");
    const auto broken = write_text(dir / "broken.json", "{\"system\": ");
    const auto diverge = write_text(dir / "diverge.json", R"({
        "system": "vdp",
        "vdp": {"n_steps": 20},
        "lambda_segment": {"n": 4},
        "autoencoder": {"hidden": [8], "activation": "linear", "output_activation": "linear",
                        "epochs": 20, "learning_rate": 1e6}
    })");

    EXPECT_EQ(run_cli("synthetic --config " + good.string() + " --out " + (dir / "o1").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "o1" / "manifest.json"));
    EXPECT_EQ(run_cli("run --config " + good.string() + " --out " + (dir / "o2").string() + " --modes 2"), 0);
    EXPECT_EQ(line_count(dir / "o2" / "min_error_vs_mode.csv"), 4u);
    EXPECT_EQ(run_cli("run --config " + unknown.string()), 2);
    EXPECT_EQ(run_cli("run --config " + broken.string()), 2);
    EXPECT_EQ(run_cli("run --config " + (dir / "missing.json").string()), 2);
    EXPECT_EQ(run_cli("run"), 2);
    EXPECT_EQ(run_cli("frobnicate --config " + good.string()), 2);
    EXPECT_EQ(run_cli("synthetic --config " + good.string() + " --width-scale 0.5"), 2);
    EXPECT_EQ(run_cli("train-ae --config " + diverge.string() + " --out " + (dir / "o3").string()), 3);
    EXPECT_FALSE(fs::exists(dir / "o3" / "trajectories.csv"));
    fs::remove_all(dir);
}

TEST(Cli, SubcommandsStopAtTheirStage) {
    const fs::path dir = scratch("cli_stages");
    const auto cfg = write_text(dir / "vdp.json", R"({
        "system": "vdp",
        "vdp": {"n_steps": 20},
        "lambda_segment": {"n": 4},
        "autoencoder": {"hidden": [8], "epochs": 2, "optimizer": "adam"}
    })");
    EXPECT_EQ(run_cli("simulate --config " + cfg.string() + " --out " + (dir / "sim").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "sim" / "trajectories.csv"));
    EXPECT_FALSE(fs::exists(dir / "sim" / "features.csv"));

    EXPECT_EQ(run_cli("embed --config " + cfg.string() + " --out " + (dir / "emb").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "emb" / "features.csv"));
    EXPECT_FALSE(fs::exists(dir / "emb" / "model.bin"));

    EXPECT_EQ(run_cli("train-ae --config " + cfg.string() + " --out " + (dir / "tr").string()), 0);
    EXPECT_TRUE(fs::exists(dir / "tr" / "model.bin"));
    EXPECT_FALSE(fs::exists(dir / "tr" / "latent.csv"));

    EXPECT_EQ(run_cli("modes --config " + cfg.string() + " --out " + (dir / "md").string() + " --modes 2 --model " +
                      (dir / "tr" / "model.bin").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "md" / "error_vs_lambda_mode2.csv"));
    EXPECT_FALSE(fs::exists(dir / "md" / "model.bin"));
    fs::remove_all(dir);
}
