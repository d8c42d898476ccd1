#pragma once

// Experiment orchestration: simulate -> lift/scale or delay-embed -> train the
// autoencoder -> encode -> evaluate the observable -> greedy mode extraction,
// writing every artifact as CSV plus a manifest.json with content hashes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "koopdict/autoencoder.hpp"
#include "koopdict/config.hpp"
#include "koopdict/csv.hpp"
#include "koopdict/delay.hpp"
#include "koopdict/dynsys.hpp"
#include "koopdict/error.hpp"
#include "koopdict/koopman.hpp"
#include "koopdict/observable.hpp"

namespace koopdict {

inline constexpr const char* kVersion = "1.0.0";

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 init failed");
    }
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

struct ManifestFile {
    std::string path;  // relative to the output directory
    std::string sha256;
    std::uintmax_t bytes = 0;
};

struct RunManifest {
    json config;
    std::string version = kVersion;
    std::vector<std::pair<std::string, double>> timings;
    std::vector<ManifestFile> files;

    json to_json() const {
        json t = json::object();
        for (const auto& [stage, secs] : timings) t[stage] = secs;
        json f = json::array();
        for (const auto& e : files) f.push_back({{"path", e.path}, {"sha256", e.sha256}, {"bytes", e.bytes}});
        return {{"version", version}, {"config", config}, {"timings_seconds", t}, {"files", f}};
    }
};

/// Checks every listed file against its recorded hash.
inline bool verify_manifest(const std::filesystem::path& dir, const RunManifest& m) {
    for (const auto& f : m.files)
        if (!std::filesystem::exists(dir / f.path) || sha256_file(dir / f.path) != f.sha256) return false;
    return true;
}

/// Where a pipeline invocation stops.
enum class StopAfter { simulate, embed, train, full };

struct RunOptions {
    StopAfter stop = StopAfter::full;
    /// Use this model instead of training one.
    std::optional<ae::MlpParams> model;
};

struct SyntheticRecovery {
    std::size_t mode = 0;
    std::complex<double> recovered_lambda;
    std::size_t planted_index = 0;
    std::complex<double> planted_lambda;
    double h_rel_error = 0.0;
    double residual_ratio = 0.0;
};

struct RunResult {
    RunManifest manifest;
    std::optional<koopman::ModeDecomposition> decomposition;
    std::optional<ae::TrainReport> training;
    std::optional<ae::MlpParams> model;
    std::optional<dynsys::TrajectoryGrid> latent;
    std::vector<SyntheticRecovery> synthetic;
};

// ---------------------------------------------------------------------------
// stage building blocks (also used directly by the tests)

/// VdP ensemble on the configured segment.
inline dynsys::TrajectoryGrid vdp_ensemble(const ExperimentConfig& cfg) {
    return dynsys::simulate_vdp_ensemble(cfg.vdp, cfg.segment, cfg.nonrecurrence_tol);
}

/// Lifted to 3-D and min-max scaled per coordinate over the whole ensemble.
inline dynsys::TrajectoryGrid vdp_features(const dynsys::TrajectoryGrid& raw, double tol) {
    const auto lifted = dynsys::lift_vdp_3d(raw, tol);
    auto [scaled, rec] = dynsys::minmax_scale(lifted.flatten());
    return lifted.with_states(scaled, tol);
}

inline dynsys::RdSolution rd_simulation(const ExperimentConfig& cfg) {
    auto [u1, u2] = dynsys::rd_default_initial(cfg.rd.n_x);
    if (!cfg.rd_u1_init.empty()) u1 = Eigen::Map<const Eigen::VectorXd>(cfg.rd_u1_init.data(), cfg.rd.n_x);
    if (!cfg.rd_u2_init.empty()) u2 = Eigen::Map<const Eigen::VectorXd>(cfg.rd_u2_init.data(), cfg.rd.n_x);
    return dynsys::simulate_rd(cfg.rd, u1, u2);
}

/// Per spatial point: stacked (u1 window, u2 window) vectors, one matrix of T' x 2k each.
inline std::vector<Eigen::MatrixXd> rd_delay_vectors(const dynsys::RdSolution& sol, const delay::DelayConfig& dc) {
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<std::size_t>(sol.u1.dim()));
    for (Eigen::Index ix = 0; ix < sol.u1.dim(); ++ix) {
        const Eigen::VectorXd s1 = sol.u1.states.row(ix).transpose();
        const Eigen::VectorXd s2 = sol.u2.states.row(ix).transpose();
        out.push_back(delay::stack_channels({delay::delay_embed(s1, dc), delay::delay_embed(s2, dc)}).vectors);
    }
    return out;
}

inline Eigen::MatrixXd stack_rows(const std::vector<Eigen::MatrixXd>& blocks) {
    Eigen::Index rows = 0;
    for (const auto& b : blocks) rows += b.rows();
    Eigen::MatrixXd out(rows, blocks.front().cols());
    Eigen::Index r = 0;
    for (const auto& b : blocks) {
        out.middleRows(r, b.rows()) = b;
        r += b.rows();
    }
    return out;
}

/// Scaled delay vectors: all spatial rows for training, plus the interior
/// rows as a trajectory grid (boundary rows are stationary and would be recurrent).
struct RdFeatures {
    Eigen::MatrixXd training;
    dynsys::TrajectoryGrid interior;
};

inline RdFeatures rd_features(const dynsys::RdSolution& sol, const delay::DelayConfig& dc, double tol) {
    const auto blocks = rd_delay_vectors(sol, dc);
    auto [scaled, rec] = dynsys::minmax_scale(stack_rows(blocks));
    const Eigen::Index per = blocks.front().rows();
    std::vector<dynsys::Trajectory> rows;
    const auto nx = static_cast<Eigen::Index>(blocks.size());
    for (Eigen::Index ix = 1; ix + 1 < nx; ++ix)
        rows.emplace_back(scaled.middleRows(ix * per, per).transpose(), sol.u1.dt);
    Eigen::VectorXd s = sol.x.segment(1, nx - 2);
    dynsys::TrajectoryGrid grid(std::move(rows), std::move(s), tol);
    return {std::move(scaled), std::move(grid)};
}

inline std::pair<ae::MlpParams, ae::TrainReport> train_autoencoder(const ExperimentConfig& cfg,
                                                                   const Eigen::MatrixXd& data) {
    const auto& a = cfg.autoencoder.value();
    ae::TrainConfig tc = a.train;
    tc.seed = cfg.seed;
    return ae::train(a.layer_spec(static_cast<int>(data.cols())), data, tc);
}

inline dynsys::TrajectoryGrid encode_grid(const ae::MlpParams& model, const dynsys::TrajectoryGrid& features,
                                          double tol) {
    return features.with_states(ae::encode_batch(model, features.flatten()), tol);
}

inline koopman::ModeDecomposition decompose(const dynsys::TrajectoryGrid& latent, const Observable& obs,
                                            const LambdaGridConfig& lg, int modes) {
    if (!obs.accepts(latent.dim()))
        throw InvalidArgument("observable '" + obs.id + "' cannot read a " + std::to_string(latent.dim()) +
                              "-dimensional state");
    const auto q = koopman::evaluate_observable(latent, [&](const Eigen::VectorXd& z) { return koopman::cplx(obs(z)); });
    koopman::ScanOptions opts;
    opts.refine = lg.refine;
    return koopman::greedy_decompose(q, lg.build(), modes, opts, obs.id);
}

/// Exact planted-mode observable for synthetic runs.
inline koopman::ObservableGrid synthetic_observable(const SyntheticConfig& sc) {
    const Eigen::VectorXd s = Eigen::VectorXd::LinSpaced(sc.n, 0.0, 1.0);
    const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(sc.m + 1, 0.0, sc.dt * sc.m);
    Eigen::MatrixXcd q = Eigen::MatrixXcd::Zero(sc.n, sc.m + 1);
    for (const auto& md : sc.modes) q += md.initial_data(s) * koopman::build_E(md.lambda, t).transpose();
    return koopman::ObservableGrid(std::move(q), t, s);
}

// ---------------------------------------------------------------------------

namespace detail {

/// Tracks emitted files so a failed run can remove its partial outputs.
class RunContext {
public:
    RunContext(const ExperimentConfig& cfg) : dir_(cfg.output_dir) {
        result.manifest.config = to_json(cfg);
        std::filesystem::create_directories(dir_);
    }

    std::filesystem::path path(const std::string& name) {
        written_.push_back(name);
        return dir_ / name;
    }

    void add(const std::vector<std::filesystem::path>& paths) {
        for (const auto& p : paths) written_.push_back(std::filesystem::relative(p, dir_).string());
    }

    template <class F>
    auto stage(const std::string& name, F&& body) {
        const auto start = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(body())>) {
                body();
                record(name, start);
            } else {
                auto out = body();
                record(name, start);
                return out;
            }
        } catch (const StageError&) {
            cleanup();
            throw;
        } catch (const ConfigError&) {
            cleanup();
            throw;
        } catch (const NumericError& e) {
            cleanup();
            throw StageError(name, e.what(), true);
        } catch (const std::exception& e) {
            cleanup();
            throw StageError(name, e.what(), true);
        }
    }

    RunResult finish() {
        stage("manifest", [&] {
            for (const auto& rel : written_) {
                const auto p = dir_ / rel;
                result.manifest.files.push_back({rel, sha256_file(p), std::filesystem::file_size(p)});
            }
            const auto mpath = dir_ / "manifest.json";
            std::ofstream out(mpath);
            if (!out) throw Error("cannot write " + mpath.string());
            out << result.manifest.to_json().dump(2) << '\n';
        });
        return std::move(result);
    }

    RunResult result;

private:
    void record(const std::string& name, std::chrono::steady_clock::time_point start) {
        result.manifest.timings.emplace_back(
            name, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }

    void cleanup() {
        std::error_code ec;
        for (const auto& rel : written_) std::filesystem::remove(dir_ / rel, ec);
        std::filesystem::remove(dir_ / "manifest.json", ec);
    }

    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

inline void write_loss_csv(const std::filesystem::path& path, const ae::TrainReport& r) {
    csv::Writer w(path, "epoch,loss");
    for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) {
        w.field(e).field(r.epoch_loss[e]);
        w.end_row();
    }
}

/// Shared tail: train (or reuse) the model, encode, decompose, write.
inline void model_and_modes(RunContext& ctx, const ExperimentConfig& cfg, const RunOptions& opts,
                            const Eigen::MatrixXd& training, const dynsys::TrajectoryGrid& features) {
    std::optional<ae::MlpParams> model;
    if (cfg.autoencoder) {
        if (opts.model) {
            model = ctx.stage("load-model", [&] {
                const ae::LayerSpec expected = cfg.autoencoder->layer_spec(static_cast<int>(training.cols()));
                if (!(opts.model->spec == expected))
                    throw ConfigError("config: supplied model architecture does not match the configuration");
                return *opts.model;
            });
        } else {
            auto [params, report] = ctx.stage("train", [&] { return train_autoencoder(cfg, training); });
            ctx.stage("write-model", [&] {
                ae::save_model(ctx.path("model.bin"), params);
                write_loss_csv(ctx.path("train_loss.csv"), report);
            });
            ctx.result.training = std::move(report);
            model = std::move(params);
        }
        ctx.result.model = model;
    }
    if (opts.stop == StopAfter::train) return;

    auto latent = ctx.stage("encode", [&] {
        return model ? encode_grid(*model, features, cfg.nonrecurrence_tol) : features;
    });
    auto decomp = ctx.stage("koopman", [&] { return decompose(latent, cfg.make_observable(), cfg.lambda_grid, cfg.modes); });
    ctx.stage("write-modes", [&] {
        dynsys::write_trajectory_csv(ctx.path("latent.csv"), latent);
        ctx.add(koopman::write_decomposition_csv(cfg.output_dir, decomp));
    });
    ctx.result.latent = std::move(latent);
    ctx.result.decomposition = std::move(decomp);
}

}  // namespace detail

inline RunResult run_vdp_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    if (cfg.system != SystemKind::vdp) throw ConfigError("config: run_vdp_pipeline needs system = vdp");
    cfg.validate();
    detail::RunContext ctx(cfg);
    auto raw = ctx.stage("simulate", [&] { return vdp_ensemble(cfg); });
    ctx.stage("write-trajectories", [&] { dynsys::write_trajectory_csv(ctx.path("trajectories.csv"), raw); });
    if (opts.stop == StopAfter::simulate) return ctx.finish();

    if (!cfg.autoencoder) {
        if (opts.stop == StopAfter::embed || opts.stop == StopAfter::train) return ctx.finish();
        detail::model_and_modes(ctx, cfg, opts, raw.flatten(), raw);
        return ctx.finish();
    }
    auto features = ctx.stage("lift-scale", [&] { return vdp_features(raw, cfg.nonrecurrence_tol); });
    ctx.stage("write-features", [&] { dynsys::write_trajectory_csv(ctx.path("features.csv"), features); });
    if (opts.stop == StopAfter::embed) return ctx.finish();
    detail::model_and_modes(ctx, cfg, opts, features.flatten(), features);
    return ctx.finish();
}

inline RunResult run_rd_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    if (cfg.system != SystemKind::reaction_diffusion)
        throw ConfigError("config: run_rd_pipeline needs system = reaction_diffusion");
    cfg.validate();
    detail::RunContext ctx(cfg);
    auto sol = ctx.stage("simulate", [&] { return rd_simulation(cfg); });
    ctx.stage("write-surfaces", [&] {
        // Mid-domain series: 0-based index 49 of linspace(0, 1, 100), scaled for other n_x.
        const Eigen::Index mid = (cfg.rd.n_x - 1) / 2;
        for (auto [name, field] : {std::pair{"u1", &sol.u1}, std::pair{"u2", &sol.u2}}) {
            csv::Writer surf(ctx.path(std::string("rd_surface_") + name + ".csv"), "ix,x,step,t,value");
            for (Eigen::Index ix = 0; ix < field->dim(); ++ix)
                for (Eigen::Index j = 0; j < field->size(); ++j) {
                    surf.field(static_cast<long long>(ix)).field(sol.x[ix]).field(static_cast<long long>(j));
                    surf.field(field->time(j)).field(field->states(ix, j));
                    surf.end_row();
                }
            csv::Writer midw(ctx.path(std::string("rd_mid_") + name + ".csv"), "step,t,value");
            for (Eigen::Index j = 0; j < field->size(); ++j) {
                midw.field(static_cast<long long>(j)).field(field->time(j)).field(field->states(mid, j));
                midw.end_row();
            }
        }
    });
    if (opts.stop == StopAfter::simulate) return ctx.finish();

    auto feats = ctx.stage("embed", [&] { return rd_features(sol, *cfg.delay, cfg.nonrecurrence_tol); });
    ctx.stage("write-embedding", [&] { dynsys::write_trajectory_csv(ctx.path("features.csv"), feats.interior); });
    if (opts.stop == StopAfter::embed) return ctx.finish();
    detail::model_and_modes(ctx, cfg, opts, feats.training, feats.interior);
    return ctx.finish();
}

inline RunResult run_synthetic(const ExperimentConfig& cfg) {
    if (cfg.system != SystemKind::synthetic) throw ConfigError("config: run_synthetic needs system = synthetic");
    cfg.validate();
    detail::RunContext ctx(cfg);
    const auto q = ctx.stage("synthesize", [&] { return synthetic_observable(cfg.synthetic); });
    auto decomp = ctx.stage("koopman", [&] {
        koopman::ScanOptions opts;
        opts.refine = cfg.lambda_grid.refine;
        return koopman::greedy_decompose(q, cfg.lambda_grid.build(), cfg.modes, opts, "synthetic");
    });
    ctx.stage("report", [&] {
        const auto& planted = cfg.synthetic.modes;
        for (std::size_t k = 0; k < decomp.modes.size(); ++k) {
            const auto& mode = decomp.modes[k];
            std::size_t best = 0;
            for (std::size_t p = 1; p < planted.size(); ++p)
                if (std::abs(planted[p].lambda - mode.lambda) < std::abs(planted[best].lambda - mode.lambda)) best = p;
            const Eigen::VectorXcd h_true = planted[best].initial_data(q.s_params);
            SyntheticRecovery r;
            r.mode = k + 1;
            r.recovered_lambda = mode.lambda;
            r.planted_index = best;
            r.planted_lambda = planted[best].lambda;
            r.h_rel_error = (mode.h - h_true).norm() / h_true.norm();
            r.residual_ratio = decomp.residual_norms[k + 1] / decomp.residual_norms[0];
            ctx.result.synthetic.push_back(r);
        }
        csv::Writer w(ctx.path("synthetic_report.csv"),
                      "mode,lambda_re,lambda_im,planted_index,planted_re,planted_im,h_rel_error,residual_ratio");
        for (const auto& r : ctx.result.synthetic) {
            w.field(r.mode).field(r.recovered_lambda.real()).field(r.recovered_lambda.imag()).field(r.planted_index);
            w.field(r.planted_lambda.real()).field(r.planted_lambda.imag()).field(r.h_rel_error).field(r.residual_ratio);
            w.end_row();
        }
        ctx.add(koopman::write_decomposition_csv(cfg.output_dir, decomp));
    });
    ctx.result.decomposition = std::move(decomp);
    return ctx.finish();
}

/// Dispatch on cfg.system.
inline RunResult run_pipeline(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    switch (cfg.system) {
        case SystemKind::vdp: return run_vdp_pipeline(cfg, opts);
        case SystemKind::reaction_diffusion: return run_rd_pipeline(cfg, opts);
        case SystemKind::synthetic: return run_synthetic(cfg);
    }
    throw ConfigError("config: unknown system");
}

}  // namespace koopdict
