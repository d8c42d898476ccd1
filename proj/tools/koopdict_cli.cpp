// koopdict command-line driver.
//
//   koopdict run       --config cfg.json [--out dir] [--seed N] [--modes K] [--width-scale f]
//   koopdict simulate  ...   trajectories / surfaces only
//   koopdict embed     ...   lifted+scaled (vdp) or delay-embedded (rd) features
//   koopdict train-ae  ...   train and save model.bin + train_loss.csv
//   koopdict modes     ... [--model model.bin]   Koopman modes, optionally reusing a model
//   koopdict synthetic ...   planted-mode recovery check
//
// Exit codes: 0 success, 2 configuration error, 3 numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "koopdict/koopdict.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> modes;
    std::optional<double> width_scale;
    std::optional<std::string> model;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "experiment configuration (JSON)")->required();
    cmd->add_option("--out", f.out, "output directory (overrides output_dir)");
    cmd->add_option("--seed", f.seed, "global seed (overrides seed)");
    cmd->add_option("--modes", f.modes, "number of Koopman modes K");
    cmd->add_option("--width-scale", f.width_scale, "multiplier for the outermost hidden layer");
}

koopdict::ExperimentConfig load(const CommonFlags& f) {
    auto cfg = koopdict::parse_config(f.config);
    if (f.out) cfg.output_dir = *f.out;
    if (f.seed) cfg.seed = *f.seed;
    if (f.modes) cfg.modes = *f.modes;
    if (f.width_scale) {
        if (!cfg.autoencoder) throw koopdict::ConfigError("config: --width-scale given but no autoencoder configured");
        cfg.autoencoder->width_scale = *f.width_scale;
    }
    cfg.validate();
    return cfg;
}

void summarize(const koopdict::RunResult& r, const koopdict::ExperimentConfig& cfg) {
    if (r.training && !r.training->epoch_loss.empty())
        std::cout << "autoencoder: final loss " << r.training->epoch_loss.back() << ", accuracy "
                  << r.training->final_accuracy << ", " << r.training->wall_seconds << " s\n";
    if (r.decomposition) {
        const auto& d = *r.decomposition;
        for (std::size_t k = 0; k < d.modes.size(); ++k)
            std::cout << "mode " << (k + 1) << ": lambda = " << d.modes[k].lambda.real()
                      << (d.modes[k].lambda.imag() < 0 ? " - " : " + ") << std::abs(d.modes[k].lambda.imag())
                      << "i, residual " << d.residual_norms[k + 1] << '\n';
    }
    std::cout << "wrote " << r.manifest.files.size() << " files + manifest.json to " << cfg.output_dir << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Koopman eigenpair dictionaries from trajectory data"};
    app.require_subcommand(1);

    CommonFlags flags;
    struct Sub {
        const char* name;
        const char* help;
        koopdict::StopAfter stop;
    };
    const Sub subs[] = {
        {"run", "full pipeline", koopdict::StopAfter::full},
        {"simulate", "simulate trajectories only", koopdict::StopAfter::simulate},
        {"embed", "simulate and build autoencoder input features", koopdict::StopAfter::embed},
        {"train-ae", "train and save the autoencoder", koopdict::StopAfter::train},
        {"modes", "compute Koopman modes (optionally from a saved model)", koopdict::StopAfter::full},
        {"synthetic", "planted-mode recovery run", koopdict::StopAfter::full},
    };
    std::vector<std::pair<CLI::App*, const Sub*>> commands;
    for (const auto& s : subs) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, flags);
        if (std::string(s.name) == "modes") cmd->add_option("--model", flags.model, "saved model.bin to reuse");
        commands.emplace_back(cmd, &s);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    const Sub* chosen = nullptr;
    for (const auto& [cmd, sub] : commands)
        if (cmd->parsed()) chosen = sub;

    koopdict::ExperimentConfig cfg;
    koopdict::RunOptions opts;
    try {
        cfg = load(flags);
        opts.stop = chosen->stop;
        const std::string name = chosen->name;
        if (name == "synthetic" && cfg.system != koopdict::SystemKind::synthetic)
            throw koopdict::ConfigError("config: the synthetic command needs system = synthetic");
        if (name != "synthetic" && name != "run" && cfg.system == koopdict::SystemKind::synthetic)
            throw koopdict::ConfigError("config: synthetic configs run with the synthetic or run commands");
        if (flags.model) opts.model = koopdict::ae::load_model(*flags.model);
    } catch (const koopdict::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        const auto result = koopdict::run_pipeline(cfg, opts);
        summarize(result, cfg);
    } catch (const koopdict::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const koopdict::StageError& e) {
        std::cerr << "error in stage '" << e.stage() << "': " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
    return 0;
}
