#pragma once

// Experiment configuration: one JSON document per run. Every key is optional
// except "system"; unknown keys are rejected. to_json() echoes the fully
// defaulted configuration, and parse_config_json(to_json(c)) reproduces c.

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "koopdict/autoencoder.hpp"
#include "koopdict/delay.hpp"
#include "koopdict/dynsys.hpp"
#include "koopdict/error.hpp"
#include "koopdict/koopman.hpp"
#include "koopdict/observable.hpp"

namespace koopdict {

using json = nlohmann::ordered_json;

enum class SystemKind { vdp, reaction_diffusion, synthetic };

struct AutoencoderConfig {
    std::vector<int> hidden{100, 100};
    int latent = 2;
    ae::Activation activation = ae::Activation::sigmoid;
    ae::OutputActivation output_activation = ae::OutputActivation::sigmoid;
    /// Multiplies the outermost hidden layer (and its decoder mirror).
    double width_scale = 1.0;
    ae::TrainConfig train;

    std::vector<int> scaled_hidden() const {
        std::vector<int> h = hidden;
        if (!h.empty()) h.front() = std::max(1, static_cast<int>(std::lround(h.front() * width_scale)));
        return h;
    }

    ae::LayerSpec layer_spec(int input) const {
        return ae::LayerSpec::symmetric(input, scaled_hidden(), latent, activation, output_activation);
    }
};

struct LambdaGridConfig {
    double re_min = -5.0, re_max = 5.0;
    int re_count = 401;
    double im_min = 0.0, im_max = 0.0;
    int im_count = 1;
    bool refine = false;

    koopman::LambdaGrid build() const {
        return koopman::LambdaGrid::rectangle(re_min, re_max, re_count, im_min, im_max, im_count);
    }
};

struct SyntheticMode {
    std::complex<double> lambda;
    /// Explicit h_i values (length n); when empty, h(s) = sum_k h_poly[k] s^k.
    std::vector<double> h;
    std::vector<double> h_poly{1.0};

    Eigen::VectorXcd initial_data(const Eigen::VectorXd& s) const {
        Eigen::VectorXcd out(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            if (!h.empty()) {
                out[i] = h[static_cast<std::size_t>(i)];
            } else {
                double v = 0.0, p = 1.0;
                for (double c : h_poly) {
                    v += c * p;
                    p *= s[i];
                }
                out[i] = v;
            }
        }
        return out;
    }
};

struct SyntheticConfig {
    int n = 20;
    int m = 40;
    double dt = 0.05;
    std::vector<SyntheticMode> modes{SyntheticMode{{-0.5, 0.0}, {}, {1.0, 2.0}}};
};

struct ExperimentConfig {
    SystemKind system = SystemKind::vdp;
    std::uint64_t seed = 42;
    std::string output_dir = "out";
    int modes = 10;
    double nonrecurrence_tol = dynsys::kDefaultNonRecurrenceTol;
    LambdaGridConfig lambda_grid;

    /// Built-in id, or the expression text when `observable_is_expression`.
    std::string observable = "gauss3";
    bool observable_is_expression = false;

    dynsys::VdpParams vdp;
    dynsys::LambdaSegment segment{Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(2.0, 0.0), 50};

    dynsys::RdParams rd;
    std::vector<double> rd_u1_init, rd_u2_init;  // empty = default initial condition

    std::optional<delay::DelayConfig> delay;
    std::optional<AutoencoderConfig> autoencoder = AutoencoderConfig{};
    SyntheticConfig synthetic;

    Observable make_observable() const {
        return observable_is_expression ? parse_observable_expression(observable) : make_builtin_observable(observable);
    }

    /// Width of the data entering the autoencoder (or the solver, when bypassed).
    int feature_width() const {
        switch (system) {
            case SystemKind::vdp: return autoencoder ? 3 : 2;
            case SystemKind::reaction_diffusion: return 2 * (delay ? delay->k : 1);
            case SystemKind::synthetic: return 0;
        }
        return 0;
    }

    /// Checks the dimension chain system -> lift/delay -> AE -> latent -> observable.
    void validate() const;
};

inline ExperimentConfig default_config(SystemKind system) {
    ExperimentConfig c;
    c.system = system;
    if (system == SystemKind::reaction_diffusion) {
        c.delay = delay::DelayConfig{};
        c.autoencoder = AutoencoderConfig{};
        c.autoencoder->hidden = {3200, 100};
        c.autoencoder->latent = 6;
        c.observable = "gauss6";
    } else if (system == SystemKind::synthetic) {
        c.autoencoder.reset();
        c.observable = "synthetic";
        c.modes = 1;
    }
    return c;
}

inline std::string to_string(SystemKind s) {
    switch (s) {
        case SystemKind::vdp: return "vdp";
        case SystemKind::reaction_diffusion: return "reaction_diffusion";
        case SystemKind::synthetic: return "synthetic";
    }
    return "?";
}

// ---------------------------------------------------------------------------

namespace cfgdetail {

/// Reads keys from one JSON object, remembering which were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* get(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    template <class T>
    void read(const std::string& key, T& out) {
        if (const json* v = get(key)) {
            try {
                out = v->get<T>();
            } catch (const json::exception&) {
                throw ConfigError(where(key) + "has the wrong type");
            }
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + "unknown key");
    }

    std::string where(const std::string& key = {}) const {
        std::string p = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
        return p.empty() ? std::string("config: ") : "config key '" + p + "': ";
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class Table>
auto enum_from(const std::string& text, const Table& table, const std::string& where) {
    for (const auto& [name, value] : table)
        if (text == name) return value;
    std::string opts;
    for (const auto& [name, value] : table) opts += (opts.empty() ? "" : ", ") + std::string(name);
    throw ConfigError(where + "'" + text + "' is not one of " + opts);
}

inline constexpr std::array<std::pair<const char*, ae::Activation>, 3> kActivations = {{
    {"sigmoid", ae::Activation::sigmoid}, {"relu", ae::Activation::relu}, {"linear", ae::Activation::linear}}};
inline constexpr std::array<std::pair<const char*, ae::OutputActivation>, 3> kOutputActivations = {{
    {"same", ae::OutputActivation::same}, {"linear", ae::OutputActivation::linear},
    {"sigmoid", ae::OutputActivation::sigmoid}}};
inline constexpr std::array<std::pair<const char*, ae::Optimizer>, 2> kOptimizers = {{
    {"sgd", ae::Optimizer::sgd}, {"adam", ae::Optimizer::adam}}};
inline constexpr std::array<std::pair<const char*, delay::Centering>, 2> kCenterings = {{
    {"causal", delay::Centering::causal}, {"centered", delay::Centering::centered}}};
inline constexpr std::array<std::pair<const char*, dynsys::Nonlinearity>, 2> kNonlinearities = {{
    {"cubic", dynsys::Nonlinearity::cubic}, {"identity", dynsys::Nonlinearity::identity}}};
inline constexpr std::array<std::pair<const char*, SystemKind>, 3> kSystems = {{
    {"vdp", SystemKind::vdp}, {"reaction_diffusion", SystemKind::reaction_diffusion},
    {"synthetic", SystemKind::synthetic}}};

template <class E, class Table>
std::string enum_name(E value, const Table& table) {
    for (const auto& [name, v] : table)
        if (v == value) return name;
    return "?";
}

template <class E, class Table>
void read_enum(Section& s, const std::string& key, E& out, const Table& table) {
    std::string text;
    if (!s.has(key)) {
        s.get(key);
        return;
    }
    s.read(key, text);
    out = enum_from(text, table, s.where(key));
}

inline Eigen::VectorXd read_point(Section& s, const std::string& key, const Eigen::VectorXd& fallback) {
    std::vector<double> v;
    if (!s.has(key)) {
        s.get(key);
        return fallback;
    }
    s.read(key, v);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace cfgdetail

inline void ExperimentConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
    if (modes < 1) fail("modes must be >= 1");
    if (!(nonrecurrence_tol >= 0.0)) fail("nonrecurrence_tol must be >= 0");
    try {
        lambda_grid.build();
    } catch (const InvalidArgument& e) {
        fail(std::string("lambda_grid: ") + e.what());
    }

    if (system == SystemKind::synthetic) {
        if (autoencoder) fail("synthetic runs take no autoencoder");
        if (delay) fail("synthetic runs take no delay embedding");
        if (synthetic.n < 2 || synthetic.m < 1 || !(synthetic.dt > 0.0)) fail("synthetic: need n >= 2, m >= 1, dt > 0");
        if (synthetic.modes.empty()) fail("synthetic: at least one planted mode is required");
        for (const auto& md : synthetic.modes)
            if (!md.h.empty() && md.h.size() != static_cast<std::size_t>(synthetic.n))
                fail("synthetic: explicit h must have n entries");
        return;
    }

    if (system == SystemKind::vdp) {
        if (delay) fail("delay embedding applies to reaction_diffusion runs only");
        if (segment.a.size() != 2 || segment.b.size() != 2) fail("lambda_segment endpoints must be 2-D for vdp");
        if (segment.n < 2) fail("lambda_segment.n must be >= 2");
        if (segment.a == segment.b) fail("lambda_segment endpoints coincide");
        if (!(vdp.mu > 0.0) || !(vdp.dt > 0.0) || vdp.n_steps < 1) fail("vdp: need mu > 0, dt > 0, n_steps >= 1");
    } else {
        if (!delay) fail("reaction_diffusion runs need a delay section");
        try {
            delay->validate();
            rd.validate();
        } catch (const InvalidArgument& e) {
            fail(e.what());
        }
        if (!rd_u1_init.empty() && rd_u1_init.size() != static_cast<std::size_t>(rd.n_x))
            fail("reaction_diffusion.u1_init must have n_x entries");
        if (!rd_u2_init.empty() && rd_u2_init.size() != static_cast<std::size_t>(rd.n_x))
            fail("reaction_diffusion.u2_init must have n_x entries");
        const long samples = rd.total_steps() / rd.output_stride + 1;
        if (samples < delay->span() + 2) fail("delay window longer than the simulated series");
    }

    const int width = feature_width();
    int observable_input = width;
    if (autoencoder) {
        const auto& a = *autoencoder;
        if (a.latent < 1) fail("autoencoder.latent must be >= 1");
        if (a.latent >= width)
            fail("dimension chain: latent size " + std::to_string(a.latent) + " must be below the autoencoder input " +
                 std::to_string(width));
        if (!(a.width_scale > 0.0)) fail("autoencoder.width_scale must be > 0");
        try {
            a.layer_spec(width);
            a.train.validate();
        } catch (const InvalidArgument& e) {
            fail(std::string("autoencoder: ") + e.what());
        }
        observable_input = a.latent;
    }
    const Observable obs = make_observable();
    if (!obs.accepts(observable_input))
        fail("dimension chain: observable '" + obs.id + "' reads " + std::to_string(obs.arity) +
             " coordinates but the " + (autoencoder ? "latent space" : "solver input") + " has " +
             std::to_string(observable_input));
}

inline json to_json(const ExperimentConfig& c) {
    using namespace cfgdetail;
    json j;
    j["system"] = to_string(c.system);
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["modes"] = c.modes;
    j["nonrecurrence_tol"] = c.nonrecurrence_tol;
    j["lambda_grid"] = {{"re_min", c.lambda_grid.re_min}, {"re_max", c.lambda_grid.re_max},
                        {"re_count", c.lambda_grid.re_count}, {"im_min", c.lambda_grid.im_min},
                        {"im_max", c.lambda_grid.im_max}, {"im_count", c.lambda_grid.im_count},
                        {"refine", c.lambda_grid.refine}};

    if (c.system == SystemKind::synthetic) {
        json modes = json::array();
        for (const auto& md : c.synthetic.modes) {
            json e{{"lambda", {md.lambda.real(), md.lambda.imag()}}};
            if (!md.h.empty())
                e["h"] = md.h;
            else
                e["h_poly"] = md.h_poly;
            modes.push_back(e);
        }
        j["synthetic"] = {{"n", c.synthetic.n}, {"m", c.synthetic.m}, {"dt", c.synthetic.dt}, {"modes", modes}};
        return j;
    }

    if (c.observable_is_expression)
        j["observable"] = {{"expression", c.observable}};
    else
        j["observable"] = c.observable;

    if (c.system == SystemKind::vdp) {
        j["vdp"] = {{"mu", c.vdp.mu}, {"dt", c.vdp.dt}, {"n_steps", c.vdp.n_steps}};
        j["lambda_segment"] = {{"a", to_vector(c.segment.a)}, {"b", to_vector(c.segment.b)}, {"n", c.segment.n}};
    } else {
        json rd{{"D", c.rd.D},
                {"epsilon", c.rd.epsilon},
                {"alpha", c.rd.alpha},
                {"n_x", c.rd.n_x},
                {"dt", c.rd.dt},
                {"t_end", c.rd.t_end},
                {"output_stride", c.rd.output_stride},
                {"nonlinearity", enum_name(c.rd.nonlinearity, kNonlinearities)},
                {"reaction", c.rd.reaction}};
        rd["u1_init"] = c.rd_u1_init.empty() ? json(nullptr) : json(c.rd_u1_init);
        rd["u2_init"] = c.rd_u2_init.empty() ? json(nullptr) : json(c.rd_u2_init);
        j["reaction_diffusion"] = rd;
        j["delay"] = c.delay ? json{{"k", c.delay->k},
                                    {"tau", c.delay->tau},
                                    {"centering", enum_name(c.delay->centering, kCenterings)}}
                             : json(nullptr);
    }

    if (c.autoencoder) {
        const auto& a = *c.autoencoder;
        j["autoencoder"] = {{"hidden", a.hidden},
                            {"latent", a.latent},
                            {"activation", enum_name(a.activation, kActivations)},
                            {"output_activation", enum_name(a.output_activation, kOutputActivations)},
                            {"width_scale", a.width_scale},
                            {"epochs", a.train.epochs},
                            {"learning_rate", a.train.learning_rate},
                            {"batch_size", a.train.batch_size},
                            {"optimizer", enum_name(a.train.optimizer, kOptimizers)}};
    } else {
        j["autoencoder"] = nullptr;
    }
    return j;
}

inline ExperimentConfig parse_config_json(const json& root) {
    using namespace cfgdetail;
    Section top(root, "");
    std::string system_name;
    if (!top.has("system")) throw ConfigError("config key 'system': required");
    top.read("system", system_name);
    ExperimentConfig c = default_config(enum_from(system_name, kSystems, top.where("system")));

    top.read("seed", c.seed);
    top.read("output_dir", c.output_dir);
    top.read("modes", c.modes);
    top.read("nonrecurrence_tol", c.nonrecurrence_tol);

    if (const json* g = top.get("lambda_grid")) {
        Section s(*g, "lambda_grid");
        s.read("re_min", c.lambda_grid.re_min);
        s.read("re_max", c.lambda_grid.re_max);
        s.read("re_count", c.lambda_grid.re_count);
        s.read("im_min", c.lambda_grid.im_min);
        s.read("im_max", c.lambda_grid.im_max);
        s.read("im_count", c.lambda_grid.im_count);
        s.read("refine", c.lambda_grid.refine);
        s.finish();
    }

    if (c.system == SystemKind::synthetic && top.has("observable"))
        throw ConfigError(top.where("observable") + "synthetic runs build the observable from the planted modes");
    if (const json* o = top.get("observable")) {
        if (o->is_string()) {
            c.observable = o->get<std::string>();
            c.observable_is_expression = false;
            make_builtin_observable(c.observable);
        } else {
            Section s(*o, "observable");
            if (!s.has("expression")) throw ConfigError(s.where("expression") + "required");
            s.read("expression", c.observable);
            c.observable_is_expression = true;
            s.finish();
            parse_observable_expression(c.observable);
        }
    }

    auto reject = [&](const char* key) {
        if (top.has(key))
            throw ConfigError(top.where(key) + "does not apply to system " + to_string(c.system));
        top.get(key);
    };

    if (c.system == SystemKind::vdp) {
        reject("reaction_diffusion");
        reject("synthetic");
        if (const json* v = top.get("vdp")) {
            Section s(*v, "vdp");
            s.read("mu", c.vdp.mu);
            s.read("dt", c.vdp.dt);
            s.read("n_steps", c.vdp.n_steps);
            s.finish();
        }
        if (const json* v = top.get("lambda_segment")) {
            Section s(*v, "lambda_segment");
            c.segment.a = read_point(s, "a", c.segment.a);
            c.segment.b = read_point(s, "b", c.segment.b);
            s.read("n", c.segment.n);
            s.finish();
        }
    } else if (c.system == SystemKind::reaction_diffusion) {
        reject("vdp");
        reject("lambda_segment");
        reject("synthetic");
        if (const json* v = top.get("reaction_diffusion")) {
            Section s(*v, "reaction_diffusion");
            s.read("D", c.rd.D);
            s.read("epsilon", c.rd.epsilon);
            s.read("alpha", c.rd.alpha);
            s.read("n_x", c.rd.n_x);
            s.read("dt", c.rd.dt);
            s.read("t_end", c.rd.t_end);
            s.read("output_stride", c.rd.output_stride);
            read_enum(s, "nonlinearity", c.rd.nonlinearity, kNonlinearities);
            s.read("reaction", c.rd.reaction);
            for (auto [key, dest] : {std::pair{"u1_init", &c.rd_u1_init}, std::pair{"u2_init", &c.rd_u2_init}}) {
                const json* u = s.get(key);
                if (u && !u->is_null()) s.read(key, *dest);
            }
            s.finish();
        }
    } else {
        for (const char* key : {"vdp", "lambda_segment", "reaction_diffusion"}) reject(key);
        if (const json* v = top.get("synthetic")) {
            Section s(*v, "synthetic");
            s.read("n", c.synthetic.n);
            s.read("m", c.synthetic.m);
            s.read("dt", c.synthetic.dt);
            if (const json* ms = s.get("modes")) {
                if (!ms->is_array()) throw ConfigError(s.where("modes") + "expected an array");
                c.synthetic.modes.clear();
                for (std::size_t k = 0; k < ms->size(); ++k) {
                    Section e((*ms)[k], "synthetic.modes[" + std::to_string(k) + "]");
                    std::vector<double> lam{0.0, 0.0};
                    e.read("lambda", lam);
                    if (lam.size() != 2) throw ConfigError(e.where("lambda") + "expected [re, im]");
                    SyntheticMode md;
                    md.lambda = {lam[0], lam[1]};
                    e.read("h", md.h);
                    e.read("h_poly", md.h_poly);
                    e.finish();
                    c.synthetic.modes.push_back(std::move(md));
                }
            }
            s.finish();
        }
    }

    if (const json* d = top.get("delay")) {
        if (d->is_null()) {
            c.delay.reset();
        } else {
            Section s(*d, "delay");
            delay::DelayConfig dc = c.delay.value_or(delay::DelayConfig{});
            s.read("k", dc.k);
            s.read("tau", dc.tau);
            read_enum(s, "centering", dc.centering, kCenterings);
            s.finish();
            c.delay = dc;
        }
    }

    if (const json* a = top.get("autoencoder")) {
        if (a->is_null()) {
            c.autoencoder.reset();
        } else {
            Section s(*a, "autoencoder");
            AutoencoderConfig ac = c.autoencoder.value_or(AutoencoderConfig{});
            s.read("hidden", ac.hidden);
            s.read("latent", ac.latent);
            read_enum(s, "activation", ac.activation, kActivations);
            read_enum(s, "output_activation", ac.output_activation, kOutputActivations);
            s.read("width_scale", ac.width_scale);
            s.read("epochs", ac.train.epochs);
            s.read("batch_size", ac.train.batch_size);
            read_enum(s, "optimizer", ac.train.optimizer, kOptimizers);
            ac.train.learning_rate = ae::TrainConfig::default_learning_rate(ac.train.optimizer);
            s.read("learning_rate", ac.train.learning_rate);
            if (s.has("input")) {
                int input = 0;
                s.read("input", input);
                if (input != c.feature_width())
                    throw ConfigError("config: dimension chain: autoencoder.input is " + std::to_string(input) +
                                      " but the " + to_string(c.system) + " pipeline feeds " +
                                      std::to_string(c.feature_width()) + " features");
            } else {
                s.get("input");
            }
            s.finish();
            c.autoencoder = ac;
        }
    }
    top.finish();
    c.validate();
    return c;
}

/// Line number (1-based) of byte offset `pos` in `text`.
inline std::size_t line_of(const std::string& text, std::size_t pos) {
    std::size_t line = 1;
    for (std::size_t i = 0; i < pos && i < text.size(); ++i)
        if (text[i] == '\n') ++line;
    return line;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error at line " + std::to_string(line_of(text, e.byte)) + ": " + e.what());
    }
    return parse_config_json(root);
}

inline ExperimentConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace koopdict
