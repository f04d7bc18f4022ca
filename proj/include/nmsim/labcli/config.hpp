#pragma once

/// Experiment configuration: JSON in, fully populated echo out.

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nmsim/error.hpp"

namespace nmsim::labcli {

inline constexpr const char* kVersion = "0.1.0";

enum class Model { AtomCavity, LinearOptomech, QuadraticOptomech };
enum class Run { Sse, Sme, Compare, Converge, Ensemble, Markovian, PhononFixture };

inline const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names{"atom_cavity", "linear_optomech", "quadratic_optomech"};
    return names;
}

inline const std::vector<std::string>& run_names() {
    static const std::vector<std::string> names{"sse",      "sme",       "compare",       "converge",
                                                "ensemble", "markovian", "phonon_fixture"};
    return names;
}

inline std::string to_string(Model m) { return model_names()[static_cast<std::size_t>(m)]; }
inline std::string to_string(Run r) { return run_names()[static_cast<std::size_t>(r)]; }

inline Model parse_model(const std::string& s, const std::string& field = "model") {
    for (std::size_t i = 0; i < model_names().size(); ++i)
        if (model_names()[i] == s) return static_cast<Model>(i);
    throw ConfigError(field, "unknown model '" + s + "'");
}

inline Run parse_run(const std::string& s, const std::string& field = "run") {
    for (std::size_t i = 0; i < run_names().size(); ++i)
        if (run_names()[i] == s) return static_cast<Run>(i);
    throw ConfigError(field, "unknown run '" + s + "'");
}

struct Physics {
    double omega_q = 1.0;
    double omega_m = 1.0;
    double detuning = 1.0;
    double gamma = 2.0;
    double g = 1.0;
    double mass = 1.0;
};

struct Numerics {
    double dt = 1e-3;
    double t_final = 10.0;
    int n_cavity = 16;
    int n_mech = 10;
    int sample_stride = 100;
};

/// Initial plant state. Atom: plus_x, excited, ground. Oscillators: fock (n),
/// coherent (alpha, real), fock_superposition ((|0> + |n>)/√2).
struct PlantState {
    std::string kind = "plus_x";
    double alpha = 1.0;
    int n = 0;
};

struct ExperimentConfig {
    Model model = Model::AtomCavity;
    Run run = Run::Compare;
    std::uint64_t seed = 42;
    unsigned threads = 1;
    Physics physics;
    Numerics numerics;
    PlantState plant_state;
    int n_traj = 2000;
    std::vector<int> n_cavity_list{2, 4, 8, 16};

    std::size_t n_steps() const { return static_cast<std::size_t>(std::llround(numerics.t_final / numerics.dt)); }
};

/// Model-dependent defaults, applied before the file's values.
inline ExperimentConfig defaults_for(Model m) {
    ExperimentConfig c;
    c.model = m;
    switch (m) {
        case Model::AtomCavity:
            break;
        case Model::LinearOptomech:
            c.physics.g = 0.05;
            c.plant_state = {"coherent", 1.0, 0};
            break;
        case Model::QuadraticOptomech:
            c.physics.omega_m = 10.0;
            c.physics.detuning = 0.0;
            c.physics.gamma = 1.0;
            c.physics.g = 0.1;
            c.numerics.n_cavity = 4;
            c.plant_state = {"fock_superposition", 1.0, 2};
            break;
    }
    return c;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
    if (!obj.is_object()) throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError(prefix.empty() ? it.key() : prefix + "." + it.key(), "unknown key");
}

template <class T>
void read(const nlohmann::json& obj, const char* key, T& out, const std::string& field) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(field, "wrong type");
    }
}

inline void require_finite(double v, const std::string& field) {
    if (!std::isfinite(v)) throw ConfigError(field, "must be finite");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
    const Physics& p = c.physics;
    for (auto [v, f] : {std::pair{p.omega_q, "physics.omega_q"}, std::pair{p.omega_m, "physics.omega_m"},
                        std::pair{p.detuning, "physics.detuning"}, std::pair{p.gamma, "physics.gamma"},
                        std::pair{p.g, "physics.g"}, std::pair{p.mass, "physics.mass"}})
        detail::require_finite(v, f);
    if (p.gamma < 0.0) throw ConfigError("physics.gamma", "must be >= 0");
    if (!(p.mass > 0.0)) throw ConfigError("physics.mass", "must be > 0");
    if (!(p.omega_m > 0.0)) throw ConfigError("physics.omega_m", "must be > 0");
    const Numerics& n = c.numerics;
    if (!(n.dt > 0.0) || !std::isfinite(n.dt)) throw ConfigError("numerics.dt", "must be > 0");
    if (!(n.t_final >= n.dt) || !std::isfinite(n.t_final)) throw ConfigError("numerics.t_final", "must be >= dt");
    if (n.n_cavity < 2) throw ConfigError("numerics.n_cavity", "must be >= 2");
    if (n.n_mech < 2) throw ConfigError("numerics.n_mech", "must be >= 2");
    if (n.sample_stride < 1) throw ConfigError("numerics.sample_stride", "must be >= 1");
    if (c.n_traj < 1) throw ConfigError("ensemble.n_traj", "must be >= 1");
    if (c.n_cavity_list.empty()) throw ConfigError("converge.n_cavity_list", "must not be empty");
    for (int v : c.n_cavity_list)
        if (v < 2) throw ConfigError("converge.n_cavity_list", "entries must be >= 2");

    const std::string& k = c.plant_state.kind;
    if (c.model == Model::AtomCavity) {
        if (k != "plus_x" && k != "excited" && k != "ground")
            throw ConfigError("plant_state.kind", "atom states are plus_x, excited, ground");
    } else {
        if (k != "fock" && k != "coherent" && k != "fock_superposition")
            throw ConfigError("plant_state.kind", "oscillator states are fock, coherent, fock_superposition");
        if (c.plant_state.n < 0 || c.plant_state.n >= n.n_mech)
            throw ConfigError("plant_state.n", "must lie in [0, n_mech)");
        detail::require_finite(c.plant_state.alpha, "plant_state.alpha");
    }
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using detail::read;
    detail::reject_unknown(j, {"model", "run", "seed", "threads", "physics", "numerics", "plant_state", "ensemble",
                               "converge"},
                           "");
    std::string model = "atom_cavity";
    read(j, "model", model, "model");
    ExperimentConfig c = defaults_for(parse_model(model));
    if (j.contains("run")) {
        std::string run;
        read(j, "run", run, "run");
        c.run = parse_run(run);
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "must be a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("threads")) {
        if (!j["threads"].is_number_unsigned()) throw ConfigError("threads", "must be a non-negative integer");
        c.threads = j["threads"].get<unsigned>();
    }
    if (j.contains("physics")) {
        const auto& p = j["physics"];
        detail::reject_unknown(p, {"omega_q", "omega_m", "detuning", "gamma", "g", "mass"}, "physics");
        read(p, "omega_q", c.physics.omega_q, "physics.omega_q");
        read(p, "omega_m", c.physics.omega_m, "physics.omega_m");
        read(p, "detuning", c.physics.detuning, "physics.detuning");
        read(p, "gamma", c.physics.gamma, "physics.gamma");
        read(p, "g", c.physics.g, "physics.g");
        read(p, "mass", c.physics.mass, "physics.mass");
    }
    if (j.contains("numerics")) {
        const auto& n = j["numerics"];
        detail::reject_unknown(n, {"dt", "t_final", "n_cavity", "n_mech", "sample_stride"}, "numerics");
        read(n, "dt", c.numerics.dt, "numerics.dt");
        read(n, "t_final", c.numerics.t_final, "numerics.t_final");
        read(n, "n_cavity", c.numerics.n_cavity, "numerics.n_cavity");
        read(n, "n_mech", c.numerics.n_mech, "numerics.n_mech");
        read(n, "sample_stride", c.numerics.sample_stride, "numerics.sample_stride");
    }
    if (j.contains("plant_state")) {
        const auto& s = j["plant_state"];
        detail::reject_unknown(s, {"kind", "alpha", "n"}, "plant_state");
        read(s, "kind", c.plant_state.kind, "plant_state.kind");
        read(s, "alpha", c.plant_state.alpha, "plant_state.alpha");
        read(s, "n", c.plant_state.n, "plant_state.n");
    }
    if (j.contains("ensemble")) {
        detail::reject_unknown(j["ensemble"], {"n_traj"}, "ensemble");
        read(j["ensemble"], "n_traj", c.n_traj, "ensemble.n_traj");
    }
    if (j.contains("converge")) {
        detail::reject_unknown(j["converge"], {"n_cavity_list"}, "converge");
        read(j["converge"], "n_cavity_list", c.n_cavity_list, "converge.n_cavity_list");
    }
    validate(c);
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<file>", std::string("JSON parse error: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

/// Full echo, every default included; parse_config(to_json(c)) reproduces c.
inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = to_string(c.model);
    j["run"] = to_string(c.run);
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["physics"] = {{"omega_q", c.physics.omega_q}, {"omega_m", c.physics.omega_m},
                    {"detuning", c.physics.detuning}, {"gamma", c.physics.gamma},
                    {"g", c.physics.g},               {"mass", c.physics.mass}};
    j["numerics"] = {{"dt", c.numerics.dt},
                     {"t_final", c.numerics.t_final},
                     {"n_cavity", c.numerics.n_cavity},
                     {"n_mech", c.numerics.n_mech},
                     {"sample_stride", c.numerics.sample_stride}};
    j["plant_state"] = {{"kind", c.plant_state.kind}, {"alpha", c.plant_state.alpha}, {"n", c.plant_state.n}};
    j["ensemble"] = {{"n_traj", c.n_traj}};
    j["converge"] = {{"n_cavity_list", c.n_cavity_list}};
    return j;
}

inline bool operator==(const Physics& a, const Physics& b) {
    return a.omega_q == b.omega_q && a.omega_m == b.omega_m && a.detuning == b.detuning && a.gamma == b.gamma &&
           a.g == b.g && a.mass == b.mass;
}
inline bool operator==(const Numerics& a, const Numerics& b) {
    return a.dt == b.dt && a.t_final == b.t_final && a.n_cavity == b.n_cavity && a.n_mech == b.n_mech &&
           a.sample_stride == b.sample_stride;
}
inline bool operator==(const PlantState& a, const PlantState& b) {
    return a.kind == b.kind && a.alpha == b.alpha && a.n == b.n;
}
inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    return a.model == b.model && a.run == b.run && a.seed == b.seed && a.threads == b.threads &&
           a.physics == b.physics && a.numerics == b.numerics && a.plant_state == b.plant_state &&
           a.n_traj == b.n_traj && a.n_cavity_list == b.n_cavity_list;
}

}  // namespace nmsim::labcli
