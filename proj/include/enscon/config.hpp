#pragma once

// Run configuration: a YAML document (key/value with nested maps) or the same
// structure as JSON. A run_meta.json produced by the CLI embeds the full
// effective config under "config" and is accepted back as a config file.

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "enscon/csv.hpp"
#include "enscon/model.hpp"

namespace enscon {

using Json = nlohmann::json;

inline Scheme scheme_from_name(const std::string& name) {
    if (name == "rk4") return Scheme::DeterministicRk4;
    if (name == "em") return Scheme::EulerMaruyama;
    if (name == "sri15") return Scheme::StrongOrder15;
    if (name == "poisson") return Scheme::PoissonExact;
    throw ConfigError("unknown scheme '" + name + "' (expected rk4|em|sri15|poisson)");
}

inline NoiseKind noise_kind_from_name(const std::string& name) {
    if (name == "none") return NoiseKind::None;
    if (name == "brownian") return NoiseKind::Brownian;
    if (name == "poisson") return NoiseKind::Poisson;
    throw ConfigError("unknown noise kind '" + name + "' (expected none|brownian|poisson)");
}

struct RunConfig {
    std::optional<std::string> preset;
    EnsembleSystem system;
    int grid_steps = 0;               // N
    std::vector<int> grid_samples;    // per-dimension P
    std::optional<int> q;
    double max_condition = 1e4;
    int transition_substeps = 1;
    Scheme scheme = Scheme::DeterministicRk4;
    double sim_step = 1e-3;
    int trials = 100;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    bool dump_trajectories = false;
    bool emit_plot_script = true;
    bool no_stats = false;

    TimeGrid time_grid() const { return TimeGrid(grid_steps, system.horizon); }
    ParameterGrid parameter_grid() const {
        return uniform_parameter_grid(system.param_bounds, grid_samples);
    }

    /// Cheap structural checks that must run before any heavy work.
    void validate() const {
        system.validate();
        if (grid_steps < 1) throw ConfigError("grids.steps must be >= 1");
        long P = 1;
        for (int s : grid_samples) {
            if (s < 1) throw ConfigError("grids.samples entries must be >= 1");
            P *= s;
        }
        if (static_cast<long>(system.state_dim) * P >
            static_cast<long>(system.input_dim) * grid_steps)
            throw OverdeterminedGrid(static_cast<int>(system.state_dim * P),
                                     system.input_dim * grid_steps);
        if (q && (*q < 1 || *q > P))
            throw ConfigError("explicit q must satisfy 1 <= q <= P (P = " + std::to_string(P) +
                              ")");
        if (!(max_condition > 1.0)) throw ConfigError("max_condition must exceed 1");
        if (!(sim_step > 0.0)) throw ConfigError("simulation.h must be > 0");
        if (trials < 1) throw ConfigError("simulation.trials must be >= 1");
    }
};

namespace detail {

inline std::vector<std::string> expr_strings(const std::vector<Expr>& entries) {
    std::vector<std::string> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.to_string());
    return out;
}

inline std::vector<std::string> entry_list_from_json(const Json& j, const std::string& key) {
    if (!j.is_array()) throw ConfigError("'" + key + "' must be a list of expression strings");
    std::vector<std::string> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (v.is_string()) out.push_back(v.get<std::string>());
        else if (v.is_number()) out.push_back(format_double(v.get<double>()));
        else throw ConfigError("'" + key + "' entries must be strings or numbers");
    }
    return out;
}

template <typename T>
T require(const Json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

} // namespace detail

inline Json system_to_json(const EnsembleSystem& s) {
    Json j;
    j["n"] = s.state_dim;
    j["m"] = s.input_dim;
    j["k"] = s.noise_dim;
    j["d"] = s.param_dim;
    j["horizon"] = s.horizon;
    j["A"] = detail::expr_strings(s.A.entries());
    j["B"] = detail::expr_strings(s.B.entries());
    j["G"] = detail::expr_strings(s.G.entries());
    j["x0"] = detail::expr_strings(s.x0);
    j["xf"] = detail::expr_strings(s.xf);
    Json noise;
    noise["kind"] = noise_kind_name(s.noise.kind);
    if (s.noise.kind == NoiseKind::Poisson) {
        std::vector<double> lam(s.noise.intensities.data(),
                                s.noise.intensities.data() + s.noise.intensities.size());
        noise["intensities"] = lam;
    }
    j["noise"] = noise;
    Json bounds = Json::array();
    for (const auto& [lo, hi] : s.param_bounds) bounds.push_back({lo, hi});
    j["beta_bounds"] = bounds;
    return j;
}

inline EnsembleSystem system_from_json(const Json& j) {
    EnsembleSystem s;
    s.state_dim = detail::require<int>(j, "n");
    s.input_dim = detail::require<int>(j, "m");
    s.noise_dim = detail::require<int>(j, "k");
    s.param_dim = detail::require<int>(j, "d");
    s.horizon = detail::require<double>(j, "horizon");
    const int d = s.param_dim;
    try {
        s.A = ExprMatrix::parse_entries(s.state_dim, s.state_dim,
                                        detail::entry_list_from_json(j.at("A"), "A"), d);
        s.B = ExprMatrix::parse_entries(s.state_dim, s.input_dim,
                                        detail::entry_list_from_json(j.at("B"), "B"), d);
        s.G = ExprMatrix::parse_entries(s.state_dim, s.noise_dim,
                                        detail::entry_list_from_json(j.at("G"), "G"), d);
        std::vector<Expr> x0, xf;
        for (const auto& src : detail::entry_list_from_json(j.at("x0"), "x0"))
            x0.push_back(parse(src, d));
        for (const auto& src : detail::entry_list_from_json(j.at("xf"), "xf"))
            xf.push_back(parse(src, d));
        s.x0 = std::move(x0);
        s.xf = std::move(xf);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("system matrices: ") + e.what());
    }
    Json noise = j.value("noise", Json::object());
    s.noise.kind = noise_kind_from_name(noise.value("kind", "none"));
    if (s.noise.kind == NoiseKind::Poisson) {
        auto lam = detail::require<std::vector<double>>(noise, "intensities");
        s.noise.intensities = Eigen::Map<const Vec>(lam.data(), static_cast<Eigen::Index>(lam.size()));
    }
    if (!j.contains("beta_bounds")) throw ConfigError("missing required key 'beta_bounds'");
    for (const auto& b : j.at("beta_bounds")) {
        if (!b.is_array() || b.size() != 2)
            throw ConfigError("beta_bounds entries must be [low, high] pairs");
        s.param_bounds.emplace_back(b[0].get<double>(), b[1].get<double>());
    }
    s.validate();
    return s;
}

inline Json config_to_json(const RunConfig& c) {
    Json j;
    if (c.preset) j["preset"] = *c.preset;
    j["system"] = system_to_json(c.system);
    j["grids"] = {{"steps", c.grid_steps}, {"samples", c.grid_samples}};
    Json syn;
    if (c.q) syn["q"] = *c.q;
    syn["max_condition"] = c.max_condition;
    syn["substeps"] = c.transition_substeps;
    j["synthesis"] = syn;
    j["simulation"] = {{"scheme", scheme_name(c.scheme)},
                       {"h", c.sim_step},
                       {"trials", c.trials},
                       {"seed", c.seed}};
    j["outputs"] = {{"dir", c.out_dir},
                    {"trajectories", c.dump_trajectories},
                    {"plot_script", c.emit_plot_script}};
    return j;
}

/// Applies a config document on top of (optionally) a preset: a "preset" key
/// pulls in the built-in system and grids, and any other section overrides it.
inline RunConfig config_from_json(const Json& doc) {
    const Json& j = doc.contains("config") ? doc.at("config") : doc;
    RunConfig c;
    if (j.contains("preset")) {
        const auto name = j.at("preset").get<std::string>();
        Preset p = builtin_example(name);
        c.preset = name;
        c.system = std::move(p.system);
        c.grid_steps = p.tgrid.steps;
        c.grid_samples = {p.pgrid.count()}; // presets are one-dimensional
        c.q = p.recommended_q;
        c.scheme = p.sim.scheme;
        c.sim_step = p.sim.step;
        c.trials = p.sim.trials;
    }
    if (j.contains("system")) c.system = system_from_json(j.at("system"));
    else if (!c.preset) throw ConfigError("config needs either 'preset' or 'system'");

    if (j.contains("grids")) {
        const Json& g = j.at("grids");
        if (g.contains("steps")) c.grid_steps = g.at("steps").get<int>();
        if (g.contains("samples")) {
            if (g.at("samples").is_array())
                c.grid_samples = g.at("samples").get<std::vector<int>>();
            else c.grid_samples = {g.at("samples").get<int>()};
        }
    }
    if (c.grid_steps == 0) throw ConfigError("grids.steps is required");
    if (c.grid_samples.empty()) throw ConfigError("grids.samples is required");

    if (j.contains("synthesis")) {
        const Json& s = j.at("synthesis");
        if (s.contains("q") && !s.at("q").is_null()) c.q = s.at("q").get<int>();
        if (s.contains("max_condition")) c.max_condition = s.at("max_condition").get<double>();
        if (s.contains("substeps")) c.transition_substeps = s.at("substeps").get<int>();
    }
    if (j.contains("simulation")) {
        const Json& s = j.at("simulation");
        if (s.contains("scheme")) c.scheme = scheme_from_name(s.at("scheme").get<std::string>());
        if (s.contains("h")) c.sim_step = s.at("h").get<double>();
        if (s.contains("trials")) c.trials = s.at("trials").get<int>();
        if (s.contains("seed")) c.seed = s.at("seed").get<std::uint64_t>();
    }
    if (j.contains("outputs")) {
        const Json& o = j.at("outputs");
        if (o.contains("dir")) c.out_dir = o.at("dir").get<std::string>();
        if (o.contains("trajectories")) c.dump_trajectories = o.at("trajectories").get<bool>();
        if (o.contains("plot_script")) c.emit_plot_script = o.at("plot_script").get<bool>();
    }
    c.validate();
    return c;
}

namespace detail {

inline Json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
    case YAML::NodeType::Null: return nullptr;
    case YAML::NodeType::Scalar: {
        const std::string& s = node.Scalar();
        if (node.Tag() != "?") return s; // quoted scalars stay strings
        if (s == "true") return true;
        if (s == "false") return false;
        if (s == "null" || s == "~") return nullptr;
        long long ll = 0;
        auto ri = std::from_chars(s.data(), s.data() + s.size(), ll);
        if (ri.ec == std::errc{} && ri.ptr == s.data() + s.size()) return ll;
        double d = 0.0;
        auto rd = std::from_chars(s.data(), s.data() + s.size(), d);
        if (rd.ec == std::errc{} && rd.ptr == s.data() + s.size()) return d;
        return s;
    }
    case YAML::NodeType::Sequence: {
        Json arr = Json::array();
        for (const auto& item : node) arr.push_back(yaml_to_json(item));
        return arr;
    }
    case YAML::NodeType::Map: {
        Json obj = Json::object();
        for (const auto& kv : node) obj[kv.first.as<std::string>()] = yaml_to_json(kv.second);
        return obj;
    }
    default: return nullptr;
    }
}

inline void yaml_quote(const std::string& s, std::ostream& os) {
    os << '"';
    for (char ch : s) {
        if (ch == '"' || ch == '\\') os << '\\';
        os << ch;
    }
    os << '"';
}

inline bool all_scalars(const Json& arr) {
    for (const auto& v : arr)
        if (v.is_object() || (v.is_array() && !all_scalars(v))) return false;
    return true;
}

inline void dump_yaml_value(const Json& j, std::ostream& os, int indent);

inline void dump_yaml_scalar(const Json& j, std::ostream& os) {
    if (j.is_string()) yaml_quote(j.get<std::string>(), os);
    else if (j.is_boolean()) os << (j.get<bool>() ? "true" : "false");
    else if (j.is_number_float()) os << format_double(j.get<double>());
    else if (j.is_null()) os << "null";
    else os << j.dump();
}

inline void dump_yaml_inline(const Json& j, std::ostream& os) {
    if (j.is_array()) {
        os << '[';
        bool first = true;
        for (const auto& v : j) {
            if (!first) os << ", ";
            first = false;
            dump_yaml_inline(v, os);
        }
        os << ']';
    } else {
        dump_yaml_scalar(j, os);
    }
}

inline void dump_yaml_value(const Json& j, std::ostream& os, int indent) {
    const std::string pad(static_cast<std::size_t>(indent), ' ');
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            os << pad << it.key() << ':';
            const Json& v = it.value();
            if (v.is_object() || (v.is_array() && !all_scalars(v))) {
                os << '\n';
                dump_yaml_value(v, os, indent + 2);
            } else if (v.is_array()) {
                os << ' ';
                dump_yaml_inline(v, os);
                os << '\n';
            } else {
                os << ' ';
                dump_yaml_scalar(v, os);
                os << '\n';
            }
        }
    } else if (j.is_array()) {
        for (const auto& v : j) {
            os << pad << "- ";
            dump_yaml_inline(v, os);
            os << '\n';
        }
    } else {
        os << pad;
        dump_yaml_scalar(j, os);
        os << '\n';
    }
}

} // namespace detail

inline std::string config_to_yaml(const RunConfig& c) {
    std::ostringstream os;
    detail::dump_yaml_value(config_to_json(c), os, 0);
    return os.str();
}

/// Loads a YAML or JSON config; *.json parses as JSON, anything else as YAML.
/// A run_meta.json document is accepted directly (its "config" object wins).
inline RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    Json doc;
    if (path.extension() == ".json") {
        try {
            doc = Json::parse(text);
        } catch (const Json::exception& e) {
            throw ConfigError("invalid JSON in '" + path.string() + "': " + e.what());
        }
    } else {
        try {
            doc = detail::yaml_to_json(YAML::Load(text));
        } catch (const YAML::Exception& e) {
            throw ConfigError("invalid YAML in '" + path.string() + "': " + e.what());
        }
    }
    if (!doc.is_object()) throw ConfigError("config root must be a mapping");
    return config_from_json(doc);
}

} // namespace enscon
