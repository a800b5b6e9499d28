#pragma once

// Strict JSON experiment specs. Unknown keys and wrongly typed values are
// rejected with the offending JSON path.
//
// {
//   "name": "sweep", "seed": 0, "out": "out", "workers": 0,
//   "model": {"m": 8, "d": 6, "d_qk": 4, "d1": 64, "n": 4, "p": 4, "beta": 1,
//             "activation": "relu" | "smoothed", "tau": 0.05},
//   "data":  {"kind": "synthetic", "realizable": false, "noise": 0, "x_std": 1, "y_std": 1}
//          | {"kind": "csv", "path": "...", "features": [...], "targets": [...],
//             "window": 8, "horizon": 1, "stride": 1, "normalize": "zscore" | "none", "cap": 4},
//   "train": {"steps": 2000, "mu": 0.001 | "theory" | "practical", "record_every": 1,
//             "init": {"kind": "lecun" | "gaussian" | "explicit", "uniform_attention": false,
//                      "gammas": {"w1": 1, ...}, "params": {"w1": [[...]], ...}}},
//   "sweep": {"axis": "beta" | "logit_scale" | "none", "values": [...]},
//   "grad_check": {"configs": 20, "tol": 1e-5, "step": 1e-5, "activation": "relu", "tau": 0.05}
// }
//
// Relative CSV paths are resolved against the spec file's directory.

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>  // nlohmann::json, vendored

#include "tfconv/harness.hpp"

namespace tfconv {

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

using nlohmann::json;

inline void require_object(const json& j, const std::string& path, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw SpecError(path + ": expected an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw SpecError(path + ": unknown key '" + k + "'");
}

inline double get_real(const json& j, const std::string& path) {
    if (!j.is_number()) throw SpecError(path + ": expected a number");
    return j.get<double>();
}

inline std::size_t get_size(const json& j, const std::string& path) {
    if (!j.is_number_integer() || j.get<long long>() < 0) throw SpecError(path + ": expected a non-negative integer");
    return j.get<std::size_t>();
}

inline bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) throw SpecError(path + ": expected true or false");
    return j.get<bool>();
}

inline std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) throw SpecError(path + ": expected a string");
    return j.get<std::string>();
}

inline std::vector<std::string> get_strings(const json& j, const std::string& path) {
    if (!j.is_array()) throw SpecError(path + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t k = 0; k < j.size(); ++k) out.push_back(get_string(j[k], path + "[" + std::to_string(k) + "]"));
    return out;
}

inline Activation parse_activation(const json& j, const std::string& path, double tau) {
    const std::string s = get_string(j, path);
    if (s == "relu") return Activation::relu();
    if (s == "smoothed") return Activation::smoothed(tau);
    throw SpecError(path + ": expected \"relu\" or \"smoothed\", got \"" + s + "\"");
}

inline Matrix<double> parse_matrix(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty())
        throw SpecError(path + ": expected a non-empty array of rows");
    const std::size_t cols = j[0].size();
    Matrix<double> m(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string rp = path + "[" + std::to_string(i) + "]";
        if (!j[i].is_array() || j[i].size() != cols) throw SpecError(rp + ": ragged row");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = get_real(j[i][c], rp + "[" + std::to_string(c) + "]");
    }
    return m;
}

inline ModelConfig parse_model(const json& j, const std::string& path) {
    require_object(j, path, {"m", "d", "d_qk", "d1", "n", "p", "beta", "activation", "tau"});
    ModelConfig c;
    if (j.contains("m")) c.m = get_size(j["m"], path + ".m");
    if (j.contains("d")) c.d = get_size(j["d"], path + ".d");
    if (j.contains("d_qk")) c.d_qk = get_size(j["d_qk"], path + ".d_qk");
    if (j.contains("d1")) c.d1 = get_size(j["d1"], path + ".d1");
    if (j.contains("n")) c.n = get_size(j["n"], path + ".n");
    if (j.contains("p")) c.p = get_size(j["p"], path + ".p");
    if (j.contains("beta")) c.beta = get_real(j["beta"], path + ".beta");
    const double tau = j.contains("tau") ? get_real(j["tau"], path + ".tau") : 0.05;
    c.activation.tau = tau;
    if (j.contains("activation")) c.activation = parse_activation(j["activation"], path + ".activation", tau);
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw SpecError(path + ": " + e.what());
    }
    return c;
}

inline DataSource parse_data(const json& j, const std::string& path, const ModelConfig& model,
                             const std::filesystem::path& base) {
    if (!j.is_object()) throw SpecError(path + ": expected an object");
    const std::string kind = j.contains("kind") ? get_string(j["kind"], path + ".kind") : "synthetic";
    DataSource d;
    if (kind == "synthetic") {
        require_object(j, path, {"kind", "realizable", "noise", "x_std", "y_std"});
        if (j.contains("realizable")) d.synthetic.realizable = get_bool(j["realizable"], path + ".realizable");
        if (j.contains("noise")) d.synthetic.noise = get_real(j["noise"], path + ".noise");
        if (j.contains("x_std")) d.synthetic.x_std = get_real(j["x_std"], path + ".x_std");
        if (j.contains("y_std")) d.synthetic.y_std = get_real(j["y_std"], path + ".y_std");
        if (!(d.synthetic.noise >= 0.0 && d.synthetic.x_std > 0.0 && d.synthetic.y_std > 0.0))
            throw SpecError(path + ": noise must be >= 0 and x_std, y_std > 0");
    } else if (kind == "csv") {
        require_object(j, path, {"kind", "path", "features", "targets", "window", "horizon", "stride", "normalize", "cap"});
        d.kind = DataSource::Kind::csv;
        auto& c = d.csv;
        if (!j.contains("path")) throw SpecError(path + ".path: required for csv data");
        std::filesystem::path p = get_string(j["path"], path + ".path");
        c.path = (p.is_relative() ? base / p : p).lexically_normal().string();
        if (!j.contains("features")) throw SpecError(path + ".features: required for csv data");
        c.features = get_strings(j["features"], path + ".features");
        c.targets = j.contains("targets") ? get_strings(j["targets"], path + ".targets") : c.features;
        c.window = j.contains("window") ? get_size(j["window"], path + ".window") : model.m;
        if (j.contains("horizon")) c.horizon = get_size(j["horizon"], path + ".horizon");
        if (j.contains("stride")) c.stride = get_size(j["stride"], path + ".stride");
        if (j.contains("cap")) c.cap = get_size(j["cap"], path + ".cap");
        if (j.contains("normalize")) {
            const std::string n = get_string(j["normalize"], path + ".normalize");
            if (n != "zscore" && n != "none") throw SpecError(path + ".normalize: expected \"zscore\" or \"none\"");
            c.zscore = n == "zscore";
        }
        if (c.window < 1 || c.horizon < 1 || c.stride < 1)
            throw SpecError(path + ": window, horizon and stride must be >= 1");
        if (c.features.empty() || c.targets.empty()) throw SpecError(path + ": column lists must be non-empty");
    } else {
        throw SpecError(path + ".kind: expected \"synthetic\" or \"csv\", got \"" + kind + "\"");
    }
    return d;
}

inline InitScheme parse_init(const json& j, const std::string& path, const ModelConfig& model) {
    require_object(j, path, {"kind", "uniform_attention", "gammas", "params"});
    InitScheme s;
    const std::string kind = j.contains("kind") ? get_string(j["kind"], path + ".kind") : "lecun";
    if (kind == "lecun") {
        s.kind = InitScheme::Kind::lecun;
    } else if (kind == "gaussian") {
        s.kind = InitScheme::Kind::gaussian_per_matrix;
        if (!j.contains("gammas")) throw SpecError(path + ".gammas: required for gaussian init");
        const json& g = j["gammas"];
        require_object(g, path + ".gammas", {"w1", "w2", "wq", "wk", "wv", "wu"});
        for (WeightId id : kWeightIds) {
            const std::string name(weight_name(id));
            if (!g.contains(name)) throw SpecError(path + ".gammas." + name + ": missing");
            s.gammas[static_cast<std::size_t>(id)] = get_real(g[name], path + ".gammas." + name);
        }
    } else if (kind == "explicit") {
        s.kind = InitScheme::Kind::explicit_params;
        if (!j.contains("params")) throw SpecError(path + ".params: required for explicit init");
        const json& pj = j["params"];
        require_object(pj, path + ".params", {"w1", "w2", "wq", "wk", "wv", "wu"});
        Params<double> w = Params<double>::zeros(model);
        for (WeightId id : kWeightIds) {
            const std::string name(weight_name(id));
            if (!pj.contains(name)) throw SpecError(path + ".params." + name + ": missing");
            w[id] = parse_matrix(pj[name], path + ".params." + name);
        }
        s.params = std::move(w);
    } else {
        throw SpecError(path + ".kind: expected \"lecun\", \"gaussian\" or \"explicit\", got \"" + kind + "\"");
    }
    if (kind != "gaussian" && j.contains("gammas")) throw SpecError(path + ".gammas: only valid for gaussian init");
    if (kind != "explicit" && j.contains("params")) throw SpecError(path + ".params: only valid for explicit init");
    if (j.contains("uniform_attention")) s.uniform_attention = get_bool(j["uniform_attention"], path + ".uniform_attention");
    try {
        s.validate(model);
    } catch (const std::invalid_argument& e) {
        throw SpecError(path + ": " + e.what());
    }
    return s;
}

inline TrainSpec parse_train(const json& j, const std::string& path, const ModelConfig& model) {
    require_object(j, path, {"steps", "mu", "record_every", "init"});
    TrainSpec t;
    if (j.contains("steps")) t.steps = get_size(j["steps"], path + ".steps");
    if (j.contains("record_every")) t.record_every = get_size(j["record_every"], path + ".record_every");
    if (j.contains("mu")) {
        const json& m = j["mu"];
        if (m.is_string()) {
            const std::string s = m.get<std::string>();
            if (s == "theory")
                t.mu = LearningRate::theory();
            else if (s == "practical")
                t.mu = LearningRate::practical();
            else
                throw SpecError(path + ".mu: expected a number, \"theory\" or \"practical\", got \"" + s + "\"");
        } else {
            t.mu = LearningRate::fixed(get_real(m, path + ".mu"));
        }
    }
    if (j.contains("init")) t.init = parse_init(j["init"], path + ".init", model);
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        throw SpecError(path + ": " + e.what());
    }
    return t;
}

inline SweepAxis parse_sweep(const json& j, const std::string& path) {
    require_object(j, path, {"axis", "values"});
    SweepAxis s;
    const std::string axis = j.contains("axis") ? get_string(j["axis"], path + ".axis") : "none";
    if (axis == "beta")
        s.kind = SweepAxis::Kind::beta;
    else if (axis == "logit_scale")
        s.kind = SweepAxis::Kind::logit_scale;
    else if (axis != "none")
        throw SpecError(path + ".axis: expected \"beta\", \"logit_scale\" or \"none\", got \"" + axis + "\"");
    if (j.contains("values")) {
        if (!j["values"].is_array()) throw SpecError(path + ".values: expected an array of numbers");
        for (std::size_t k = 0; k < j["values"].size(); ++k)
            s.values.push_back(get_real(j["values"][k], path + ".values[" + std::to_string(k) + "]"));
    }
    return s;
}

inline GradCheckSpec parse_grad_check(const json& j, const std::string& path) {
    require_object(j, path, {"configs", "tol", "step", "activation", "tau"});
    GradCheckSpec g;
    if (j.contains("configs")) g.configs = get_size(j["configs"], path + ".configs");
    if (j.contains("tol")) g.tol = get_real(j["tol"], path + ".tol");
    if (j.contains("step")) g.step = get_real(j["step"], path + ".step");
    const double tau = j.contains("tau") ? get_real(j["tau"], path + ".tau") : 0.05;
    if (j.contains("activation")) g.activation = parse_activation(j["activation"], path + ".activation", tau);
    if (g.configs < 1) throw SpecError(path + ".configs: must be >= 1");
    if (!(g.tol > 0.0)) throw SpecError(path + ".tol: must be > 0");
    if (!(g.step >= 1e-8 && g.step <= 1e-3)) throw SpecError(path + ".step: must lie in [1e-8, 1e-3]");
    return g;
}

}  // namespace detail

/// Parses a spec document. `base` is the directory relative CSV paths are
/// resolved against.
inline ExperimentSpec parse_spec(const nlohmann::json& j, const std::filesystem::path& base = ".") {
    using detail::get_size;
    using detail::get_string;
    detail::require_object(j, "$", {"name", "seed", "out", "workers", "model", "data", "train", "sweep", "grad_check"});
    ExperimentSpec s;
    if (j.contains("name")) s.name = get_string(j["name"], "$.name");
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0))
            throw SpecError("$.seed: expected an unsigned 64-bit integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("out")) s.out_dir = get_string(j["out"], "$.out");
    if (j.contains("workers")) s.workers = get_size(j["workers"], "$.workers");
    if (j.contains("model")) s.model = detail::parse_model(j["model"], "$.model");
    if (j.contains("data")) s.data = detail::parse_data(j["data"], "$.data", s.model, base);
    if (j.contains("train")) s.train = detail::parse_train(j["train"], "$.train", s.model);
    if (j.contains("sweep")) s.sweep = detail::parse_sweep(j["sweep"], "$.sweep");
    if (j.contains("grad_check")) s.grad_check = detail::parse_grad_check(j["grad_check"], "$.grad_check");
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw SpecError(std::string("$: ") + e.what());
    }
    return s;
}

inline ExperimentSpec parse_spec_text(const std::string& text, const std::filesystem::path& base = ".") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SpecError(std::string("invalid JSON: ") + e.what());
    }
    return parse_spec(j, base);
}

inline ExperimentSpec load_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SpecError(path.string() + ": cannot open spec file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_spec_text(text, path.parent_path().empty() ? "." : path.parent_path());
    } catch (const SpecError& e) {
        throw SpecError(path.string() + ": " + e.what());
    }
}

}  // namespace tfconv
