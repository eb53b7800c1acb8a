// Copyright 2026 The Graybox Control Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Run profiles and the end-to-end commands behind the command-line tool.
//
// A run directory holds, for one profile:
//   profile.json  manifest.json  train.jsonl  test.jsonl
//   model.gbx.json  curves.csv  summary.json
//   control_<gate>_<optimizer>.json  fidelity.csv  evaluation.json
// `cmd_report` accepts either one run directory or a directory of them.

#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gbx/control.hpp"
#include "gbx/training.hpp"
#include "json.hpp"

namespace gbx {

namespace fs = std::filesystem;

inline constexpr const char* kProfileFile = "profile.json";
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kTrainFile = "train.jsonl";
inline constexpr const char* kTestFile = "test.jsonl";
inline constexpr const char* kModelFile = "model.gbx.json";
inline constexpr const char* kCurvesFile = "curves.csv";
inline constexpr const char* kSummaryFile = "summary.json";
inline constexpr const char* kFidelityFile = "fidelity.csv";
inline constexpr const char* kEvaluationFile = "evaluation.json";

struct Profile {
    std::string name = "custom";
    std::uint64_t seed = 1;
    DatasetConfig data;
    std::size_t train_size = 1000;
    std::size_t test_size = 200;
    std::vector<int> hidden{32, 32};
    TrainOptions training;
    std::vector<std::string> gates = gate_names();
    std::string optimizer = "gd";  // gd, ga or both
    GdOptions gd;
    GaOptions ga;

    ModelConfig model_config() const { return model_config_for(data, hidden); }

    std::vector<std::string> optimizers() const {
        if (optimizer == "both") return {"gd", "ga"};
        return {optimizer};
    }

    void validate() const {
        data.validate();
        model_config().validate();
        if (train_size == 0) throw ConfigError("profile needs at least one training example");
        if (optimizer != "gd" && optimizer != "ga" && optimizer != "both") {
            throw ConfigError("optimizer must be gd, ga or both");
        }
        for (const auto& g : gates) {
            try {
                gate_target(g);
            } catch (const UsageError& e) {
                throw ConfigError(e.what());
            }
        }
    }
};

inline nlohmann::ordered_json to_json(const Profile& p) {
    nlohmann::ordered_json j;
    j["name"] = p.name;
    j["seed"] = p.seed;
    j["data"] = to_json(p.data);
    j["train_size"] = p.train_size;
    j["test_size"] = p.test_size;
    j["model"] = {{"hidden", p.hidden}};
    j["training"] = {{"lr", p.training.lr},
                     {"batch", p.training.batch},
                     {"iterations", p.training.iterations},
                     {"eval_every", p.training.eval_every}};
    nlohmann::ordered_json ctl;
    ctl["gates"] = p.gates;
    ctl["optimizer"] = p.optimizer;
    ctl["gd"] = {{"lr", p.gd.lr},
                 {"iterations", p.gd.iterations},
                 {"restarts", p.gd.restarts},
                 {"optimize_centers", p.gd.optimize_centers}};
    ctl["ga"] = {{"population", p.ga.population},       {"generations", p.ga.generations},
                 {"tournament", p.ga.tournament},       {"elitism", p.ga.elitism},
                 {"mutation_scale", p.ga.mutation_scale}, {"mutation_decay", p.ga.mutation_decay},
                 {"mutation_rate", p.ga.mutation_rate}};
    j["control"] = ctl;
    return j;
}

/// Missing keys keep their defaults, so a profile file may override only a
/// few fields.
inline Profile profile_from_json(const nlohmann::ordered_json& j) {
    Profile p;
    try {
        p.name = j.value("name", p.name);
        p.seed = j.value("seed", p.seed);
        if (j.contains("data")) {
            const auto& d = j.at("data");
            if (d.contains("lab")) p.data.lab = lab_config_from_json(d.at("lab"));
            if (d.contains("pulses")) p.data.pulses = pulse_constraints_from_json(d.at("pulses"));
            if (d.contains("shots") && !d.at("shots").is_null()) p.data.shots = d.at("shots").get<int>();
        }
        p.train_size = j.value("train_size", p.train_size);
        p.test_size = j.value("test_size", p.test_size);
        if (j.contains("model")) p.hidden = j.at("model").value("hidden", p.hidden);
        if (j.contains("training")) {
            const auto& t = j.at("training");
            p.training.lr = t.value("lr", p.training.lr);
            p.training.batch = t.value("batch", p.training.batch);
            p.training.iterations = t.value("iterations", p.training.iterations);
            p.training.eval_every = t.value("eval_every", p.training.eval_every);
        }
        if (j.contains("control")) {
            const auto& c = j.at("control");
            p.gates = c.value("gates", p.gates);
            p.optimizer = c.value("optimizer", p.optimizer);
            if (c.contains("gd")) {
                const auto& g = c.at("gd");
                p.gd.lr = g.value("lr", p.gd.lr);
                p.gd.iterations = g.value("iterations", p.gd.iterations);
                p.gd.restarts = g.value("restarts", p.gd.restarts);
                p.gd.optimize_centers = g.value("optimize_centers", p.gd.optimize_centers);
            }
            if (c.contains("ga")) {
                const auto& g = c.at("ga");
                p.ga.population = g.value("population", p.ga.population);
                p.ga.generations = g.value("generations", p.ga.generations);
                p.ga.tournament = g.value("tournament", p.ga.tournament);
                p.ga.elitism = g.value("elitism", p.ga.elitism);
                p.ga.mutation_scale = g.value("mutation_scale", p.ga.mutation_scale);
                p.ga.mutation_decay = g.value("mutation_decay", p.ga.mutation_decay);
                p.ga.mutation_rate = g.value("mutation_rate", p.ga.mutation_rate);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad profile: ") + e.what());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Built-in profiles
//
//   <bath>-<single|multi>-<512|1024|inf>[-v<V>][-amax<A>][-paper]
//   closed-system, toy, smoke

namespace detail {

inline std::vector<std::string> split_dash(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == '-') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::optional<double> parse_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size() || !std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

inline Profile closed_system_profile(const std::string& name) {
    Profile p;
    p.name = name;
    p.data.lab = LabConfig::fermionic_default();
    p.data.lab.coupling = 0.0;
    p.data.pulses.axes = {ControlAxis::x, ControlAxis::y};
    return p;
}

}  // namespace detail

inline std::optional<Profile> builtin_profile(const std::string& name) {
    if (name == "closed-system") return detail::closed_system_profile(name);
    if (name == "toy") {
        // Closed system with a tight amplitude bound: a small, fast control problem.
        Profile p = detail::closed_system_profile(name);
        p.data.pulses.amp_max = 5.0;
        p.train_size = 200;
        p.test_size = 50;
        p.hidden = {8, 8};
        p.training.iterations = 300;
        p.optimizer = "both";
        return p;
    }
    if (name == "smoke") {
        Profile p = detail::closed_system_profile(name);
        p.train_size = 32;
        p.test_size = 8;
        p.hidden = {4, 4};
        p.training.iterations = 20;
        p.training.batch = 16;
        p.training.eval_every = 5;
        p.gd.iterations = 20;
        p.gd.restarts = 2;
        p.ga.population = 6;
        p.ga.generations = 3;
        return p;
    }

    const auto t = detail::split_dash(name);
    if (t.size() < 3) return std::nullopt;
    Profile p;
    p.name = name;
    if (t[0] == "fermionic") p.data.lab = LabConfig::fermionic_default();
    else if (t[0] == "bosonic") p.data.lab = LabConfig::bosonic_default();
    else return std::nullopt;
    if (t[1] == "single") p.data.pulses.axes = {ControlAxis::x};
    else if (t[1] == "multi") p.data.pulses.axes = {ControlAxis::x, ControlAxis::y};
    else return std::nullopt;
    if (t[2] == "512") p.data.shots = 512;
    else if (t[2] == "1024") p.data.shots = 1024;
    else if (t[2] != "inf") return std::nullopt;

    bool seen_v = false, seen_amax = false, seen_paper = false;
    for (std::size_t i = 3; i < t.size(); ++i) {
        const std::string& tok = t[i];
        if (tok == "paper" && !seen_paper) {
            seen_paper = true;
            p.data.lab.steps = 1024;
            p.train_size = 9000;
            p.test_size = 1000;
            p.hidden = {100, 100};
        } else if (tok.rfind("amax", 0) == 0 && !seen_amax) {
            const auto v = detail::parse_number(tok.substr(4));
            if (!v || *v <= 0.0) return std::nullopt;
            seen_amax = true;
            p.data.pulses.amp_max = *v;
        } else if (tok.size() > 1 && tok[0] == 'v' && !seen_v) {
            const auto v = detail::parse_number(tok.substr(1));
            if (!v || *v < 0.0) return std::nullopt;
            seen_v = true;
            p.data.lab.coupling = *v;
        } else {
            return std::nullopt;
        }
    }
    p.data.pulses.steps = p.data.lab.steps;
    return p;
}

/// Canonical names of the shipped profiles. Other couplings and amplitude
/// bounds are reachable through the same name pattern.
inline std::vector<std::string> builtin_profile_names() {
    std::vector<std::string> names;
    for (const char* bath : {"fermionic", "bosonic"})
        for (const char* axes : {"single", "multi"})
            for (const char* shots : {"512", "1024", "inf"}) names.push_back(std::string(bath) + "-" + axes + "-" + shots);
    for (const char* axes : {"single", "multi"}) {
        for (const char* v : {"0.2", "1"}) names.push_back(std::string("fermionic-") + axes + "-1024-v" + v);
        for (const char* v : {"0.13", "0.65"}) names.push_back(std::string("bosonic-") + axes + "-1024-v" + v);
    }
    names.push_back("fermionic-multi-1024-v1-amax100");
    names.push_back("bosonic-multi-1024-v0.65-amax100");
    for (const char* bath : {"fermionic", "bosonic"})
        for (const char* axes : {"single", "multi"})
            for (const char* shots : {"512", "1024", "inf"})
                names.push_back(std::string(bath) + "-" + axes + "-" + shots + "-paper");
    names.push_back("closed-system");
    names.push_back("toy");
    names.push_back("smoke");
    return names;
}

inline nlohmann::ordered_json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::ordered_json::parse(is);
}

inline void write_json_file(const fs::path& path, const nlohmann::ordered_json& j) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

/// A built-in name or the path of a JSON profile file.
inline Profile resolve_profile(const std::string& arg) {
    if (auto p = builtin_profile(arg)) return *p;
    if (fs::is_regular_file(arg)) {
        nlohmann::ordered_json j;
        try {
            j = read_json_file(arg);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("cannot parse profile " + arg + ": " + e.what());
        }
        Profile p = profile_from_json(j);
        if (!j.contains("name")) p.name = fs::path(arg).stem().string();
        return p;
    }
    throw ConfigError("unknown profile '" + arg + "' (not a built-in name or a file)");
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline nlohmann::ordered_json split_stats(const Dataset& ds, const GenerationStats& st, const char* file) {
    nlohmann::ordered_json j;
    j["file"] = file;
    j["count"] = ds.size();
    j["max_trace_drift"] = st.max_trace_drift();
    j["trace_drift"] = st.trace_drift;
    return j;
}

inline void check_dataset(const Profile& p, const Dataset& ds) { check_compatible(config_hash(p.data), ds); }

inline void require_files(const std::vector<fs::path>& files) {
    std::vector<std::string> missing;
    for (const auto& f : files)
        if (!fs::exists(f)) missing.push_back(f.string());
    if (!missing.empty()) throw MissingArtifacts(missing);
}

}  // namespace detail

struct GenDataOutput {
    Dataset train, test;
    nlohmann::ordered_json manifest;
};

inline GenDataOutput cmd_gen_data(const Profile& p, const fs::path& out, int threads = 1) {
    p.validate();
    fs::create_directories(out);
    GenerationStats st_train, st_test;
    GenDataOutput r;
    r.train = generate(p.data, p.train_size, p.seed, Split::train, threads, &st_train);
    r.test = generate(p.data, p.test_size, p.seed, Split::test, threads, &st_test);
    save(r.train, (out / kTrainFile).string());
    save(r.test, (out / kTestFile).string());
    write_json_file(out / kProfileFile, to_json(p));

    auto& m = r.manifest;
    m["profile"] = p.name;
    m["config_hash"] = config_hash(p.data);
    m["seed"] = p.seed;
    m["substeps"] = r.train.substeps;
    m["created"] = detail::utc_timestamp();
    m["train"] = detail::split_stats(r.train, st_train, kTrainFile);
    m["test"] = detail::split_stats(r.test, st_test, kTestFile);
    write_json_file(out / kManifestFile, m);
    return r;
}

struct TrainOutput {
    GrayboxModel model;
    TrainResult result;
    nlohmann::ordered_json summary;
};

inline TrainOutput cmd_train(const Profile& p, const fs::path& data_dir, const fs::path& out) {
    p.validate();
    detail::require_files({data_dir / kTrainFile, data_dir / kTestFile});
    const Dataset train_ds = load((data_dir / kTrainFile).string());
    const Dataset test_ds = load((data_dir / kTestFile).string());
    detail::check_dataset(p, train_ds);
    detail::check_dataset(p, test_ds);
    fs::create_directories(out);

    const ModelConfig mc = p.model_config();
    std::mt19937_64 rng(p.seed);
    TrainOutput r{GrayboxModel::initialized(mc, rng), {}, {}};
    const PreparedSet tr = prepare(mc, train_ds);
    const PreparedSet te = prepare(mc, test_ds);
    TrainOptions opts = p.training;
    opts.seed = p.seed;
    r.result = train(r.model, tr, te, opts);

    const std::string hash = config_hash(p.data);
    save_model(r.model, hash, (out / kModelFile).string());
    {
        std::ofstream os(out / kCurvesFile);
        write_curve_csv(os, r.result);
    }
    auto& s = r.summary;
    s["profile"] = p.name;
    s["config_hash"] = hash;
    s["iterations"] = opts.iterations;
    s["best_iteration"] = r.result.best_iteration;
    s["train_mse"] = evaluate_mse(r.model, tr);
    s["test_mse"] = te.size() ? nlohmann::ordered_json(evaluate_mse(r.model, te)) : nlohmann::ordered_json(nullptr);
    s["noise_distance"] = te.size() ? nlohmann::ordered_json(mean_noise_distance(r.model, te)) : nlohmann::ordered_json(nullptr);
    write_json_file(out / kSummaryFile, s);
    return r;
}

/// Loads a model and checks it against the profile.
inline GrayboxModel load_profile_model(const Profile& p, const fs::path& model_file) {
    detail::require_files({model_file});
    const ModelConfig mc = p.model_config();
    LoadedModel loaded = load_model(model_file.string(), &mc);
    if (loaded.config_hash != config_hash(p.data)) {
        throw CompatibilityError("model " + model_file.string() + " was trained on configuration " + loaded.config_hash +
                                 ", profile '" + p.name + "' has " + config_hash(p.data));
    }
    return std::move(loaded.model);
}

inline std::vector<ControlResult> cmd_control(const Profile& p, const fs::path& model_file,
                                              const std::vector<std::string>& gates, const std::string& optimizer,
                                              const fs::path& out) {
    p.validate();
    std::vector<GateTarget> targets;
    for (const auto& g : gates) targets.push_back(gate_target(g));
    std::vector<std::string> opts;
    if (optimizer == "both") opts = {"gd", "ga"};
    else if (optimizer == "gd" || optimizer == "ga") opts = {optimizer};
    else throw UsageError("unknown optimizer '" + optimizer + "' (expected gd, ga or both)");

    const GrayboxModel model = load_profile_model(p, model_file);
    fs::create_directories(out);
    const LabSimulator sim = calibrated_simulator(p.data.lab, p.data.pulses);
    GdOptions gd = p.gd;
    gd.seed = p.seed;
    GaOptions ga = p.ga;
    ga.seed = p.seed;

    std::vector<ControlResult> results;
    for (const auto& g : targets) {
        for (const auto& o : opts) {
            ControlResult r = o == "gd" ? optimize_gd(model, g, p.data.pulses, gd) : optimize_ga(model, g, p.data.pulses, ga);
            attach_lab_score(r, sim, p.data.pulses);
            write_json_file(out / ("control_" + g.name + "_" + o + ".json"), to_json(r));
            results.push_back(std::move(r));
        }
    }
    std::ofstream os(out / kFidelityFile);
    write_fidelity_csv(os, results, p.data.shots);
    return results;
}

/// Model accuracy on the stored splits, plus the lab fidelity of any stored
/// control results re-evaluated from their pulses.
inline nlohmann::ordered_json cmd_evaluate(const Profile& p, const fs::path& model_file, const fs::path& data_dir,
                                           const fs::path& out) {
    p.validate();
    const GrayboxModel model = load_profile_model(p, model_file);
    const ModelConfig mc = p.model_config();
    nlohmann::ordered_json j;
    j["profile"] = p.name;
    j["config_hash"] = config_hash(p.data);
    nlohmann::ordered_json splits;
    bool any = false;
    for (const char* file : {kTrainFile, kTestFile}) {
        if (!fs::exists(data_dir / file)) continue;
        const Dataset ds = load((data_dir / file).string());
        detail::check_dataset(p, ds);
        any = true;
        nlohmann::ordered_json s;
        s["count"] = ds.size();
        if (ds.size()) {
            const PreparedSet set = prepare(mc, ds);
            s["mse"] = evaluate_mse(model, set);
            s["noise_distance"] = mean_noise_distance(model, set);
        }
        splits[to_string(ds.split)] = s;
    }
    if (!any) throw MissingArtifacts({(data_dir / kTrainFile).string(), (data_dir / kTestFile).string()});
    j["splits"] = splits;

    nlohmann::ordered_json ctl = nlohmann::ordered_json::array();
    std::vector<fs::path> files;
    if (fs::is_directory(out)) {
        for (const auto& e : fs::directory_iterator(out)) {
            const auto fname = e.path().filename().string();
            if (fname.rfind("control_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (!files.empty()) {
        const LabSimulator sim = calibrated_simulator(p.data.lab, p.data.pulses);
        for (const auto& f : files) {
            const ControlResult r = control_result_from_json(read_json_file(f));
            const auto score = evaluate_on_lab(sim, r.pulse, p.data.pulses, gate_target(r.gate).matrix);
            ctl.push_back({{"gate", r.gate},
                           {"optimizer", r.optimizer},
                           {"predicted_cost", cost_J(model, r.pulse, gate_target(r.gate).matrix)},
                           {"fidelity", score.fidelity}});
        }
    }
    j["control"] = ctl;
    fs::create_directories(out);
    write_json_file(out / kEvaluationFile, j);
    return j;
}

// ---------------------------------------------------------------------------
// Report

struct RunSummary {
    std::string dir;
    Profile profile;
    double train_mse = 0.0;
    std::optional<double> test_mse;
    struct Fidelity {
        std::string gate, optimizer;
        double value;
    };
    std::vector<Fidelity> fidelities;

    std::string axes_label() const { return profile.data.pulses.axes.size() == 2 ? "multi" : "single"; }
    std::string shots() const { return shots_label(profile.data.shots); }
    double coupling() const { return std::abs(profile.data.lab.coupling); }
};

struct Report {
    std::vector<RunSummary> runs;
    std::string summary;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::vector<RunSummary::Fidelity> read_fidelity_csv(const fs::path& path) {
    std::ifstream is(path);
    std::vector<RunSummary::Fidelity> out;
    std::string line;
    std::getline(is, line);
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c = split_csv(line);
        if (c.size() != 4) throw ParseError(path.string() + ": expected 4 columns", lineno);
        if (c[3].empty()) continue;
        const auto v = parse_number(c[3]);
        if (!v) throw ParseError(path.string() + ": bad fidelity '" + c[3] + "'", lineno);
        out.push_back({c[0], c[1], *v});
    }
    return out;
}

inline int shots_rank(const std::string& s) { return s == "inf" ? 1 << 30 : std::stoi(s); }

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace detail

inline std::vector<std::string> required_run_files() {
    return {kProfileFile, kManifestFile, kSummaryFile, kFidelityFile};
}

/// Collects every run under `run_dir`, checks it is complete, and writes
/// mse_table.csv, fidelity_table.csv, vsweep_table.csv and summary.txt to `out`.
inline Report cmd_report(const fs::path& run_dir, const fs::path& out) {
    std::vector<fs::path> dirs;
    if (fs::exists(run_dir / kProfileFile)) {
        dirs.push_back(run_dir);
    } else if (fs::is_directory(run_dir)) {
        for (const auto& e : fs::directory_iterator(run_dir))
            if (e.is_directory() && fs::exists(e.path() / kProfileFile)) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
    }
    std::vector<std::string> missing;
    if (dirs.empty()) {
        for (const auto& f : required_run_files()) missing.push_back((run_dir / f).string());
        throw MissingArtifacts(missing);
    }
    for (const auto& d : dirs)
        for (const auto& f : required_run_files())
            if (!fs::exists(d / f)) missing.push_back((d / f).string());
    if (!missing.empty()) throw MissingArtifacts(missing);

    Report rep;
    for (const auto& d : dirs) {
        RunSummary r;
        r.dir = d.string();
        try {
            r.profile = profile_from_json(read_json_file(d / kProfileFile));
            const auto s = read_json_file(d / kSummaryFile);
            r.train_mse = s.at("train_mse").get<double>();
            if (!s.at("test_mse").is_null()) r.test_mse = s.at("test_mse").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(d.string() + ": " + e.what(), 1);
        }
        r.fidelities = detail::read_fidelity_csv(d / kFidelityFile);
        rep.runs.push_back(std::move(r));
    }

    fs::create_directories(out);
    std::ostringstream text;
    text << "runs: " << rep.runs.size() << "\n\n";
    {
        std::ofstream os(out / "mse_table.csv");
        os.precision(17);
        os << "profile,bath,axes,shots,V,train_mse,test_mse\n";
        text << "model accuracy\n";
        for (const auto& r : rep.runs) {
            os << r.profile.name << ',' << to_string(r.profile.data.lab.bath) << ',' << r.axes_label() << ','
               << r.shots() << ',' << r.coupling() << ',' << r.train_mse << ',';
            if (r.test_mse) os << *r.test_mse;
            os << '\n';
            text << "  " << r.profile.name << ": train " << detail::fmt(r.train_mse) << ", test "
                 << (r.test_mse ? detail::fmt(*r.test_mse) : "n/a") << '\n';
        }
    }

    // Shot-count ordering within groups that differ only in N.
    std::map<std::string, std::vector<const RunSummary*>> by_group;
    for (const auto& r : rep.runs) {
        if (!r.test_mse) continue;
        const std::string key = to_string(r.profile.data.lab.bath) + " " + r.axes_label() + " V=" + detail::fmt(r.coupling());
        by_group[key].push_back(&r);
    }
    for (auto& [key, group] : by_group) {
        if (group.size() < 2) continue;
        std::sort(group.begin(), group.end(), [](auto* a, auto* b) {
            return detail::shots_rank(a->shots()) < detail::shots_rank(b->shots());
        });
        bool ordered = true;
        text << "  test MSE vs shots (" << key << "):";
        for (std::size_t i = 0; i < group.size(); ++i) {
            text << ' ' << group[i]->shots() << '=' << detail::fmt(*group[i]->test_mse);
            if (i > 0 && !(*group[i]->test_mse < *group[i - 1]->test_mse)) ordered = false;
        }
        text << (ordered ? "  [decreasing]\n" : "  [not decreasing]\n");
    }

    {
        std::ofstream os(out / "fidelity_table.csv");
        os.precision(17);
        os << "profile,bath,axes,shots,V,gate,optimizer,fidelity\n";
        text << "\ngate fidelity\n";
        for (const auto& r : rep.runs) {
            double lo = 1.0;
            for (const auto& f : r.fidelities) {
                os << r.profile.name << ',' << to_string(r.profile.data.lab.bath) << ',' << r.axes_label() << ','
                   << r.shots() << ',' << r.coupling() << ',' << f.gate << ',' << f.optimizer << ',' << f.value << '\n';
                lo = std::min(lo, f.value);
            }
            text << "  " << r.profile.name << ':';
            for (const auto& f : r.fidelities) text << ' ' << f.gate << '/' << f.optimizer << '=' << detail::fmt(f.value);
            if (!r.fidelities.empty()) text << "  (min " << detail::fmt(lo) << ')';
            text << '\n';
        }
    }

    {
        struct Point {
            double v;
            double mean;
            std::size_t n;
        };
        std::map<std::string, std::vector<Point>> sweep;
        for (const auto& r : rep.runs) {
            std::map<std::string, std::pair<double, std::size_t>> per_opt;
            for (const auto& f : r.fidelities) {
                per_opt[f.optimizer].first += f.value;
                per_opt[f.optimizer].second += 1;
            }
            for (const auto& [opt, acc] : per_opt) {
                const std::string key = to_string(r.profile.data.lab.bath) + ',' + r.axes_label() + ',' + r.shots() + ',' + opt;
                sweep[key].push_back({r.coupling(), acc.first / static_cast<double>(acc.second), acc.second});
            }
        }
        std::ofstream os(out / "vsweep_table.csv");
        os.precision(17);
        os << "bath,axes,shots,optimizer,V,gates,mean_fidelity\n";
        text << "\ncoupling sweep (mean fidelity)\n";
        for (auto& [key, pts] : sweep) {
            std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.v < b.v; });
            bool monotone = true;
            text << "  " << key << ':';
            for (std::size_t i = 0; i < pts.size(); ++i) {
                os << key << ',' << pts[i].v << ',' << pts[i].n << ',' << pts[i].mean << '\n';
                text << " V=" << detail::fmt(pts[i].v) << ':' << detail::fmt(pts[i].mean);
                if (i > 0 && pts[i].mean > pts[i - 1].mean) monotone = false;
            }
            if (pts.size() > 1) text << (monotone ? "  [non-increasing]" : "  [increasing somewhere]");
            text << '\n';
        }
    }

    rep.summary = text.str();
    std::ofstream(out / "summary.txt") << rep.summary;
    return rep;
}

}  // namespace gbx
