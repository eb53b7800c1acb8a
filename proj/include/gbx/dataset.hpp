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

// Prepare-control-measure datasets and their JSON-lines storage.
//
// File layout: line 1 is a header object, every further line one example.
// Waveforms are not stored; they are re-rendered from the pulse on load.

#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gbx/pulses.hpp"
#include "gbx/simulator.hpp"
#include "json.hpp"

namespace gbx {

enum class Split { train, test };

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw ParseError("unknown split '" + s + "'", 1);
}

struct DatasetConfig {
    LabConfig lab;
    PulseConstraints pulses;
    std::optional<int> shots;  // nullopt: exact expectations

    void validate() const {
        lab.validate();
        pulses.validate();
        if (pulses.steps != lab.steps || std::abs(pulses.horizon - lab.horizon) > 1e-12) {
            throw ConfigError("pulse grid and lab grid differ");
        }
        if (shots && *shots < 1) throw ConfigError("shot count must be positive");
    }
};

inline nlohmann::ordered_json to_json(const DatasetConfig& c) {
    nlohmann::ordered_json j;
    j["lab"] = to_json(c.lab);
    j["pulses"] = to_json(c.pulses);
    j["shots"] = c.shots ? nlohmann::ordered_json(*c.shots) : nlohmann::ordered_json(nullptr);
    return j;
}

inline DatasetConfig dataset_config_from_json(const nlohmann::ordered_json& j) {
    DatasetConfig c;
    c.lab = lab_config_from_json(j.at("lab"));
    c.pulses = pulse_constraints_from_json(j.at("pulses"));
    if (!j.at("shots").is_null()) c.shots = j.at("shots").get<int>();
    return c;
}

/// 64-bit FNV-1a, rendered as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline std::string config_hash(const DatasetConfig& c) { return fnv1a_hex(to_json(c).dump()); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent seed for (seed, split, example index, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, Split split, std::uint64_t index, std::uint64_t stream) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ (split == Split::train ? 0x7472ULL : 0x7465ULL));
    h = splitmix64(h ^ index);
    return splitmix64(h ^ (stream + 1));
}

inline constexpr std::uint64_t kPulseStream = 0;
inline constexpr std::uint64_t kShotStream = 1;

struct Example {
    std::size_t index = 0;
    PulseSequence pulse;
    Waveform waveform;
    MeasurementRecord record;
};

struct GenerationStats {
    int substeps = 0;
    std::vector<double> trace_drift;  // per example
    double max_trace_drift() const {
        double m = 0.0;
        for (double d : trace_drift) m = std::max(m, d);
        return m;
    }
};

struct Dataset {
    DatasetConfig config;
    Split split = Split::train;
    std::uint64_t seed = 0;
    int substeps = 0;
    std::vector<Example> examples;

    std::size_t size() const { return examples.size(); }
    std::string hash() const { return config_hash(config); }

    /// Labels as an 18 x n matrix.
    Eigen::MatrixXd labels() const {
        Eigen::MatrixXd y(kRecordSize, static_cast<Eigen::Index>(examples.size()));
        for (std::size_t i = 0; i < examples.size(); ++i)
            for (int k = 0; k < kRecordSize; ++k) y(k, static_cast<Eigen::Index>(i)) = examples[i].record.values[k];
        return y;
    }
};

/// Substeps for a configuration: the configured value, or the result of the
/// doubling calibration on three fixed probe pulses.
inline int resolve_substeps(LabSimulator& sim, const PulseConstraints& pulses) {
    if (sim.config().substeps > 0) return sim.config().substeps;
    std::vector<Waveform> probes;
    std::mt19937_64 rng(0x5eedULL);
    for (int i = 0; i < 3; ++i) probes.push_back(render(random_sequence(rng, pulses)));
    return sim.calibrate_substeps(probes);
}

inline LabSimulator calibrated_simulator(const LabConfig& lab, const PulseConstraints& pulses) {
    LabSimulator sim(lab);
    sim.set_substeps(resolve_substeps(sim, pulses));
    return sim;
}

namespace detail {

inline void simulate_example(const LabSimulator& sim, const DatasetConfig& cfg, std::uint64_t seed, Split split,
                             std::size_t index, Example& ex, double& drift) {
    std::mt19937_64 pulse_rng(derive_seed(seed, split, index, kPulseStream));
    ex.index = index;
    ex.pulse = random_sequence(pulse_rng, cfg.pulses);
    ex.waveform = render(ex.pulse);
    PhysicalityLog log;
    ex.record.values = sim.expectations(ex.waveform, 0, &log);
    ex.record.shots = std::nullopt;
    drift = log.max_trace_drift;
    if (cfg.shots) {
        std::mt19937_64 shot_rng(derive_seed(seed, split, index, kShotStream));
        ex.record.values = sample_shots(ex.record.values, *cfg.shots, shot_rng);
        ex.record.shots = cfg.shots;
    }
}

}  // namespace detail

/// Simulates `n` random pulse sequences. Each example draws its pulse and its
/// shots from separate streams keyed by (seed, split, index), so results do
/// not depend on `threads`.
inline Dataset generate(const DatasetConfig& cfg, std::size_t n, std::uint64_t seed, Split split = Split::train,
                        int threads = 1, GenerationStats* stats = nullptr) {
    cfg.validate();
    LabSimulator sim = calibrated_simulator(cfg.lab, cfg.pulses);
    Dataset ds;
    ds.config = cfg;
    ds.split = split;
    ds.seed = seed;
    ds.substeps = sim.substeps();
    ds.examples.resize(n);
    std::vector<double> drift(n, 0.0);
    std::vector<std::string> errors(n);

    auto work = [&](std::size_t begin, std::size_t step) {
        for (std::size_t i = begin; i < n; i += step) {
            try {
                detail::simulate_example(sim, cfg, seed, split, i, ds.examples[i], drift[i]);
            } catch (const NumericalFailure& e) {
                errors[i] = e.what();
            }
        }
    };
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(std::max<std::size_t>(n, 1))));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work, static_cast<std::size_t>(t), static_cast<std::size_t>(workers));
        for (auto& th : pool) th.join();
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!errors[i].empty()) {
            throw NumericalFailure("example " + std::to_string(i) + " (seed " + std::to_string(seed) +
                                   "): " + errors[i]);
        }
    }
    if (stats) {
        stats->substeps = ds.substeps;
        stats->trace_drift = std::move(drift);
    }
    return ds;
}

/// Resamples an exact dataset with finite shots, drawing from the same
/// per-example shot streams `generate` uses.
inline Dataset apply_shots(const Dataset& exact, int shots) {
    if (exact.config.shots) throw InvalidInput("dataset already has finite shots");
    Dataset ds = exact;
    ds.config.shots = shots;
    for (auto& ex : ds.examples) {
        std::mt19937_64 shot_rng(derive_seed(ds.seed, ds.split, ex.index, kShotStream));
        ex.record.values = sample_shots(ex.record.values, shots, shot_rng);
        ex.record.shots = shots;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// JSON lines

inline nlohmann::ordered_json header_json(const Dataset& ds) {
    nlohmann::ordered_json h;
    h["format"] = "gbx-dataset";
    h["version"] = 1;
    h["config"] = to_json(ds.config);
    h["config_hash"] = ds.hash();
    h["seed"] = ds.seed;
    h["split"] = to_string(ds.split);
    h["substeps"] = ds.substeps;
    h["count"] = ds.examples.size();
    return h;
}

inline nlohmann::ordered_json example_json(const Example& ex, const std::string& hash) {
    nlohmann::ordered_json j;
    j["index"] = ex.index;
    j["config_hash"] = hash;
    j["pulse"] = to_json(ex.pulse);
    nlohmann::ordered_json rec;
    rec["values"] = ex.record.values;
    rec["shots"] = ex.record.shots ? nlohmann::ordered_json(*ex.record.shots) : nlohmann::ordered_json(nullptr);
    j["record"] = rec;
    return j;
}

inline void save(const Dataset& ds, std::ostream& os) {
    const std::string hash = ds.hash();
    os << header_json(ds).dump() << '\n';
    for (const auto& ex : ds.examples) os << example_json(ex, hash).dump() << '\n';
}

inline void save(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    save(ds, os);
}

inline Dataset load(std::istream& is) {
    Dataset ds;
    std::string line;
    std::size_t lineno = 0;
    auto parse = [&](const std::string& text) {
        try {
            return nlohmann::ordered_json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
    };
    if (!std::getline(is, line)) throw ParseError("missing header", 1);
    lineno = 1;
    const auto header = parse(line);
    std::string hash;
    std::size_t count = 0;
    try {
        if (header.at("format").get<std::string>() != "gbx-dataset") throw ParseError("not a dataset file", 1);
        ds.config = dataset_config_from_json(header.at("config"));
        hash = header.at("config_hash").get<std::string>();
        ds.seed = header.at("seed").get<std::uint64_t>();
        ds.split = split_from_string(header.at("split").get<std::string>());
        ds.substeps = header.value("substeps", 0);
        count = header.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), 1);
    }
    if (hash != ds.hash()) throw IntegrityError("header hash does not match its configuration");
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto j = parse(line);
        Example ex;
        try {
            if (j.at("config_hash").get<std::string>() != hash) {
                throw IntegrityError("line " + std::to_string(lineno) + ": config hash differs from header");
            }
            ex.index = j.at("index").get<std::size_t>();
            ex.pulse = pulse_sequence_from_json(j.at("pulse"));
            const auto& rec = j.at("record");
            const auto values = rec.at("values").get<std::vector<double>>();
            if (values.size() != kRecordSize) throw ParseError("record must have 18 values", lineno);
            std::copy(values.begin(), values.end(), ex.record.values.begin());
            if (!rec.at("shots").is_null()) ex.record.shots = rec.at("shots").get<int>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad example: ") + e.what(), lineno);
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), lineno);
        }
        ex.waveform = render(ex.pulse);
        ds.examples.push_back(std::move(ex));
    }
    if (ds.examples.size() != count) {
        throw ParseError("expected " + std::to_string(count) + " examples, found " +
                             std::to_string(ds.examples.size()),
                         lineno + 1);
    }
    return ds;
}

inline Dataset load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read " + path);
    return load(is);
}

}  // namespace gbx
