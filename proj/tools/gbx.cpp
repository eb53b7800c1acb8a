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


// Command-line driver: gen-data, train, control, evaluate, report.
//
// Exit codes: 0 success, 2 configuration, 3 data (parse, integrity,
// compatibility, numerical), 4 usage, 5 missing artifacts.

#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "gbx/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kUsage = 4, kMissing = 5 };

struct Args {
    std::string profile = "closed-system";
    std::optional<std::uint64_t> seed;
    std::string out;
    int threads = 1;
    std::string data;
    std::string model;
    std::vector<std::string> gates;
    std::string optimizer;
    std::string run;
};

gbx::Profile load_profile(const Args& a) {
    gbx::Profile p = gbx::resolve_profile(a.profile);
    if (a.seed) p.seed = *a.seed;
    return p;
}

gbx::fs::path out_dir(const Args& a, const gbx::Profile& p) {
    return a.out.empty() ? gbx::fs::path("runs") / p.name : gbx::fs::path(a.out);
}

int threads_of(const Args& a) {
    if (a.threads > 0) return a.threads;
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

int gen_data(const Args& a) {
    const auto p = load_profile(a);
    const auto out = out_dir(a, p);
    const auto r = gbx::cmd_gen_data(p, out, threads_of(a));
    std::cout << "wrote " << r.train.size() << " train and " << r.test.size() << " test examples to " << out.string()
              << " (config " << r.manifest["config_hash"].get<std::string>() << ", substeps " << r.train.substeps
              << ")\n";
    return kOk;
}

int train(const Args& a) {
    const auto p = load_profile(a);
    const auto out = out_dir(a, p);
    const gbx::fs::path data = a.data.empty() ? out : gbx::fs::path(a.data);
    const auto r = gbx::cmd_train(p, data, out);
    std::cout << "train MSE " << r.summary["train_mse"].get<double>();
    if (!r.summary["test_mse"].is_null()) std::cout << ", test MSE " << r.summary["test_mse"].get<double>();
    std::cout << "; model written to " << (out / gbx::kModelFile).string() << '\n';
    return kOk;
}

int control(const Args& a) {
    const auto p = load_profile(a);
    const auto out = out_dir(a, p);
    const gbx::fs::path model = a.model.empty() ? out / gbx::kModelFile : gbx::fs::path(a.model);
    const auto gates = a.gates.empty() ? p.gates : a.gates;
    const auto optimizer = a.optimizer.empty() ? p.optimizer : a.optimizer;
    const auto results = gbx::cmd_control(p, model, gates, optimizer, out);
    for (const auto& r : results) {
        std::cout << r.gate << ' ' << r.optimizer << ": J=" << r.cost << " fidelity=" << r.fidelity.value_or(0.0) << '\n';
    }
    return kOk;
}

int evaluate(const Args& a) {
    const auto p = load_profile(a);
    const auto out = out_dir(a, p);
    const gbx::fs::path model = a.model.empty() ? out / gbx::kModelFile : gbx::fs::path(a.model);
    const gbx::fs::path data = a.data.empty() ? out : gbx::fs::path(a.data);
    std::cout << gbx::cmd_evaluate(p, model, data, out).dump(2) << '\n';
    return kOk;
}

int report(const Args& a) {
    const gbx::fs::path run = a.run.empty() ? gbx::fs::path("runs") : gbx::fs::path(a.run);
    const gbx::fs::path out = a.out.empty() ? run : gbx::fs::path(a.out);
    std::cout << gbx::cmd_report(run, out).summary;
    return kOk;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const gbx::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const gbx::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsage;
    } catch (const gbx::MissingArtifacts& e) {
        std::cerr << "missing artifacts:\n";
        for (const auto& file : e.files()) std::cerr << "  " << file << '\n';
        return kMissing;
    } catch (const gbx::ParseError& e) {
        std::cerr << "parse error: " << e.what() << '\n';
        return kData;
    } catch (const gbx::IntegrityError& e) {
        std::cerr << "integrity error: " << e.what() << '\n';
        return kData;
    } catch (const gbx::CompatibilityError& e) {
        std::cerr << "compatibility error: " << e.what() << '\n';
        return kData;
    } catch (const gbx::ShapeError& e) {
        std::cerr << "model shape error: " << e.what() << '\n';
        return kData;
    } catch (const gbx::NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kData;
    } catch (const gbx::TrainingError& e) {
        std::cerr << "training failed: " << e.what() << '\n';
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graybox modelling and control of a qubit in a non-Markovian bath"};
    app.require_subcommand(0, 1);
    Args a;
    bool list = false;
    app.add_flag("--list-profiles", list, "Print the built-in profile names");
    app.add_option("--profile", a.profile, "Built-in profile name or JSON profile file")->capture_default_str();
    app.add_option("--seed", a.seed, "Seed for data, model initialization and optimizers");
    app.add_option("--out", a.out, "Output directory (default runs/<profile>)");
    app.add_option("--threads", a.threads, "Worker threads for data generation (0: all cores)")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    app.fallthrough();

    auto* gen = app.add_subcommand("gen-data", "Simulate train and test datasets");
    auto* trn = app.add_subcommand("train", "Fit the graybox model");
    trn->add_option("--data", a.data, "Directory holding train.jsonl and test.jsonl (default: --out)");
    auto* ctl = app.add_subcommand("control", "Optimize pulses for target gates and score them on the simulator");
    ctl->add_option("--model", a.model, "Model file (default: <out>/model.gbx.json)");
    ctl->add_option("--gates", a.gates, "Gates among I, X, Y, Z, H, RX_PI4 (default: profile)")->delimiter(',');
    ctl->add_option("--optimizer", a.optimizer, "gd, ga or both (default: profile)");
    auto* ev = app.add_subcommand("evaluate", "Score a model on stored data and stored control results");
    ev->add_option("--model", a.model, "Model file (default: <out>/model.gbx.json)");
    ev->add_option("--data", a.data, "Directory holding the datasets (default: --out)");
    auto* rep = app.add_subcommand("report", "Build comparison tables from completed runs");
    rep->add_option("--run", a.run, "A run directory or a directory of runs (default: runs)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (list) {
        for (const auto& n : gbx::builtin_profile_names()) std::cout << n << '\n';
        return kOk;
    }
    if (gen->parsed()) return guarded([&] { return gen_data(a); });
    if (trn->parsed()) return guarded([&] { return train(a); });
    if (ctl->parsed()) return guarded([&] { return control(a); });
    if (ev->parsed()) return guarded([&] { return evaluate(a); });
    if (rep->parsed()) return guarded([&] { return report(a); });
    std::cerr << app.help();
    return kUsage;
}
