// Copyright 2026 The mproj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mproj/cli/pipeline.hpp"

int main(int argc, char** argv)
{
    using namespace mproj::cli;
    CLI::App app{"Markovian projection of jump-diffusions: simulate, project, solve the forward equation, verify"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mproj::kVersion));

    std::string config_path;
    std::string out_dir = "mproj_out";
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;

    const char* commands[][2] = {
        {"simulate", "simulate the source model and summarise its marginals"},
        {"project", "estimate or compute the projected coefficients (b, a, n)"},
        {"pide", "project, then solve the forward equation for the mimicking density"},
        {"mimic", "full pipeline with marginal comparisons at the checkpoints"},
        {"audit", "check the standing assumptions on the model or its projection"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "master seed, overrides the config");
        sub->add_option("--threads", threads, "worker threads, overrides the config")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    try {
        RunConfig cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (threads) cfg.threads = *threads;
        const auto result = run_command(command, cfg, out_dir);
        if (!result.passed) {
            std::cerr << "mproj " << command << ": tolerance exceeded; see " << out_dir << "/report.json\n";
            return kExitTolerance;
        }
        std::cout << "mproj " << command << ": ok (" << out_dir << ")\n";
        return kExitOk;
    } catch (const mproj::ConfigError& e) {
        std::cerr << "mproj " << command << ": configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const mproj::NumericError& e) {
        std::cerr << "mproj " << command << ": numerical failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "mproj " << command << ": " << e.what() << '\n';
        return kExitNumeric;
    }
}
