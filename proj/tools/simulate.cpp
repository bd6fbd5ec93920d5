// Copyright 2026 The TCG Authors
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

// simulate: experiment runner. Exit codes: 0 success, 2 configuration error,
// 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include <CLI11.hpp>

#include "commands.hpp"

namespace {

using tcg::cli::ConfigError;
using tcg::cli::json;

int report(int code, const char *kind, const std::string &message) {
    std::fprintf(stderr, "error: code=%d kind=%s message=%s\n", code, kind, message.c_str());
    return code;
}

json read_config(const std::string &path) {
    if (path.empty()) {
        return json::object();
    }
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ConfigError(path + ": " + e.what());
    }
}

}  // namespace

int main(int argc, char **argv) {
    using Command = int (*)(const tcg::cli::RunArgs &);
    const std::map<std::string, std::pair<Command, std::string>> commands{
        {"sample-noise", {tcg::cli::cmd_sample_noise, "sample an OU-sum noise model and estimate its PSD"}},
        {"single-qubit", {tcg::cli::cmd_single_qubit, "coarse-grained single-qubit map against the closed form and the oracle"}},
        {"two-qubit", {tcg::cli::cmd_two_qubit, "exchange-noise generator structure and prefactor"}},
        {"parity", {tcg::cli::cmd_parity, "repeated parity measurement ensemble"}},
        {"calibrate", {tcg::cli::cmd_calibrate, "free-induction or exchange decay and T2* fit"}},
        {"compare-coarse", {tcg::cli::cmd_compare_coarse, "parity ensembles at two coarse step sizes"}},
        {"gate-library", {tcg::cli::cmd_gate_library, "calibrate the pulse library"}},
    };

    CLI::App app{"Coarse-grained stochastic noise simulator"};
    app.require_subcommand(1);
    std::string config_path;
    tcg::cli::RunArgs args;
    uint64_t seed = 1;
    size_t trajectories = 0;
    std::string out, cache;
    unsigned workers = 0;
    std::map<std::string, CLI::App *> subs;
    for (const auto &[name, entry] : commands) {
        CLI::App *sub = app.add_subcommand(name, entry.second);
        sub->add_option("--config", config_path, "JSON configuration file");
        sub->add_option("--seed", seed, "master seed");
        sub->add_option("--trajectories", trajectories, "number of noise realizations");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--cache", cache, "precompute cache directory");
        sub->add_option("--workers", workers, "worker threads (0: all cores)");
        subs[name] = sub;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        return report(2, "usage", e.what());
    }

    std::string name;
    for (const auto &[n, sub] : subs) {
        if (sub->parsed()) {
            name = n;
        }
    }
    const CLI::App *sub = subs.at(name);
    try {
        args.config = read_config(config_path);
        if (!args.config.is_object()) {
            throw ConfigError("config: expected a JSON object");
        }
        // run-level keys; flags win over the file
        auto take = [&](const char *key) {
            json v;
            if (args.config.contains(key)) {
                v = args.config[key];
                args.config.erase(key);
            }
            return v;
        };
        json jseed = take("seed"), jout = take("output_dir"), jcache = take("cache_dir"), jworkers = take("workers");
        args.seed = seed;
        if (sub->count("--seed") == 0 && !jseed.is_null()) {
            if (!jseed.is_number_unsigned()) {
                throw ConfigError("config.seed: expected a non-negative integer");
            }
            args.seed = jseed.get<uint64_t>();
        }
        args.out = !out.empty() ? out : (jout.is_string() ? jout.get<std::string>() : ".");
        args.cache = !cache.empty() ? cache : (jcache.is_string() ? jcache.get<std::string>() : "");
        if (!jout.is_null() && !jout.is_string()) {
            throw ConfigError("config.output_dir: expected a string");
        }
        if (!jcache.is_null() && !jcache.is_string()) {
            throw ConfigError("config.cache_dir: expected a string");
        }
        args.workers = workers;
        if (sub->count("--workers") == 0 && !jworkers.is_null()) {
            if (!jworkers.is_number_unsigned()) {
                throw ConfigError("config.workers: expected a non-negative integer");
            }
            args.workers = jworkers.get<unsigned>();
        }
        args.trajectories = trajectories;
        return commands.at(name).first(args);
    } catch (const ConfigError &e) {
        return report(2, "config", e.what());
    } catch (const std::invalid_argument &e) {
        return report(2, "config", e.what());
    } catch (const std::exception &e) {
        return report(3, "numerical", e.what());
    }
}
