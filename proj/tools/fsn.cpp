#include <exception>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fsn/commands.hpp"
#include "fsn/config.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    std::string out;
    std::string seed;
    std::string threads;
    std::vector<std::string> overrides;
};

fsn::RunConfig resolve(const GlobalFlags& flags) {
    fsn::RunConfig config;
    if (!flags.config_path.empty()) config = fsn::RunConfig::from_file(flags.config_path);
    fsn::RunConfig cli;
    for (const auto& kv : flags.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
        cli.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!flags.out.empty()) cli.set("out", flags.out);
    if (!flags.seed.empty()) cli.set("seed", flags.seed);
    if (!flags.threads.empty()) cli.set("threads", flags.threads);
    config.merge(cli);
    return config;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Frame segmentation networks for temporal action localization"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--out", flags.out, "output directory");
    app.add_option("--seed", flags.seed, "run seed (default 42)");
    app.add_option("--threads", flags.threads, "worker threads (default: FSN_THREADS or 1)");
    app.add_option("--set", flags.overrides, "override a config key, key=value (repeatable)");

    const std::vector<std::pair<std::string, std::function<int(const fsn::RunConfig&)>>> commands = {
        {"synth", fsn::cmd_synth},
        {"train", fsn::cmd_train},
        {"train-weak", fsn::cmd_train_weak},
        {"predict", fsn::cmd_predict},
        {"predict-weak", fsn::cmd_predict_weak},
        {"eval", fsn::cmd_eval},
        {"ablate", fsn::cmd_ablate},
        {"gradcheck", fsn::cmd_gradcheck},
    };
    const std::map<std::string, std::string> help = {
        {"synth", "generate a synthetic dataset"},
        {"train", "train a strongly supervised head (fsn or ablation)"},
        {"train-weak", "train a weakly supervised head"},
        {"predict", "localize actions with a strong head"},
        {"predict-weak", "localize actions with a weak head"},
        {"eval", "frame- and segment-level mAP report"},
        {"ablate", "train and compare two head variants"},
        {"gradcheck", "finite-difference gradient checks"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, fn] : commands) subs.push_back(app.add_subcommand(name, help.at(name)));
    for (auto* sub : subs) sub->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        const fsn::RunConfig config = resolve(flags);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (subs[i]->parsed()) return commands[i].second(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "fsn: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
