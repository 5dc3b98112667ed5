#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vqclust/config.hpp"
#include "vqclust/pipeline.hpp"

namespace {

std::string single_line(const std::string& s) {
    std::string out;
    for (char c : s) out += (c == '\n' ? ';' : c);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vqclust: discrete latent features for expression-matrix subtyping"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run";
    long long seed_override = -1;
    long long threads_override = -1;

    for (const auto& name : vqclust::subcommand_names()) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "pipeline configuration file")->required();
        sub->add_option("--out", out_dir, "run directory for outputs");
        sub->add_option("--seed", seed_override, "override [run] seed");
        sub->add_option("--threads", threads_override, "override [run] threads");
    }

    CLI11_PARSE(app, argc, argv);

    std::string command = app.get_subcommands().front()->get_name();
    try {
        vqclust::ConfigFile file = vqclust::ConfigFile::parse(config_path);
        vqclust::PipelineConfig cfg = vqclust::validate_config(file);
        if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
        if (threads_override > 0) cfg.threads = static_cast<std::size_t>(threads_override);
        vqclust::run_subcommand(command, cfg, out_dir);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = single_line(e.what());
        err["command"] = command;
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
