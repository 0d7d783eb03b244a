#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "excirad/experiment.hpp"

namespace {

excirad::ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    return excirad::ExperimentConfig::from_json(nlohmann::json::parse(is));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collective photon emission on subwavelength exciton lattices"};
    app.require_subcommand(1);

    std::string config_path;
    std::string preset_name;
    std::string out_dir;

    CLI::App* run = app.add_subcommand("run", "execute an experiment config");
    run->add_option("config", config_path, "JSON config file")->required();

    CLI::App* validate = app.add_subcommand("validate", "check a config without running");
    validate->add_option("config", config_path, "JSON config file")->required();

    CLI::App* preset = app.add_subcommand(
        "preset", "run a bundled preset (fig2, fig3, fig4, finite_size)");
    preset->add_option("name", preset_name, "preset name")->required();
    preset->add_option("--out", out_dir, "output directory (default: preset name)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) {
            const auto diagnostics = excirad::validate_config(load_config(config_path));
            for (const auto& d : diagnostics) std::cout << d << "\n";
            if (!diagnostics.empty()) return 1;
            std::cout << "ok\n";
            return 0;
        }
        if (run->parsed()) {
            const excirad::ExperimentConfig cfg = load_config(config_path);
            const excirad::RunOutcome outcome = excirad::run_experiment(cfg, cfg.directory);
            std::cout << "wrote " << outcome.files.size() << " files to " << cfg.directory
                      << "\n";
            return 0;
        }
        const auto experiments = excirad::preset_configs(preset_name);
        const std::string base = out_dir.empty() ? preset_name : out_dir;
        for (const auto& [label, cfg] : experiments) {
            const std::string dir = label.empty() ? base : base + "/" + label;
            const excirad::RunOutcome outcome = excirad::run_experiment(cfg, dir);
            std::cout << "wrote " << outcome.files.size() << " files to " << dir << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
