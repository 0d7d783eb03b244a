#ifndef EXCIRAD_EXPERIMENT_HPP
#define EXCIRAD_EXPERIMENT_HPP

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace excirad {

// One experiment: a lattice/model/solver choice plus parameter grids.  The
// JSON form is nested by section and rejects unknown keys so typos cannot
// silently change a run.
struct ExperimentConfig {
    // lattice
    int n_rows = 0;
    int n_cols = 0;
    double a_over_lambda = 0.05;
    // model
    double eps_dd = 0.0;
    double tunneling_t = 0.0;
    // initial state: "full", "ordered" (canonical pattern) or "random"
    std::string initial_kind = "full";
    std::string pattern = "full";  // ordered only
    double f_x = 1.0;              // random only
    // doping
    double f_e = 0.0;
    bool complementary = false;  // force f_e = 1 - f_x of the run
    // solver
    std::string solver_kind = "exact";  // "exact" or "cumulant"
    int order = 3;                      // cumulant closure order
    double t_max = 12.0;
    double dt_out = 0.01;
    double rtol = 1e-8;
    // abort threshold on site occupations leaving [0, 1]; some stable
    // cumulant runs overshoot transiently and need a looser guard
    double breakdown_tol = 1e-2;
    // sweep grids; an empty grid means the scalar field above is the single
    // point.  For ordered initial states the f_x grid selects the canonical
    // pattern with that filling fraction.
    std::vector<double> sweep_eps_dd;
    std::vector<double> sweep_f_x;
    std::vector<double> sweep_f_e;
    std::vector<std::array<int, 2>> sweep_sizes;  // {rows, cols}
    // seeds (random initial states only)
    std::uint64_t base_seed = 1;
    int n_realizations = 1;
    // output
    std::string directory = "out";
    std::vector<std::string> formats = {"csv", "json"};
    bool spectra = false;  // write decay modes and P_alpha (exact solver)

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

// Static checks only; an empty list means the config is runnable.
std::vector<std::string> validate_config(const ExperimentConfig& config);

// Desk-scale reproductions of the published figures.  A preset may expand
// to several experiments (label, config); single-experiment presets carry
// an empty label.  Names: fig2, fig3, fig4, finite_size.
std::vector<std::pair<std::string, ExperimentConfig>> preset_configs(
    const std::string& name);

struct RunOutcome {
    std::vector<std::string> files;  // paths relative to the output directory
    nlohmann::json summary;
};

// Executes the sweep into out_dir: one trace CSV per run, a summary JSON,
// and a manifest listing every produced file with the config hash.  All
// writes go through a temp-file rename, and results are bit-identical for
// a fixed base_seed regardless of worker count.
RunOutcome run_experiment(const ExperimentConfig& config,
                          const std::string& out_dir);

// Worker pool width: EXCIRAD_WORKERS when set and positive, else the
// hardware concurrency.
int worker_count();

// 64-bit FNV-1a, the manifest's config hash.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace excirad

#endif
