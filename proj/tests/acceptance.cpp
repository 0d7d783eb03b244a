// End-to-end acceptance checks for the emission model, one verdict per
// criterion.  Unattainable targets fail loudly with the measured numbers so
// the gap stays visible instead of hiding behind loosened tolerances.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "excirad/analysis.hpp"
#include "excirad/couplings.hpp"
#include "excirad/cumulant.hpp"
#include "excirad/exact.hpp"
#include "excirad/experiment.hpp"
#include "excirad/lattice.hpp"

using namespace excirad;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) {
    char buf[768];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof buf, f, args);
    va_end(args);
    return buf;
}

EmissionTrace run_exact(const LatticeConfiguration& lat, double eps, double t_max,
                        double rtol = 1e-8) {
    ModelParameters p;
    p.eps_dd = eps;
    const CouplingMatrices cpl = build_couplings(lat, p);
    EvolveOptions o;
    o.rtol = rtol;
    o.atol = rtol * 1e-2;
    o.trace_tol = 1e-4;  // long horizons accumulate harmless drift of a few rtol
    return emission_trace(
        evolve_master(fock_density(lat.active_occupancy()), cpl, t_max, 0.01, o), cpl);
}

EmissionTrace run_cumulant(const LatticeConfiguration& lat, double eps, int order,
                           double t_max, double guard = 1e-2, double rtol = 1e-6) {
    ModelParameters p;
    p.eps_dd = eps;
    const CouplingMatrices cpl = build_couplings(lat, p);
    CumulantOptions o;
    o.rtol = rtol;
    o.atol = rtol * 1e-2;
    o.breakdown_tol = guard;
    return emission_trace(
        evolve_cumulant(init_from_fock(lat.active_occupancy(), order), cpl, t_max, 0.01,
                        o),
        cpl);
}

// results shared between criteria so the expensive runs happen once
struct Shared {
    std::vector<double> full33;        // exact 3x3 full-filling peaks, eps {0, 1, 5}
    EmissionTrace third33_e0;          // exact 3x3 ordered third, eps 0
    bool have_third = false;
};

const std::vector<double>& full33_peaks(Shared& shared) {
    if (shared.full33.empty()) {
        const LatticeConfiguration lat =
            ordered_filling(build_triangular(3, 3, 0.05), FillingPattern::full);
        for (double eps : {0.0, 1.0, 5.0})
            shared.full33.push_back(gamma_max(run_exact(lat, eps, 6.0)).gamma_max);
    }
    return shared.full33;
}

// --- 1: near-field limits of the pair couplings ---------------------------

Verdict near_field_limits() {
    constexpr double tau = 2.0 * 3.14159265358979323846;
    ModelParameters p;
    auto pair_at = [&](double kr) {
        return dipole_couplings(build_triangular(1, 2, kr / tau), p);
    };
    const double kr_j = 1e-2;
    const double j_dev =
        std::abs(pair_at(kr_j).J(0, 1) * 8.0 * kr_j * kr_j * kr_j / 3.0 + 1.0);
    const double g_dev = std::abs(pair_at(1e-3).Gamma(0, 1) - 1.0);
    Verdict v;
    v.pass = (j_dev < 1e-3) && (g_dev < 1e-4);
    v.detail = fmt("hopping vs -3g/8(kr)^3 at kr=1e-2 dev %.3g (<1e-3), "
                   "pair decay vs g at kr=1e-3 dev %.3g (<1e-4)",
                   j_dev, g_dev);
    return v;
}

// --- 2: one-body decay and the opening rate -------------------------------

Verdict one_body_anchor() {
    const LatticeConfiguration single =
        ordered_filling(build_triangular(1, 1, 0.05), FillingPattern::full);
    double worst = 0.0;
    {
        const EmissionTrace t = run_exact(single, 0.0, 12.0, 1e-9);
        for (int k = 0; k < t.size(); ++k)
            worst = std::max(worst,
                             std::abs(t.total_excitons[k] - std::exp(-t.times[k])));
    }
    {
        const EmissionTrace t = run_cumulant(single, 0.0, 3, 12.0, 1e-2, 1e-9);
        for (int k = 0; k < t.size(); ++k)
            worst = std::max(worst,
                             std::abs(t.total_excitons[k] - std::exp(-t.times[k])));
    }

    // every nonempty Fock start on a 2x2 patch opens at the one-body rate
    const LatticeConfiguration grid = build_triangular(2, 2, 0.05);
    ModelParameters p;
    p.eps_dd = 5.0;
    const CouplingMatrices cpl = build_couplings(grid, p);
    double worst_rate = 0.0;
    for (int mask = 1; mask < 16; ++mask) {
        std::vector<bool> occ(4);
        for (int i = 0; i < 4; ++i) occ[i] = (mask >> i) & 1;
        const EmissionTrace te =
            emission_trace(evolve_master(fock_density(occ), cpl, 0.1, 0.05, {}), cpl);
        worst_rate = std::max(worst_rate, std::abs(te.gamma_rate.front() - 1.0));
        const EmissionTrace tc = emission_trace(
            evolve_cumulant(init_from_fock(occ, 3), cpl, 0.1, 0.05, {}), cpl);
        worst_rate = std::max(worst_rate, std::abs(tc.gamma_rate.front() - 1.0));
    }
    Verdict v;
    v.pass = (worst < 1e-6) && (worst_rate < 1e-6);
    v.detail = fmt("single site |Nx - e^-gt| max %.3g (<1e-6); "
                   "Gamma(0) dev over all 2x2 Fock starts, both solvers, %.3g (<1e-6)",
                   worst, worst_rate);
    return v;
}

// --- 3: independent emitters once cross-decay is removed ------------------

Verdict independent_emitters() {
    const LatticeConfiguration lat =
        ordered_filling(build_triangular(3, 3, 0.05), FillingPattern::full);
    ModelParameters p;
    CouplingMatrices cpl = build_couplings(lat, p);
    cpl.Gamma = Eigen::MatrixXd::Identity(9, 9);  // keep the coherent hopping
    EvolveOptions o;
    o.rtol = 1e-10;
    o.atol = 1e-12;
    o.trace_tol = 1e-5;
    const ExactTrajectory traj =
        evolve_master(fock_density(lat.active_occupancy()), cpl, 10.0, 0.01, o);
    double worst = 0.0;
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        worst = std::max(worst, std::abs(traj.total_excitons[k] -
                                         9.0 * std::exp(-traj.times[k])));
    Verdict v;
    v.pass = worst < 1e-6;
    v.detail =
        fmt("3x3 with diagonal decay only: |Nx - 9e^-gt| max %.3g (<1e-6)", worst);
    return v;
}

// --- 4: collective decay spectra ------------------------------------------

Verdict spectrum_identities() {
    ModelParameters p;

    // all-to-all decay: one bright one-excitation mode at N g, the rest dark
    CouplingMatrices dicke = build_couplings(build_triangular(2, 3, 0.05), p);
    dicke.Gamma = Eigen::MatrixXd::Ones(6, 6);
    const DecaySpectrum s1 = decay_spectrum(dicke, 1);
    const double bright = s1.modes.back().rate;
    double dark_max = 0.0;
    for (std::size_t m = 0; m + 1 < s1.modes.size(); ++m)
        dark_max = std::max(dark_max, s1.modes[m].rate);
    const bool dicke_ok = std::abs(bright - 6.0) < 1e-9 && dark_max < 1e-9;

    const CouplingMatrices real = build_couplings(build_triangular(3, 3, 0.05), p);
    const DecaySpectrum top = decay_spectrum(real, 9);
    const bool top_ok =
        top.modes.size() == 1 && std::abs(top.modes.front().rate - 9.0) < 1e-9;

    const DecaySpectrum one = decay_spectrum(real, 1);
    int super = 0, sub = 0;
    for (const DecayMode& m : one.modes) {
        if (m.rate > 1.0) ++super;
        if (m.rate < 1.0) ++sub;
    }
    const bool split_ok = super >= 1 && sub >= 1;

    Verdict v;
    v.pass = dicke_ok && top_ok && split_ok;
    v.detail = fmt("all-to-all one-excitation modes: bright %.9f (=6), dark max %.2g; "
                   "3x3 full-sector rate %.9f (=9); 3x3 one-excitation rates "
                   "straddle g (%d above, %d below)",
                   bright, dark_max, top.modes.front().rate, super, sub);
    return v;
}

// --- 5: interactions suppress the full-filling burst ----------------------

Verdict interaction_suppression(Shared& shared) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto& g = full33_peaks(shared);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    Verdict v;
    v.pass = g[0] > 1.0 && g[0] > g[1] && g[1] > g[2];
    v.detail = fmt("exact 3x3 full peak rate over eps {0,1,5}: %.4f > %.4f > %.4f, "
                   "burst above g and strictly decreasing (%.0f s)",
                   g[0], g[1], g[2], elapsed);
    return v;
}

// --- 6: dilute ordered states reverse the suppression ---------------------

Verdict ordered_enhancement(Shared& shared) {
    const LatticeConfiguration third33 =
        ordered_filling(build_triangular(3, 3, 0.05), FillingPattern::third);
    shared.third33_e0 = run_exact(third33, 0.0, 6.0);
    shared.have_third = true;
    const double eta_third_exact = gamma_max(run_exact(third33, 5.0, 6.0)).gamma_max /
                                   gamma_max(shared.third33_e0).gamma_max;

    const LatticeConfiguration base66 = build_triangular(6, 6, 0.05);
    auto eta_ordered = [&](FillingPattern pat) {
        const LatticeConfiguration lat = ordered_filling(base66, pat);
        return gamma_max(run_cumulant(lat, 5.0, 2, 8.0, 0.15)).gamma_max /
               gamma_max(run_cumulant(lat, 0.0, 2, 8.0, 0.15)).gamma_max;
    };
    const double eta_third_66 = eta_ordered(FillingPattern::third);
    const double eta_half_66 = eta_ordered(FillingPattern::half);
    const double eta_full_66 = eta_ordered(FillingPattern::full);

    const auto& full33 = full33_peaks(shared);
    const double eta_full_exact = full33[2] / full33[0];

    Verdict v;
    v.pass = eta_third_exact > 1.0 && eta_third_66 > 1.0 && eta_half_66 > 1.0 &&
             eta_full_exact < 1.0 && eta_full_66 < 1.0;
    v.detail = fmt("eta(eps=5): exact 3x3 third %.3f (>1), 6x6 third %.3f (>1), "
                   "6x6 half %.3f (>1); full filling exact 3x3 %.3f (<1), "
                   "6x6 %.3f (<1)",
                   eta_third_exact, eta_third_66, eta_half_66, eta_full_exact,
                   eta_full_66);
    return v;
}

// --- 7: electron doping turns subradiance into a burst --------------------

Verdict doping_superradiance(const Shared& shared) {
    if (!shared.have_third) throw std::runtime_error("undoped reference unavailable");
    const LatticeConfiguration doped = doped_configuration(
        build_triangular(3, 3, 0.05), FillingPattern::third, 2.0 / 3.0);
    const double g_doped = gamma_max(run_exact(doped, 0.0, 6.0)).gamma_max;
    const PeakEstimate undoped = gamma_max(shared.third33_e0);
    const double chi = g_doped / undoped.gamma_max;

    const bool chi_ok = chi > 1.0;
    const bool doped_ok = g_doped > 1.0;
    const bool undoped_ok = undoped.gamma_max <= 1.0 + 1e-3;
    Verdict v;
    v.pass = chi_ok && doped_ok && undoped_ok;
    v.detail =
        fmt("chi %.3f (>1 %s), doped peak %.4f (>g %s); undoped peak %.4f at "
            "t=%.3f vs bound 1.001 (%s: photon-mediated hopping onto the empty "
            "sites drives an early transient burst before the subradiant tail)",
            chi, chi_ok ? "ok" : "FAIL", g_doped, doped_ok ? "ok" : "FAIL",
            undoped.gamma_max, undoped.t_peak, undoped_ok ? "ok" : "FAIL");
    return v;
}

// --- 8: closure accuracy against the exact solver -------------------------

Verdict closure_accuracy() {
    struct Case {
        int rows, cols;
        double eps;
    };
    const std::vector<Case> cases = {
        {2, 3, 0.0}, {2, 3, 5.0}, {2, 4, 0.0}, {2, 4, 5.0}};
    bool pass = true;
    std::string detail;
    for (const Case& c : cases) {
        const LatticeConfiguration lat = ordered_filling(
            build_triangular(c.rows, c.cols, 0.05), FillingPattern::full);
        const EmissionTrace ex = run_exact(lat, c.eps, 12.0);
        const EmissionTrace cu = run_cumulant(lat, c.eps, 3, 12.0, 1e-2, 1e-8);
        const double peak_err =
            std::abs(gamma_max(cu).gamma_max / gamma_max(ex).gamma_max - 1.0);
        double point_err = 0.0;
        const int n = std::min(ex.size(), cu.size());
        for (int k = 0; k < n; ++k) {
            if (!std::isfinite(ex.gamma_rate[k]) || !std::isfinite(cu.gamma_rate[k]))
                break;  // truncated rate; the comparison window ends here
            point_err =
                std::max(point_err, std::abs(cu.gamma_rate[k] / ex.gamma_rate[k] - 1.0));
        }
        if (peak_err > 0.05 || point_err > 0.10) pass = false;
        detail += fmt("%dx%d eps=%g peak %.1f%% point %.1f%%; ", c.rows, c.cols, c.eps,
                      100.0 * peak_err, 100.0 * point_err);
    }

    double pair_err = 0.0;
    for (double eps : {0.0, 5.0}) {
        const LatticeConfiguration pair =
            ordered_filling(build_triangular(1, 2, 0.05), FillingPattern::full);
        const EmissionTrace ex = run_exact(pair, eps, 12.0);
        const EmissionTrace cu = run_cumulant(pair, eps, 3, 12.0, 1e-2, 1e-8);
        const int n = std::min(ex.size(), cu.size());
        for (int k = 0; k < n; ++k) {
            if (!std::isfinite(ex.gamma_rate[k]) || !std::isfinite(cu.gamma_rate[k]))
                break;
            pair_err = std::max(pair_err, std::abs(cu.gamma_rate[k] - ex.gamma_rate[k]));
        }
    }
    if (pair_err > 1e-5) pass = false;

    Verdict v;
    v.pass = pass;
    v.detail = detail + fmt("targets 5%% peak / 10%% pointwise; "
                            "two-site rate dev %.2g (<1e-5)",
                            pair_err);
    return v;
}

// --- 9: finite-size extrapolation -----------------------------------------

Verdict finite_size() {
    const FitResult synth = finite_size_fit({{4, 1.0}, {8, 0.75}, {16, 0.625}});
    const bool synth_ok = std::abs(synth.eta_inf - 0.5) < 1e-12 &&
                          std::abs(synth.alpha - 2.0) < 1e-12 &&
                          synth.residual < 1e-12;

    // second-order closure: the third-order one diverges in finite time on
    // the 4x4 and 5x5 eps_dd = 0 reference runs
    std::vector<std::pair<int, double>> etas;
    double lo = 1e300, hi = -1e300;
    for (int n : {3, 4, 5, 6}) {
        const LatticeConfiguration lat =
            ordered_filling(build_triangular(n, n, 0.05), FillingPattern::full);
        const double eta = gamma_max(run_cumulant(lat, 5.0, 2, 6.0)).gamma_max /
                           gamma_max(run_cumulant(lat, 0.0, 2, 6.0)).gamma_max;
        etas.push_back({n * n, eta});
        lo = std::min(lo, eta);
        hi = std::max(hi, eta);
    }
    const FitResult fit = finite_size_fit(etas);
    const bool sim_ok = fit.eta_inf >= lo && fit.eta_inf <= hi;

    Verdict v;
    v.pass = synth_ok && sim_ok;
    v.detail = fmt("synthetic line recovered, residual %.2g (<1e-12); eta(N) full "
                   "filling eps=5: {9: %.4f, 16: %.4f, 25: %.4f, 36: %.4f}, "
                   "eta_inf %.4f within [%.4f, %.4f]: %s",
                   synth.residual, etas[0].second, etas[1].second, etas[2].second,
                   etas[3].second, fit.eta_inf, lo, hi, sim_ok ? "yes" : "NO");
    return v;
}

// --- 10: bit-identical reruns of a preset sweep ---------------------------

std::string slurp(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

Verdict determinism() {
    const fs::path base = fs::temp_directory_path() / "excirad_acceptance";
    fs::remove_all(base);
    const ExperimentConfig cfg = preset_configs("fig2").front().second;
    const RunOutcome a = run_experiment(cfg, (base / "a").string());
    const RunOutcome b = run_experiment(cfg, (base / "b").string());

    bool identical = a.files == b.files;
    std::size_t bytes = 0;
    for (const std::string& name : a.files) {
        if (!identical) break;
        const std::string body = slurp(base / "a" / name);
        bytes += body.size();
        identical = body == slurp(base / "b" / name);
    }
    Verdict v;
    v.pass = identical;
    v.detail = fmt("preset sweep rerun with fixed seeds: %zu files, %zu bytes, "
                   "byte-identical: %s",
                   a.files.size(), bytes, identical ? "yes" : "NO");
    return v;
}

}  // namespace

int main() {
    std::vector<std::pair<int, Verdict>> verdicts;
    const auto t0 = std::chrono::steady_clock::now();
    auto guarded = [&](int id, auto&& fn) {
        Verdict v;
        try {
            v = fn();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        verdicts.push_back({id, v});
        std::fprintf(stderr, "[%6.0f s] criterion %d done\n",
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                         .count(),
                     id);
    };

    Shared shared;
    guarded(1, near_field_limits);
    guarded(2, one_body_anchor);
    guarded(3, independent_emitters);
    guarded(4, spectrum_identities);
    guarded(5, [&] { return interaction_suppression(shared); });
    guarded(6, [&] { return ordered_enhancement(shared); });
    guarded(7, [&] { return doping_superradiance(shared); });
    guarded(8, closure_accuracy);
    guarded(9, finite_size);
    guarded(10, determinism);

    int passed = 0;
    for (const auto& [id, v] : verdicts) {
        std::printf("criterion %2d: %s  %s\n", id, v.pass ? "PASS" : "FAIL",
                    v.detail.c_str());
        passed += v.pass;
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%d/%zu criteria pass (%.0f s)\n", passed, verdicts.size(), elapsed);
    return passed == static_cast<int>(verdicts.size()) ? 0 : 1;
}
