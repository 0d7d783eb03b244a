#ifndef EXCIRAD_ANALYSIS_HPP
#define EXCIRAD_ANALYSIS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "excirad/couplings.hpp"
#include "excirad/cumulant.hpp"
#include "excirad/exact.hpp"

namespace excirad {

// Identifying context carried with a trace so ratio observables can refuse
// apples-to-oranges comparisons.  Empty / zero fields mean "unknown" and
// are not compared.
struct TraceMetadata {
    int n_sites = 0;          // active sites
    double eps_dd = 0.0;
    double f_e = 0.0;         // doping fraction
    std::string solver;       // "exact" or "cumulant"
    int order = 0;            // closure order, 0 for exact
    std::string initial;      // label of the initial exciton configuration
    std::uint64_t seed = 0;
};

// Emission record derived from a trajectory: N_x(t), the weighted coherence
// sum (photon flux), and the normalized rate Gamma(t) = flux / N_x.  Once
// N_x drops below 1e-3 of its initial value the rate is truncated to NaN
// rather than formed from a vanishing denominator.
struct EmissionTrace {
    std::vector<double> times;
    std::vector<double> total_excitons;
    std::vector<double> flux;        // sum_ij Gamma_ij <s_i^+ s_j^->
    std::vector<double> gamma_rate;  // flux / N_x, NaN once truncated
    TraceMetadata meta;

    int size() const { return static_cast<int>(times.size()); }
};

EmissionTrace emission_trace(const ExactTrajectory& trajectory,
                             const CouplingMatrices& couplings);
EmissionTrace emission_trace(const CumulantTrajectory& trajectory,
                             const CouplingMatrices& couplings);

struct PeakEstimate {
    double gamma_max = 0.0;
    double t_peak = 0.0;
};

// Global maximum of Gamma(t) over the finite samples, ties broken to the
// earliest time.  An interior discrete maximum is refined by the vertex of
// the parabola through it and its neighbours.
PeakEstimate gamma_max(const EmissionTrace& trace);

// eta = Gamma_max(interacting) / Gamma_max(reference).  The runs must agree
// on every populated metadata field except eps_dd.
double eta(const EmissionTrace& interacting, const EmissionTrace& reference);

// chi = Gamma_max(doped) / Gamma_max(undoped).  The runs must agree on
// every populated metadata field except f_e and the active-site count
// (blocking removes sites).
double chi(const EmissionTrace& doped, const EmissionTrace& undoped);

struct DisorderAverage {
    EmissionTrace mean;                  // pointwise means over the ensemble
    std::vector<double> gamma_stderr;    // standard error of the mean
    std::vector<double> excitons_stderr;
    int n_runs = 0;
};

// Pointwise ensemble average over runs sharing one time grid.  A time keeps
// a finite mean rate only while every run is above its truncation floor;
// peak statistics are meant to be read off the averaged trace.
DisorderAverage disorder_average(const std::vector<EmissionTrace>& runs);

struct FitResult {
    double eta_inf = 0.0;
    double alpha = 0.0;
    double residual = 0.0;  // least-squares residual norm
};

// Least-squares fit of value = eta_inf + alpha / N over at least two
// distinct N.
FitResult finite_size_fit(const std::vector<std::pair<int, double>>& points);

}  // namespace excirad

#endif
