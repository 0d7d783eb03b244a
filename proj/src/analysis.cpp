#include "excirad/analysis.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace excirad {

namespace {

constexpr double kTruncationFraction = 1e-3;

EmissionTrace trace_core(const std::vector<double>& times,
                         const std::vector<Eigen::MatrixXcd>& coherences,
                         const std::vector<double>& excitons,
                         const CouplingMatrices& couplings) {
    if (times.empty()) throw std::invalid_argument("empty trajectory");
    if (times.size() != coherences.size() || times.size() != excitons.size())
        throw std::invalid_argument("trajectory arrays disagree in length");
    const int m = couplings.size();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double floor = kTruncationFraction * excitons.front();

    EmissionTrace out;
    out.times = times;
    out.total_excitons = excitons;
    out.flux.reserve(times.size());
    out.gamma_rate.reserve(times.size());
    bool truncated = false;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (coherences[k].rows() != m || coherences[k].cols() != m)
            throw std::invalid_argument("coherence matrix does not match the couplings");
        const double flux =
            (couplings.Gamma.array() * coherences[k].real().array()).sum();
        out.flux.push_back(flux);
        if (excitons[k] < floor) truncated = true;
        out.gamma_rate.push_back(truncated ? nan : flux / excitons[k]);
    }
    out.meta.n_sites = m;
    out.meta.eps_dd = couplings.eps_dd;
    return out;
}

void require_comparable(const TraceMetadata& a, const TraceMetadata& b,
                        bool allow_eps_dd, bool allow_doping) {
    if (!allow_doping && a.n_sites > 0 && b.n_sites > 0 && a.n_sites != b.n_sites)
        throw std::invalid_argument("traces disagree on the active-site count");
    if (!a.solver.empty() && !b.solver.empty() && a.solver != b.solver)
        throw std::invalid_argument("traces come from different solvers");
    if (a.order > 0 && b.order > 0 && a.order != b.order)
        throw std::invalid_argument("traces come from different closure orders");
    if (!a.initial.empty() && !b.initial.empty() && a.initial != b.initial)
        throw std::invalid_argument("traces start from different configurations");
    if (!allow_eps_dd && a.eps_dd != b.eps_dd)
        throw std::invalid_argument("traces disagree on eps_dd");
    if (!allow_doping && a.f_e != b.f_e)
        throw std::invalid_argument("traces disagree on the doping fraction");
}

}  // namespace

EmissionTrace emission_trace(const ExactTrajectory& trajectory,
                             const CouplingMatrices& couplings) {
    EmissionTrace out = trace_core(trajectory.times, trajectory.coherences,
                                   trajectory.total_excitons, couplings);
    out.meta.solver = "exact";
    return out;
}

EmissionTrace emission_trace(const CumulantTrajectory& trajectory,
                             const CouplingMatrices& couplings) {
    EmissionTrace out = trace_core(trajectory.times, trajectory.coherences,
                                   trajectory.total_excitons, couplings);
    out.meta.solver = "cumulant";
    out.meta.order = trajectory.final_state.order;
    return out;
}

PeakEstimate gamma_max(const EmissionTrace& trace) {
    const int n = trace.size();
    int best = -1;
    for (int k = 0; k < n; ++k) {
        const double g = trace.gamma_rate[k];
        if (!std::isfinite(g)) continue;
        if (best < 0 || g > trace.gamma_rate[best]) best = k;
    }
    if (best < 0) throw std::invalid_argument("no finite emission-rate samples");

    PeakEstimate peak{trace.gamma_rate[best], trace.times[best]};
    if (best > 0 && best + 1 < n && std::isfinite(trace.gamma_rate[best - 1]) &&
        std::isfinite(trace.gamma_rate[best + 1])) {
        const double t0 = trace.times[best - 1], t1 = trace.times[best],
                     t2 = trace.times[best + 1];
        const double g0 = trace.gamma_rate[best - 1], g1 = trace.gamma_rate[best],
                     g2 = trace.gamma_rate[best + 1];
        const double d1 = (g1 - g0) / (t1 - t0);
        const double d2 = (g2 - g1) / (t2 - t1);
        const double curv = (d2 - d1) / (t2 - t0);
        if (curv < 0.0) {
            const double ts = 0.5 * (t0 + t1) - d1 / (2.0 * curv);
            if (ts >= t0 && ts <= t2) {
                const double gs = g0 + d1 * (ts - t0) + curv * (ts - t0) * (ts - t1);
                if (gs >= peak.gamma_max) peak = {gs, ts};
            }
        }
    }
    return peak;
}

double eta(const EmissionTrace& interacting, const EmissionTrace& reference) {
    require_comparable(interacting.meta, reference.meta, true, false);
    return gamma_max(interacting).gamma_max / gamma_max(reference).gamma_max;
}

double chi(const EmissionTrace& doped, const EmissionTrace& undoped) {
    require_comparable(doped.meta, undoped.meta, false, true);
    return gamma_max(doped).gamma_max / gamma_max(undoped).gamma_max;
}

DisorderAverage disorder_average(const std::vector<EmissionTrace>& runs) {
    if (runs.size() < 2)
        throw std::invalid_argument("disorder average needs at least two runs");
    const auto& grid = runs.front().times;
    const int n = runs.front().size();
    for (const auto& run : runs) {
        if (run.size() != n)
            throw std::invalid_argument("runs disagree on the time grid");
        for (int k = 0; k < n; ++k)
            if (std::abs(run.times[k] - grid[k]) > 1e-12)
                throw std::invalid_argument("runs disagree on the time grid");
    }

    const double r = static_cast<double>(runs.size());
    const double nan = std::numeric_limits<double>::quiet_NaN();
    DisorderAverage out;
    out.n_runs = static_cast<int>(runs.size());
    out.mean.times = grid;
    out.mean.meta = runs.front().meta;
    out.mean.meta.seed = 0;
    out.mean.total_excitons.assign(n, 0.0);
    out.mean.flux.assign(n, 0.0);
    out.mean.gamma_rate.assign(n, 0.0);
    out.gamma_stderr.assign(n, 0.0);
    out.excitons_stderr.assign(n, 0.0);

    for (int k = 0; k < n; ++k) {
        double nx = 0.0, fx = 0.0, g = 0.0;
        bool finite = true;
        for (const auto& run : runs) {
            nx += run.total_excitons[k];
            fx += run.flux[k];
            if (std::isfinite(run.gamma_rate[k]))
                g += run.gamma_rate[k];
            else
                finite = false;
        }
        out.mean.total_excitons[k] = nx / r;
        out.mean.flux[k] = fx / r;
        out.mean.gamma_rate[k] = finite ? g / r : nan;

        double vn = 0.0, vg = 0.0;
        for (const auto& run : runs) {
            const double dn = run.total_excitons[k] - out.mean.total_excitons[k];
            vn += dn * dn;
            if (finite) {
                const double dg = run.gamma_rate[k] - out.mean.gamma_rate[k];
                vg += dg * dg;
            }
        }
        out.excitons_stderr[k] = std::sqrt(vn / (r * (r - 1.0)));
        out.gamma_stderr[k] = finite ? std::sqrt(vg / (r * (r - 1.0))) : nan;
    }
    return out;
}

FitResult finite_size_fit(const std::vector<std::pair<int, double>>& points) {
    if (points.size() < 2)
        throw std::invalid_argument("finite-size fit needs at least two points");
    std::set<int> sizes;
    for (const auto& [n, value] : points) {
        if (n <= 0) throw std::invalid_argument("system sizes must be positive");
        if (!std::isfinite(value))
            throw std::invalid_argument("fit values must be finite");
        sizes.insert(n);
    }
    if (sizes.size() < 2)
        throw std::invalid_argument("finite-size fit needs at least two distinct sizes");

    const int rows = static_cast<int>(points.size());
    Eigen::MatrixXd design(rows, 2);
    Eigen::VectorXd rhs(rows);
    for (int i = 0; i < rows; ++i) {
        design(i, 0) = 1.0;
        design(i, 1) = 1.0 / static_cast<double>(points[i].first);
        rhs(i) = points[i].second;
    }
    const Eigen::Vector2d beta = design.colPivHouseholderQr().solve(rhs);
    FitResult fit;
    fit.eta_inf = beta(0);
    fit.alpha = beta(1);
    fit.residual = (design * beta - rhs).norm();
    return fit;
}

}  // namespace excirad
