#ifndef EXCIRAD_EXACT_HPP
#define EXCIRAD_EXACT_HPP

#include <Eigen/Core>
#include <complex>
#include <cstdint>
#include <vector>

#include "excirad/couplings.hpp"

namespace excirad {

// Occupation-number basis over M active sites, split by total excitation
// number.  A basis state is a bitmask; bit i is the occupation of active
// site i, and the mask itself is the index into the full 2^M space.
struct FockSectors {
    int n_sites = 0;
    std::vector<std::vector<std::uint32_t>> basis;  // [q] -> masks, ascending
    std::vector<int> rank;                          // mask -> index within its sector

    int dim(int q) const { return static_cast<int>(basis[q].size()); }
    static FockSectors build(int n_sites);
};

// Masks of the C(n_sites, q) states with q excitations, ascending; usable
// for sectors of lattices too large for the full table.
std::vector<std::uint32_t> sector_masks(int n_sites, int q);

struct DensityMatrixState {
    Eigen::MatrixXcd rho;  // 2^M x 2^M in the mask-indexed Fock basis
    double time = 0.0;

    int sites() const;
    // trace 1 within 1e-8, Hermitian within 1e-10, eigenvalues >= -1e-8
    void validate() const;
};

// Pure product state |n_0 n_1 ...><...| from per-site occupations.
DensityMatrixState fock_density(const std::vector<bool>& occupancy);

// H = sum_{i<j} W_ij (s_i^+ s_j^- + h.c.) + sum_{i<j} V_ij n_i n_j as a dense
// real symmetric 2^M x 2^M matrix.  Refuses M > 14; the dense form is meant
// for inspection and small systems, the evolver never materializes it.
Eigen::MatrixXd build_hamiltonian(const CouplingMatrices& couplings);

struct DecayMode {
    int sector = 0;
    double rate = 0.0;          // units of gamma
    Eigen::VectorXd vector;     // coefficients over FockSectors::basis[sector]
    double population = -1.0;   // time-integrated P_alpha, -1 until filled
};

// Eigenmodes of D = sum_ij Gamma_ij s_i^+ s_j^- restricted to excitation
// sectors; D is Hermitian PSD, so rates are real and >= 0 and the mode
// vectors are orthonormal within each sector.
struct DecaySpectrum {
    int n_sites = 0;
    std::vector<DecayMode> modes;  // ascending sector, then ascending rate

    bool populations_filled() const;
};

DecaySpectrum decay_spectrum(const CouplingMatrices& couplings, int sector);
DecaySpectrum full_decay_spectrum(const CouplingMatrices& couplings);

struct EvolveOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double trace_tol = 1e-6;  // abort when |tr rho - 1| exceeds this
    // stop once sum<n_i> falls below this fraction of its initial value
    // (<= 0 keeps the full horizon)
    double stop_fraction = 0.0;
    // store full rho(t) at output times (needs M <= 8)
    bool record_snapshots = false;
    // project <alpha|rho|alpha> at output times for these modes
    const DecaySpectrum* spectrum = nullptr;
};

struct ExactTrajectory {
    std::vector<double> times;
    std::vector<Eigen::MatrixXcd> coherences;     // [k](i,j) = <s_i^+ s_j^->
    std::vector<double> total_excitons;           // sum_i <n_i>
    std::vector<double> trace_error;              // |tr rho - 1|
    std::vector<Eigen::MatrixXcd> snapshots;      // full rho(t) if recorded
    std::vector<Eigen::VectorXd> mode_populations;  // p_alpha(t) if projected
    DensityMatrixState final_state;

    int size() const { return static_cast<int>(times.size()); }
};

// Integrates d rho/dt = -i[H, rho] + sum_ij Gamma_ij (s_j^- rho s_i^+
// - {s_i^+ s_j^- , rho}/2) with adaptive dopri5, sampling every dt_out.
// Internally the state is stored per (q, q') sector block and only blocks
// that carry weight at t = 0 are evolved; the trace is monitored and a
// drift beyond 1e-6 aborts the run.
ExactTrajectory evolve_master(const DensityMatrixState& rho0,
                              const CouplingMatrices& couplings, double t_max,
                              double dt_out, const EvolveOptions& options = {});

// P_alpha = integral of <alpha|rho(t)|alpha> over the recorded window,
// normalized to unit sum over modes with sector >= 1.  Uses snapshots when
// present, otherwise the mode populations projected during the run.
DecaySpectrum eigenstate_populations(const ExactTrajectory& trajectory,
                                     const DecaySpectrum& spectrum);

}  // namespace excirad

#endif
