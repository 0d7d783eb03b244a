#ifndef EXCIRAD_CUMULANT_HPP
#define EXCIRAD_CUMULANT_HPP

#include <Eigen/Core>
#include <complex>
#include <vector>

#include "excirad/couplings.hpp"
#include "excirad/lattice.hpp"

namespace excirad {

// Moment hierarchy for the same master equation, closed at second or third
// order.  Stored blocks (active-site indices, canonical index order):
//   z_i              = <sigma_i^z>                          real
//   S_ij (i < j)     = <sigma_i^+ sigma_j^->                complex, S_ji = conj
//   C_ij (i < j)     = <sigma_i^z sigma_j^z>                real symmetric
//   T_kij (i < j)    = <sigma_k^z sigma_i^+ sigma_j^->      complex, order 3 only
//   F_abc (a<b<c)    = <sigma_a^z sigma_b^z sigma_c^z>      real, order 3 only
// Anomalous blocks (<sigma^+ sigma^+> etc.) vanish for Fock initial data and
// are not stored.  Four-operator expectations are closed with the fourth
// joint cumulant set to zero (order 3) or the third (order 2).
struct CumulantState {
    int n_sites = 0;
    int order = 3;  // 2 or 3
    double time = 0.0;
    Eigen::VectorXd data;

    static std::size_t state_size(int n_sites, int order);

    double z(int i) const;
    double& z(int i);
    std::complex<double> S(int i, int j) const;
    double C(int i, int j) const;
    std::complex<double> T(int k, int i, int j) const;
    double F(int a, int b, int c) const;
    void set_S(int i, int j, std::complex<double> value);
    void set_C(int i, int j, double value);
    void set_T(int k, int i, int j, std::complex<double> value);
    void set_F(int a, int b, int c, double value);

    double occupation(int i) const { return 0.5 * (1.0 + z(i)); }

    // checks layout, finiteness, and <n_i> within [-1e-6, 1 + 1e-6]
    void validate() const;
};

// product state moments from an occupancy pattern (no spatial coherence)
CumulantState init_from_fock(const std::vector<bool>& occupancy, int order = 3);
CumulantState init_from_fock(const LatticeConfiguration& config, int order = 3);

// time derivative of every stored moment under the closed hierarchy
CumulantState cumulant_rhs(const CumulantState& state, const CouplingMatrices& couplings);

struct CumulantTrajectory {
    std::vector<double> times;
    std::vector<Eigen::MatrixXcd> coherences;  // diagonal <n_i>, off-diagonal S_ij
    std::vector<double> total_excitons;
    CumulantState final_state;

    int size() const { return static_cast<int>(times.size()); }
};

struct CumulantOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    // abort threshold on |<n_i>|; closure breakdown must be loud, not clamped
    double breakdown_tol = 1e-2;
    // stop once the exciton number falls below this fraction of its start value
    double stop_fraction = 0.0;
};

CumulantTrajectory evolve_cumulant(const CumulantState& state0,
                                   const CouplingMatrices& couplings, double t_max,
                                   double dt_out, const CumulantOptions& options = {});

}  // namespace excirad

#endif
