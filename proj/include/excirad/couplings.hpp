#ifndef EXCIRAD_COUPLINGS_HPP
#define EXCIRAD_COUPLINGS_HPP

#include <Eigen/Core>
#include <complex>
#include <iosfwd>
#include <vector>

#include "excirad/lattice.hpp"

namespace excirad {

// Working units: gamma = 1 (single-site decay rate), lambda = 1, hbar = 1,
// so k = 2 pi and every rate is in units of gamma, every time in 1/gamma.
inline constexpr double kGamma = 1.0;
inline constexpr double kWavenumber = 2.0 * 3.14159265358979323846;

struct ModelParameters {
    double gamma = kGamma;     // one-body decay rate, the unit of every other rate
    double eps_dd = 0.0;       // V(a) / (hbar |J_nf(a)|), J_nf the near-field law
    double tunneling_t = 0.0;  // nearest-neighbour moire tunneling, units hbar*gamma
};

// Free-space dyadic Green's tensor contracted with the in-plane circular
// polarization p = (x + iy)/sqrt(2).  The projection of the rr^T part is 1/2
// for any in-plane separation, so the result depends only on |separation|.
// Units of 1/lambda.
std::complex<double> greens_projection(const Eigen::Vector2d& separation);

// Coherent dipole shift J(r) and collective decay gamma(r), both in units of
// gamma, normalized so gamma(r -> 0) = gamma.
double dipole_shift(double distance);
double collective_decay(double distance);

// Near-field law J(r) = -3 gamma / (8 (kr)^3); the static interaction V is
// defined through it exactly.
double near_field_shift(double distance);

// Pairwise couplings over the active sites of a configuration.
struct CouplingMatrices {
    std::vector<int> site_index;      // active index -> lattice site
    std::vector<Eigen::Vector2d> positions;
    double a_over_lambda = 0.0;
    double gamma = kGamma;
    double tunneling_t = 0.0;
    double eps_dd = 0.0;

    Eigen::MatrixXd J;      // dipole shifts, zero diagonal
    Eigen::MatrixXd Gamma;  // collective decay, diagonal = gamma
    Eigen::MatrixXd W;      // J + t on nearest-neighbour pairs (total hopping)
    Eigen::MatrixXd V;      // repulsive static interaction, zero diagonal

    int size() const { return static_cast<int>(site_index.size()); }
};

// J, Gamma and W from the Green's function; V left zero.  Validates that
// Gamma is positive semidefinite (smallest eigenvalue >= -1e-10 gamma).
CouplingMatrices dipole_couplings(const LatticeConfiguration& lattice,
                                  const ModelParameters& params);

// V_ij = eps_dd * (3/8) * (k r_ij)^-3 over active sites.
Eigen::MatrixXd static_interactions(const LatticeConfiguration& lattice,
                                    const ModelParameters& params);

// dipole_couplings + static_interactions.
CouplingMatrices build_couplings(const LatticeConfiguration& lattice,
                                 const ModelParameters& params);

// CSV rows (row, col, J, Gamma, V) for every active pair.
void write_couplings_csv(std::ostream& os, const CouplingMatrices& c);

}  // namespace excirad

#endif
