#include "excirad/couplings.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace excirad {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::complex<double> projected_greens(double r) {
    if (!(r > 0.0)) throw std::invalid_argument("greens_projection needs a nonzero separation");
    const std::complex<double> ix(0.0, kWavenumber * r);
    const double x2 = (kWavenumber * r) * (kWavenumber * r);
    // p^dag G p with p = (x + iy)/sqrt(2): the identity part projects to 1,
    // the rr^T part to 1/2 for in-plane separations.
    const std::complex<double> iso = 1.0 + (ix - 1.0) / x2;
    const std::complex<double> aniso = (3.0 - 3.0 * ix - x2) / (2.0 * x2);
    return std::exp(ix) / (4.0 * kPi * r) * (iso + aniso);
}

}  // namespace

std::complex<double> greens_projection(const Eigen::Vector2d& separation) {
    return projected_greens(separation.norm());
}

double dipole_shift(double distance) {
    // Normalization anchored by gamma_ii = gamma: Im g(r -> 0) = k / 6 pi.
    return -(3.0 * kPi * kGamma / kWavenumber) * projected_greens(distance).real();
}

double collective_decay(double distance) {
    return (6.0 * kPi * kGamma / kWavenumber) * projected_greens(distance).imag();
}

double near_field_shift(double distance) {
    const double x = kWavenumber * distance;
    return -3.0 * kGamma / (8.0 * x * x * x);
}

CouplingMatrices dipole_couplings(const LatticeConfiguration& lattice,
                                  const ModelParameters& params) {
    if (!(params.gamma > 0.0))
        throw std::invalid_argument("gamma must be positive, got " +
                                    std::to_string(params.gamma));
    CouplingMatrices c;
    c.site_index = lattice.active_sites();
    c.a_over_lambda = lattice.a_over_lambda;
    c.gamma = params.gamma;
    c.tunneling_t = params.tunneling_t;
    c.eps_dd = params.eps_dd;
    const int m = c.size();
    if (m < 1) throw std::invalid_argument("lattice has no active sites");
    c.positions.reserve(m);
    for (int s : c.site_index) c.positions.push_back(lattice.positions[s]);

    c.J = Eigen::MatrixXd::Zero(m, m);
    c.Gamma = Eigen::MatrixXd::Identity(m, m) * params.gamma;
    c.W = Eigen::MatrixXd::Zero(m, m);
    c.V = Eigen::MatrixXd::Zero(m, m);

    const double nn_cut = lattice.a_over_lambda * (1.0 + 1e-6);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const double r = (c.positions[i] - c.positions[j]).norm();
            if (r < 1e-9)
                throw std::invalid_argument("duplicate site positions at active indices " +
                                            std::to_string(i) + ", " + std::to_string(j));
            const std::complex<double> g = projected_greens(r);
            const double Jij = -(3.0 * kPi * params.gamma / kWavenumber) * g.real();
            const double Gij = (6.0 * kPi * params.gamma / kWavenumber) * g.imag();
            c.J(i, j) = c.J(j, i) = Jij;
            c.Gamma(i, j) = c.Gamma(j, i) = Gij;
            double w = Jij;
            if (r <= nn_cut) w += params.tunneling_t;
            c.W(i, j) = c.W(j, i) = w;
        }
    }

    if (m > 1) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.Gamma, Eigen::EigenvaluesOnly);
        const double lam_min = es.eigenvalues().minCoeff();
        if (lam_min < -1e-10 * params.gamma)
            throw std::runtime_error("collective decay matrix lost positivity (min eigenvalue " +
                                     std::to_string(lam_min) + ")");
    }
    return c;
}

Eigen::MatrixXd static_interactions(const LatticeConfiguration& lattice,
                                    const ModelParameters& params) {
    if (params.eps_dd < 0.0)
        throw std::invalid_argument("eps_dd must be non-negative, got " +
                                    std::to_string(params.eps_dd));
    const auto sites = lattice.active_sites();
    const int m = static_cast<int>(sites.size());
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const double r =
                (lattice.positions[sites[i]] - lattice.positions[sites[j]]).norm();
            const double x = kWavenumber * r;
            V(i, j) = V(j, i) = params.eps_dd * (3.0 * params.gamma / 8.0) / (x * x * x);
        }
    }
    return V;
}

CouplingMatrices build_couplings(const LatticeConfiguration& lattice,
                                 const ModelParameters& params) {
    CouplingMatrices c = dipole_couplings(lattice, params);
    c.V = static_interactions(lattice, params);
    return c;
}

void write_couplings_csv(std::ostream& os, const CouplingMatrices& c) {
    os << "row,col,J,Gamma,V\n";
    os.precision(17);
    for (int i = 0; i < c.size(); ++i)
        for (int j = 0; j < c.size(); ++j)
            os << i << ',' << j << ',' << c.J(i, j) << ',' << c.Gamma(i, j) << ',' << c.V(i, j)
               << '\n';
}

}  // namespace excirad
