#ifndef EXCIRAD_LATTICE_HPP
#define EXCIRAD_LATTICE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace excirad {

// Canonical ordered exciton fillings on the triangular lattice.
// third  : sqrt(3) x sqrt(3) sublattice, sites with (n + 2m) % 3 == 0
// two_thirds : complement of third (honeycomb)
// quarter: 2 x 2 sublattice, n and m both even
// half   : stripes, every second row (m even)
enum class FillingPattern { quarter, third, half, two_thirds, full };

FillingPattern pattern_from_string(const std::string& name);
std::string pattern_name(FillingPattern p);
double pattern_fraction(FillingPattern p);

// A finite triangular lattice with per-site exciton occupancy and
// electron blocking.  Positions are in units of the transition
// wavelength lambda; site index is m * n_cols + n for row m, column n.
struct LatticeConfiguration {
    int n_rows = 0;
    int n_cols = 0;
    double a_over_lambda = 0.0;
    std::vector<Eigen::Vector2d> positions;
    std::vector<bool> occupancy;  // exciton present
    std::vector<bool> blocked;    // site removed from the Hilbert space
    std::optional<std::uint64_t> seed;  // set by random_filling

    int size() const { return static_cast<int>(positions.size()); }
    int site_index(int n, int m) const { return m * n_cols + n; }

    int occupied_count() const;
    int blocked_count() const;
    int active_count() const { return size() - blocked_count(); }

    // Indices of non-blocked sites, ascending.
    std::vector<int> active_sites() const;
    // Occupancy restricted to active sites, in active_sites() order.
    std::vector<bool> active_occupancy() const;

    double exciton_fraction() const;

    nlohmann::json to_json() const;
    static LatticeConfiguration from_json(const nlohmann::json& j);
};

// Bare lattice: all sites active, nothing occupied.
LatticeConfiguration build_triangular(int n_rows, int n_cols, double a_over_lambda);

// Occupy the canonical pattern sites.  Throws std::invalid_argument when
// the lattice dimensions are not commensurate with the pattern, naming
// the required divisibility.
LatticeConfiguration ordered_filling(const LatticeConfiguration& lattice, FillingPattern pattern);

// Occupy round(f_x * N_active) unblocked sites uniformly at random.
// Deterministic for a fixed seed.
LatticeConfiguration random_filling(const LatticeConfiguration& lattice, double f_x,
                                    std::uint64_t seed);

// Exciton pattern plus round(f_e * N) electron-blocked sites placed on the
// complementary (non-pattern) sites in site-index order.  A pattern that is
// not commensurate with the lattice is truncated to the nearest integer
// exciton count (ties to even) in canonical pattern order.
LatticeConfiguration doped_configuration(const LatticeConfiguration& lattice,
                                         FillingPattern exciton_pattern, double f_e);

// Sites of the canonical pattern in site-index order, without commensurability
// enforcement (used by doped_configuration's rounding path).
std::vector<int> pattern_sites(const LatticeConfiguration& lattice, FillingPattern pattern);

}  // namespace excirad

#endif
