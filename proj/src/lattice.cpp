#include "excirad/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace excirad {

FillingPattern pattern_from_string(const std::string& name) {
    if (name == "quarter") return FillingPattern::quarter;
    if (name == "third") return FillingPattern::third;
    if (name == "half") return FillingPattern::half;
    if (name == "two_thirds") return FillingPattern::two_thirds;
    if (name == "full") return FillingPattern::full;
    throw std::invalid_argument("unknown filling pattern '" + name +
                                "' (expected quarter, third, half, two_thirds or full)");
}

std::string pattern_name(FillingPattern p) {
    switch (p) {
        case FillingPattern::quarter: return "quarter";
        case FillingPattern::third: return "third";
        case FillingPattern::half: return "half";
        case FillingPattern::two_thirds: return "two_thirds";
        case FillingPattern::full: return "full";
    }
    throw std::logic_error("unreachable pattern");
}

double pattern_fraction(FillingPattern p) {
    switch (p) {
        case FillingPattern::quarter: return 0.25;
        case FillingPattern::third: return 1.0 / 3.0;
        case FillingPattern::half: return 0.5;
        case FillingPattern::two_thirds: return 2.0 / 3.0;
        case FillingPattern::full: return 1.0;
    }
    throw std::logic_error("unreachable pattern");
}

int LatticeConfiguration::occupied_count() const {
    return static_cast<int>(std::count(occupancy.begin(), occupancy.end(), true));
}

int LatticeConfiguration::blocked_count() const {
    return static_cast<int>(std::count(blocked.begin(), blocked.end(), true));
}

std::vector<int> LatticeConfiguration::active_sites() const {
    std::vector<int> out;
    out.reserve(size());
    for (int s = 0; s < size(); ++s)
        if (!blocked[s]) out.push_back(s);
    return out;
}

std::vector<bool> LatticeConfiguration::active_occupancy() const {
    std::vector<bool> out;
    out.reserve(active_count());
    for (int s = 0; s < size(); ++s)
        if (!blocked[s]) out.push_back(occupancy[s]);
    return out;
}

double LatticeConfiguration::exciton_fraction() const {
    return size() ? static_cast<double>(occupied_count()) / size() : 0.0;
}

LatticeConfiguration build_triangular(int n_rows, int n_cols, double a_over_lambda) {
    if (n_rows < 1 || n_cols < 1)
        throw std::invalid_argument("lattice dimensions must be positive, got " +
                                    std::to_string(n_rows) + "x" + std::to_string(n_cols));
    if (!(a_over_lambda > 0.0))
        throw std::invalid_argument("lattice constant a/lambda must be positive");

    LatticeConfiguration lat;
    lat.n_rows = n_rows;
    lat.n_cols = n_cols;
    lat.a_over_lambda = a_over_lambda;
    lat.positions.reserve(static_cast<std::size_t>(n_rows) * n_cols);
    const double a = a_over_lambda;
    const Eigen::Vector2d a1(a, 0.0);
    const Eigen::Vector2d a2(0.5 * a, 0.5 * std::sqrt(3.0) * a);
    for (int m = 0; m < n_rows; ++m)
        for (int n = 0; n < n_cols; ++n)
            lat.positions.push_back(n * a1 + m * a2);
    lat.occupancy.assign(lat.positions.size(), false);
    lat.blocked.assign(lat.positions.size(), false);
    return lat;
}

namespace {

bool in_pattern(FillingPattern p, int n, int m) {
    switch (p) {
        case FillingPattern::quarter: return n % 2 == 0 && m % 2 == 0;
        case FillingPattern::third: return (n + 2 * m) % 3 == 0;
        case FillingPattern::two_thirds: return (n + 2 * m) % 3 != 0;
        case FillingPattern::half: return m % 2 == 0;
        case FillingPattern::full: return true;
    }
    return false;
}

void require_commensurate(FillingPattern p, int n_rows, int n_cols) {
    auto fail = [&](const std::string& what) {
        throw std::invalid_argument("pattern '" + pattern_name(p) + "' needs " + what +
                                    ", got " + std::to_string(n_rows) + "x" +
                                    std::to_string(n_cols));
    };
    switch (p) {
        case FillingPattern::quarter:
            if (n_rows % 2 || n_cols % 2) fail("even n_rows and n_cols");
            break;
        case FillingPattern::third:
        case FillingPattern::two_thirds:
            if (n_rows % 3 || n_cols % 3) fail("n_rows and n_cols divisible by 3");
            break;
        case FillingPattern::half:
            if (n_rows % 2) fail("even n_rows");
            break;
        case FillingPattern::full:
            break;
    }
}

}  // namespace

std::vector<int> pattern_sites(const LatticeConfiguration& lattice, FillingPattern pattern) {
    std::vector<int> sites;
    for (int m = 0; m < lattice.n_rows; ++m)
        for (int n = 0; n < lattice.n_cols; ++n)
            if (in_pattern(pattern, n, m)) sites.push_back(lattice.site_index(n, m));
    std::sort(sites.begin(), sites.end());
    return sites;
}

LatticeConfiguration ordered_filling(const LatticeConfiguration& lattice, FillingPattern pattern) {
    require_commensurate(pattern, lattice.n_rows, lattice.n_cols);
    LatticeConfiguration out = lattice;
    std::fill(out.occupancy.begin(), out.occupancy.end(), false);
    for (int s : pattern_sites(lattice, pattern)) {
        if (out.blocked[s])
            throw std::invalid_argument("ordered pattern site " + std::to_string(s) +
                                        " is blocked");
        out.occupancy[s] = true;
    }
    return out;
}

LatticeConfiguration random_filling(const LatticeConfiguration& lattice, double f_x,
                                    std::uint64_t seed) {
    if (f_x < 0.0 || f_x > 1.0)
        throw std::invalid_argument("exciton fraction must lie in [0, 1], got " +
                                    std::to_string(f_x));
    std::vector<int> candidates = lattice.active_sites();
    const auto want = static_cast<long>(std::llround(f_x * lattice.size()));
    if (want > static_cast<long>(candidates.size()))
        throw std::invalid_argument("f_x = " + std::to_string(f_x) + " wants " +
                                    std::to_string(want) + " excitons but only " +
                                    std::to_string(candidates.size()) + " unblocked sites exist");

    // Partial Fisher-Yates with a fixed engine and a fixed draw rule, so a
    // (lattice, f_x, seed) triple always yields the same configuration.
    std::mt19937_64 rng(seed);
    for (long k = 0; k < want; ++k) {
        const std::uint64_t span = candidates.size() - static_cast<std::uint64_t>(k);
        std::swap(candidates[k], candidates[k + rng() % span]);
    }

    LatticeConfiguration out = lattice;
    std::fill(out.occupancy.begin(), out.occupancy.end(), false);
    for (long k = 0; k < want; ++k) out.occupancy[candidates[k]] = true;
    out.seed = seed;
    return out;
}

LatticeConfiguration doped_configuration(const LatticeConfiguration& lattice,
                                         FillingPattern exciton_pattern, double f_e) {
    if (f_e < 0.0 || f_e > 1.0)
        throw std::invalid_argument("electron fraction must lie in [0, 1], got " +
                                    std::to_string(f_e));

    const int n_sites = lattice.size();
    std::vector<int> excitons = pattern_sites(lattice, exciton_pattern);

    // Non-commensurate pattern requests keep the nearest integer exciton
    // count (ties to even), trimmed in canonical pattern order.
    const double target = pattern_fraction(exciton_pattern) * n_sites;
    const auto n_x = static_cast<std::size_t>(std::nearbyint(target));
    if (n_x < excitons.size()) excitons.resize(n_x);

    std::vector<bool> is_exciton(n_sites, false);
    for (int s : excitons) is_exciton[s] = true;

    const auto n_blocked = static_cast<long>(std::llround(f_e * n_sites));
    std::vector<int> complement;
    for (int s = 0; s < n_sites; ++s)
        if (!is_exciton[s]) complement.push_back(s);
    if (n_blocked > static_cast<long>(complement.size()))
        throw std::invalid_argument("f_e = " + std::to_string(f_e) + " wants " +
                                    std::to_string(n_blocked) + " blocked sites but only " +
                                    std::to_string(complement.size()) +
                                    " non-exciton sites exist");

    LatticeConfiguration out = lattice;
    std::fill(out.occupancy.begin(), out.occupancy.end(), false);
    std::fill(out.blocked.begin(), out.blocked.end(), false);
    for (int s : excitons) out.occupancy[s] = true;
    for (long k = 0; k < n_blocked; ++k) out.blocked[complement[k]] = true;
    return out;
}

nlohmann::json LatticeConfiguration::to_json() const {
    nlohmann::json j;
    j["n_rows"] = n_rows;
    j["n_cols"] = n_cols;
    j["a_over_lambda"] = a_over_lambda;
    auto& pos = j["positions"] = nlohmann::json::array();
    for (const auto& p : positions) pos.push_back({p.x(), p.y()});
    j["occupancy"] = occupancy;
    j["blocked"] = blocked;
    if (seed)
        j["seed"] = *seed;
    else
        j["seed"] = nullptr;
    return j;
}

LatticeConfiguration LatticeConfiguration::from_json(const nlohmann::json& j) {
    LatticeConfiguration lat =
        build_triangular(j.at("n_rows").get<int>(), j.at("n_cols").get<int>(),
                         j.at("a_over_lambda").get<double>());
    const auto& pos = j.at("positions");
    if (static_cast<int>(pos.size()) != lat.size())
        throw std::invalid_argument("position list size does not match lattice dimensions");
    for (int s = 0; s < lat.size(); ++s) {
        Eigen::Vector2d p(pos[s][0].get<double>(), pos[s][1].get<double>());
        if ((p - lat.positions[s]).norm() > 1e-12 * std::max(1.0, lat.a_over_lambda))
            throw std::invalid_argument("position " + std::to_string(s) +
                                        " is not on the stated triangular lattice");
    }
    lat.occupancy = j.at("occupancy").get<std::vector<bool>>();
    lat.blocked = j.at("blocked").get<std::vector<bool>>();
    if (static_cast<int>(lat.occupancy.size()) != lat.size() ||
        static_cast<int>(lat.blocked.size()) != lat.size())
        throw std::invalid_argument("occupancy/blocked size does not match lattice");
    if (!j.at("seed").is_null()) lat.seed = j.at("seed").get<std::uint64_t>();
    for (int s = 0; s < lat.size(); ++s)
        if (lat.occupancy[s] && lat.blocked[s])
            throw std::invalid_argument("site " + std::to_string(s) +
                                        " is both occupied and blocked");
    return lat;
}

}  // namespace excirad
