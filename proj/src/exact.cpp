#include "excirad/exact.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "excirad/ode.hpp"

namespace excirad {

namespace {

constexpr std::complex<double> kImag(0.0, 1.0);
constexpr int kSizeGuard = 14;
constexpr int kSectorDimGuard = 4096;
constexpr int kSnapshotGuard = 8;

void check_size_guard(int m, const char* where) {
    if (m > kSizeGuard)
        throw std::invalid_argument(std::string(where) + ": " + std::to_string(m) +
                                    " sites exceed the dense-evolution guard of " +
                                    std::to_string(kSizeGuard) +
                                    "; use the cumulant solver for larger systems");
    if (m < 1) throw std::invalid_argument(std::string(where) + ": no active sites");
}

double interaction_energy(std::uint32_t mask, const Eigen::MatrixXd& V) {
    double e = 0.0;
    for (std::uint32_t rest = mask; rest;) {
        const int i = std::countr_zero(rest);
        rest &= rest - 1;
        for (std::uint32_t rest2 = rest; rest2;) {
            const int j = std::countr_zero(rest2);
            rest2 &= rest2 - 1;
            e += V(i, j);
        }
    }
    return e;
}

}  // namespace

FockSectors FockSectors::build(int n_sites) {
    if (n_sites < 1 || n_sites > 20)
        throw std::invalid_argument("FockSectors supports 1..20 sites, got " +
                                    std::to_string(n_sites));
    FockSectors f;
    f.n_sites = n_sites;
    f.basis.assign(n_sites + 1, {});
    f.rank.assign(std::size_t(1) << n_sites, -1);
    for (std::uint32_t mask = 0; mask < (1u << n_sites); ++mask) {
        const int q = std::popcount(mask);
        f.rank[mask] = static_cast<int>(f.basis[q].size());
        f.basis[q].push_back(mask);
    }
    return f;
}

std::vector<std::uint32_t> sector_masks(int n_sites, int q) {
    if (n_sites < 1 || n_sites > 31)
        throw std::invalid_argument("sector_masks supports 1..31 sites");
    if (q < 0 || q > n_sites)
        throw std::invalid_argument("excitation sector " + std::to_string(q) +
                                    " out of range for " + std::to_string(n_sites) + " sites");
    std::vector<std::uint32_t> masks;
    if (q == 0) {
        masks.push_back(0);
        return masks;
    }
    std::uint32_t mask = (1u << q) - 1;
    const std::uint32_t limit = (q == n_sites) ? mask : (mask << (n_sites - q));
    for (;;) {
        masks.push_back(mask);
        if (mask == limit) break;
        // Gosper's hack: next mask with the same popcount
        const std::uint32_t c = mask & -mask;
        const std::uint32_t r = mask + c;
        mask = r | (((mask ^ r) >> 2) / c);
    }
    return masks;
}

int DensityMatrixState::sites() const {
    const auto dim = rho.rows();
    if (dim < 2 || rho.cols() != dim || (dim & (dim - 1)) != 0)
        throw std::invalid_argument("density matrix must be square with power-of-two size");
    return std::countr_zero(static_cast<std::uint64_t>(dim));
}

void DensityMatrixState::validate() const {
    const int m = sites();
    (void)m;
    const double tr_err = std::abs(rho.trace() - 1.0);
    if (tr_err > 1e-8)
        throw std::invalid_argument("density matrix trace deviates from 1 by " +
                                    std::to_string(tr_err));
    const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-10)
        throw std::invalid_argument("density matrix is not Hermitian (deviation " +
                                    std::to_string(herm) + ")");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (rho + rho.adjoint()),
                                                       Eigen::EigenvaluesOnly);
    const double lam_min = es.eigenvalues().minCoeff();
    if (lam_min < -1e-8)
        throw std::invalid_argument("density matrix has negative eigenvalue " +
                                    std::to_string(lam_min));
}

DensityMatrixState fock_density(const std::vector<bool>& occupancy) {
    const int m = static_cast<int>(occupancy.size());
    check_size_guard(m, "fock_density");
    std::uint32_t mask = 0;
    for (int i = 0; i < m; ++i)
        if (occupancy[i]) mask |= 1u << i;
    DensityMatrixState s;
    s.rho = Eigen::MatrixXcd::Zero(1 << m, 1 << m);
    s.rho(mask, mask) = 1.0;
    return s;
}

Eigen::MatrixXd build_hamiltonian(const CouplingMatrices& c) {
    const int m = c.size();
    check_size_guard(m, "build_hamiltonian");
    const auto dim = std::size_t(1) << m;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    for (std::uint32_t s = 0; s < dim; ++s) {
        h(s, s) = interaction_energy(s, c.V);
        for (int j = 0; j < m; ++j) {
            if (!(s >> j & 1u)) continue;
            for (int i = 0; i < m; ++i) {
                if (i == j || (s >> i & 1u)) continue;
                h((s & ~(1u << j)) | (1u << i), s) += c.W(i, j);
            }
        }
    }
    return h;
}

namespace {

Eigen::MatrixXd sector_decay_operator(const CouplingMatrices& c,
                                      const std::vector<std::uint32_t>& masks) {
    const int m = c.size();
    const int d = static_cast<int>(masks.size());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(d, d);
    for (int col = 0; col < d; ++col) {
        const std::uint32_t s = masks[col];
        for (int j = 0; j < m; ++j) {
            if (!(s >> j & 1u)) continue;
            D(col, col) += c.Gamma(j, j);
            for (int i = 0; i < m; ++i) {
                if (i == j || (s >> i & 1u)) continue;
                const std::uint32_t s2 = (s & ~(1u << j)) | (1u << i);
                const auto it = std::lower_bound(masks.begin(), masks.end(), s2);
                D(static_cast<int>(it - masks.begin()), col) += c.Gamma(i, j);
            }
        }
    }
    return D;
}

void append_sector_modes(const CouplingMatrices& c, int sector, DecaySpectrum& out) {
    const int m = c.size();
    const auto masks = sector_masks(m, sector);
    const int d = static_cast<int>(masks.size());
    if (d > kSectorDimGuard)
        throw std::invalid_argument("sector " + std::to_string(sector) + " has dimension " +
                                    std::to_string(d) + ", beyond the diagonalization guard");
    if (sector == 0) {
        DecayMode mode;
        mode.sector = 0;
        mode.rate = 0.0;
        mode.vector = Eigen::VectorXd::Ones(1);
        out.modes.push_back(std::move(mode));
        return;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sector_decay_operator(c, masks));
    const double scale = c.Gamma.diagonal().maxCoeff();
    for (int k = 0; k < d; ++k) {
        double rate = es.eigenvalues()[k];
        if (rate < -1e-10 * scale * sector)
            throw std::runtime_error("decay operator has negative eigenvalue " +
                                     std::to_string(rate));
        DecayMode mode;
        mode.sector = sector;
        mode.rate = std::max(rate, 0.0);
        mode.vector = es.eigenvectors().col(k);
        out.modes.push_back(std::move(mode));
    }
}

}  // namespace

bool DecaySpectrum::populations_filled() const {
    return !modes.empty() &&
           std::all_of(modes.begin(), modes.end(),
                       [](const DecayMode& m) { return m.population >= 0.0; });
}

DecaySpectrum decay_spectrum(const CouplingMatrices& couplings, int sector) {
    DecaySpectrum spec;
    spec.n_sites = couplings.size();
    if (sector < 0 || sector > spec.n_sites)
        throw std::invalid_argument("excitation sector " + std::to_string(sector) +
                                    " out of range");
    append_sector_modes(couplings, sector, spec);
    return spec;
}

DecaySpectrum full_decay_spectrum(const CouplingMatrices& couplings) {
    DecaySpectrum spec;
    spec.n_sites = couplings.size();
    for (int q = 0; q <= spec.n_sites; ++q) append_sector_modes(couplings, q, spec);
    return spec;
}

namespace {

using SparseC = Eigen::SparseMatrix<std::complex<double>>;

struct Block {
    int q = 0, qp = 0;   // row sector, column sector
    long off = 0;        // offset into the flat state, in complex entries
    int rows = 0, cols = 0;
    int src = -1;        // feeding block (q+1, qp+1), -1 at the top of a chain
};

struct Engine {
    int M = 0;
    FockSectors fs;
    Eigen::MatrixXd G;
    std::vector<SparseC> Heff;      // per sector
    std::vector<SparseC> HeffAdj;   // adjoints, materialized for dense*sparse
    // up[q][r] lists (site i not in state r, rank of state+|i> in sector q+1)
    std::vector<std::vector<std::vector<std::pair<int, int>>>> up;
    std::vector<Block> blocks;
    long n_complex = 0;

    std::complex<double>* at(Eigen::VectorXd& y, long off) const {
        return reinterpret_cast<std::complex<double>*>(y.data()) + off;
    }
    const std::complex<double>* at(const Eigen::VectorXd& y, long off) const {
        return reinterpret_cast<const std::complex<double>*>(y.data()) + off;
    }
};

Engine build_engine(const CouplingMatrices& c) {
    Engine e;
    e.M = c.size();
    e.fs = FockSectors::build(e.M);
    e.G = c.Gamma;

    e.Heff.resize(e.M + 1);
    e.HeffAdj.resize(e.M + 1);
    e.up.resize(e.M + 1);
    for (int q = 0; q <= e.M; ++q) {
        const auto& masks = e.fs.basis[q];
        const int d = e.fs.dim(q);
        std::vector<Eigen::Triplet<std::complex<double>>> trip;
        trip.reserve(static_cast<std::size_t>(d) * (1 + q * (e.M - q)));
        for (int col = 0; col < d; ++col) {
            const std::uint32_t s = masks[col];
            std::complex<double> diag(interaction_energy(s, c.V), 0.0);
            for (int j = 0; j < e.M; ++j)
                if (s >> j & 1u) diag -= 0.5 * kImag * c.Gamma(j, j);
            trip.emplace_back(col, col, diag);
            for (int j = 0; j < e.M; ++j) {
                if (!(s >> j & 1u)) continue;
                for (int i = 0; i < e.M; ++i) {
                    if (i == j || (s >> i & 1u)) continue;
                    const std::uint32_t s2 = (s & ~(1u << j)) | (1u << i);
                    trip.emplace_back(e.fs.rank[s2], col,
                                      std::complex<double>(c.W(i, j), -0.5 * c.Gamma(i, j)));
                }
            }
        }
        e.Heff[q].resize(d, d);
        e.Heff[q].setFromTriplets(trip.begin(), trip.end());
        e.HeffAdj[q] = SparseC(e.Heff[q].adjoint());

        e.up[q].resize(d);
        if (q < e.M)
            for (int r = 0; r < d; ++r) {
                const std::uint32_t s = masks[r];
                for (int i = 0; i < e.M; ++i)
                    if (!(s >> i & 1u)) e.up[q][r].emplace_back(i, e.fs.rank[s | (1u << i)]);
            }
    }
    return e;
}

// feed[s, s'] = sum_{m not in s, l not in s'} Gamma(l, m) rho_src[s + m, s' + l]
void add_feed(const Engine& e, const Block& b, const Block& src,
              const Eigen::VectorXd& y,
              Eigen::Map<Eigen::MatrixXcd>& out) {
    Eigen::Map<const Eigen::MatrixXcd> rho(e.at(y, src.off), src.rows, src.cols);
    const auto& row_lift = e.up[b.q];
    const auto& col_lift = e.up[b.qp];
    for (int cc = 0; cc < b.cols; ++cc) {
        const auto& ls = col_lift[cc];
        for (int rr = 0; rr < b.rows; ++rr) {
            const auto& ms = row_lift[rr];
            std::complex<double> acc(0.0, 0.0);
            for (const auto& [l, cl] : ls) {
                const std::complex<double>* col = rho.data() + std::size_t(cl) * src.rows;
                std::complex<double> part(0.0, 0.0);
                for (const auto& [m, rm] : ms) part += e.G(l, m) * col[rm];
                acc += part;
            }
            out(rr, cc) += acc;
        }
    }
}

struct MasterRhs {
    const Engine* e;
    mutable std::vector<Eigen::MatrixXcd> scratch;

    explicit MasterRhs(const Engine& engine) : e(&engine) {
        scratch.resize(engine.blocks.size());
        for (std::size_t k = 0; k < engine.blocks.size(); ++k)
            scratch[k].resize(engine.blocks[k].rows, engine.blocks[k].cols);
    }

    void operator()(const Eigen::VectorXd& y, Eigen::VectorXd& dy, double) const {
        dy.resize(y.size());
        for (std::size_t k = 0; k < e->blocks.size(); ++k) {
            const Block& b = e->blocks[k];
            Eigen::Map<const Eigen::MatrixXcd> rho(e->at(y, b.off), b.rows, b.cols);
            Eigen::Map<Eigen::MatrixXcd> out(e->at(dy, b.off), b.rows, b.cols);
            if (b.q == b.qp) {
                scratch[k].noalias() = e->Heff[b.q] * rho;
                scratch[k] *= -kImag;
                out = scratch[k] + scratch[k].adjoint();
            } else {
                scratch[k].noalias() = e->Heff[b.q] * rho;
                out.noalias() = rho * e->HeffAdj[b.qp];
                out = kImag * (out - scratch[k]);
            }
            if (b.src >= 0) add_feed(*e, b, e->blocks[b.src], y, out);
        }
    }
};

}  // namespace

ExactTrajectory evolve_master(const DensityMatrixState& rho0,
                              const CouplingMatrices& couplings, double t_max,
                              double dt_out, const EvolveOptions& options) {
    const int m = couplings.size();
    check_size_guard(m, "evolve_master");
    if (rho0.rho.rows() != (1l << m) || rho0.rho.cols() != (1l << m))
        throw std::invalid_argument("density matrix dimension does not match the couplings");
    if (!(t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
    if (!(dt_out > 0.0)) throw std::invalid_argument("dt_out must be positive");
    if (options.record_snapshots && m > kSnapshotGuard)
        throw std::invalid_argument("snapshot recording is limited to " +
                                    std::to_string(kSnapshotGuard) + " sites");
    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(couplings.Gamma,
                                                          Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() <
            -1e-10 * couplings.Gamma.diagonal().maxCoeff())
            throw std::invalid_argument("collective decay matrix is not positive semidefinite");
    }
    if (rho0.rho.rows() <= 1024) {
        rho0.validate();
    } else {
        if (std::abs(rho0.rho.trace() - 1.0) > 1e-8)
            throw std::invalid_argument("initial density matrix trace is not 1");
        if ((rho0.rho - rho0.rho.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("initial density matrix is not Hermitian");
    }

    Engine engine = build_engine(couplings);

    // collect every sector block with initial weight, plus the blocks its
    // decay chain feeds
    std::map<std::pair<int, int>, int> index;
    for (int q = m; q >= 0; --q)
        for (int qp = m; qp >= 0; --qp) {
            if (index.count({q, qp})) continue;
            double w = 0.0;
            for (std::uint32_t s : engine.fs.basis[q]) {
                for (std::uint32_t sp : engine.fs.basis[qp])
                    w = std::max(w, std::abs(rho0.rho(s, sp)));
                if (w > 0.0) break;
            }
            if (w == 0.0) continue;
            for (int k = 0; std::min(q, qp) - k >= 0; ++k)
                index.emplace(std::pair<int, int>(q - k, qp - k), -1);
        }
    if (index.empty()) throw std::invalid_argument("initial density matrix is zero");

    long off = 0;
    for (auto& [key, idx] : index) {
        Block b;
        b.q = key.first;
        b.qp = key.second;
        b.rows = engine.fs.dim(b.q);
        b.cols = engine.fs.dim(b.qp);
        b.off = off;
        off += static_cast<long>(b.rows) * b.cols;
        idx = static_cast<int>(engine.blocks.size());
        engine.blocks.push_back(b);
    }
    engine.n_complex = off;
    for (Block& b : engine.blocks) {
        const auto it = index.find({b.q + 1, b.qp + 1});
        b.src = (it == index.end()) ? -1 : it->second;
    }

    Eigen::VectorXd y = Eigen::VectorXd::Zero(2 * engine.n_complex);
    for (const Block& b : engine.blocks) {
        Eigen::Map<Eigen::MatrixXcd> blk(engine.at(y, b.off), b.rows, b.cols);
        for (int cc = 0; cc < b.cols; ++cc)
            for (int rr = 0; rr < b.rows; ++rr)
                blk(rr, cc) = rho0.rho(engine.fs.basis[b.q][rr], engine.fs.basis[b.qp][cc]);
    }

    ExactTrajectory traj;
    const DecaySpectrum* spec = options.spectrum;
    if (spec && spec->n_sites != m)
        throw std::invalid_argument("spectrum site count does not match the couplings");

    double nx0 = -1.0;
    auto observe = [&](const Eigen::VectorXd& state, double t) {
        Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(m, m);
        std::complex<double> tr(0.0, 0.0);
        for (const Block& b : engine.blocks) {
            if (b.q != b.qp) continue;
            Eigen::Map<const Eigen::MatrixXcd> rho(engine.at(state, b.off), b.rows, b.cols);
            tr += rho.trace();
            const auto& masks = engine.fs.basis[b.q];
            for (int cc = 0; cc < b.cols; ++cc) {
                const std::uint32_t sp = masks[cc];
                for (int j = 0; j < m; ++j) {
                    if (!(sp >> j & 1u)) continue;
                    S(j, j) += rho(cc, cc);
                    const std::uint32_t base = sp & ~(1u << j);
                    for (int i = 0; i < m; ++i) {
                        if (i == j || (sp >> i & 1u)) continue;
                        S(j, i) += rho(engine.fs.rank[base | (1u << i)], cc);
                    }
                }
            }
        }
        const double nx = S.diagonal().real().sum();
        const double tr_err = std::abs(tr - 1.0);
        if (tr_err > options.trace_tol)
            throw std::runtime_error("trace drift " + std::to_string(tr_err) + " at t = " +
                                     std::to_string(t) + " exceeds the tolerance");
        traj.times.push_back(t);
        traj.coherences.push_back(std::move(S));
        traj.total_excitons.push_back(nx);
        traj.trace_error.push_back(tr_err);

        if (spec) {
            Eigen::VectorXd p = Eigen::VectorXd::Zero(spec->modes.size());
            for (std::size_t a = 0; a < spec->modes.size(); ++a) {
                const DecayMode& mode = spec->modes[a];
                const auto it = index.find({mode.sector, mode.sector});
                if (it == index.end()) continue;
                const Block& b = engine.blocks[it->second];
                Eigen::Map<const Eigen::MatrixXcd> rho(engine.at(state, b.off), b.rows,
                                                       b.cols);
                const Eigen::VectorXcd v = mode.vector.cast<std::complex<double>>();
                p[a] = std::real(v.dot(rho * v));
            }
            traj.mode_populations.push_back(std::move(p));
        }
        if (options.record_snapshots) {
            Eigen::MatrixXcd full = Eigen::MatrixXcd::Zero(1 << m, 1 << m);
            for (const Block& b : engine.blocks) {
                Eigen::Map<const Eigen::MatrixXcd> rho(engine.at(state, b.off), b.rows,
                                                       b.cols);
                for (int cc = 0; cc < b.cols; ++cc)
                    for (int rr = 0; rr < b.rows; ++rr)
                        full(engine.fs.basis[b.q][rr], engine.fs.basis[b.qp][cc]) =
                            rho(rr, cc);
            }
            traj.snapshots.push_back(std::move(full));
        }
        if (nx0 < 0.0) nx0 = nx;
        return !(options.stop_fraction > 0.0 && nx < options.stop_fraction * nx0);
    };

    MasterRhs rhs(engine);
    OdeOptions ode;
    ode.rtol = options.rtol;
    ode.atol = options.atol;
    const double t_end = integrate_grid(rhs, y, 0.0, t_max, dt_out, observe, ode);

    traj.final_state.time = t_end;
    traj.final_state.rho = Eigen::MatrixXcd::Zero(1 << m, 1 << m);
    for (const Block& b : engine.blocks) {
        Eigen::Map<const Eigen::MatrixXcd> blk(engine.at(y, b.off), b.rows, b.cols);
        for (int cc = 0; cc < b.cols; ++cc)
            for (int rr = 0; rr < b.rows; ++rr)
                traj.final_state.rho(engine.fs.basis[b.q][rr], engine.fs.basis[b.qp][cc]) =
                    blk(rr, cc);
    }
    return traj;
}

DecaySpectrum eigenstate_populations(const ExactTrajectory& trajectory,
                                     const DecaySpectrum& spectrum) {
    const auto n_modes = spectrum.modes.size();
    const auto n_times = trajectory.times.size();
    if (n_times < 2) throw std::invalid_argument("trajectory has fewer than two samples");

    std::vector<Eigen::VectorXd> p(n_times);
    if (!trajectory.snapshots.empty()) {
        if (trajectory.snapshots.size() != n_times)
            throw std::invalid_argument("snapshot count does not match the time grid");
        const int m = spectrum.n_sites;
        if (trajectory.snapshots.front().rows() != (1l << m))
            throw std::invalid_argument("snapshot dimension does not match the spectrum");
        std::vector<std::vector<std::uint32_t>> masks(m + 1);
        for (int q = 0; q <= m; ++q) masks[q] = sector_masks(m, q);
        for (std::size_t k = 0; k < n_times; ++k) {
            p[k].resize(n_modes);
            const Eigen::MatrixXcd& rho = trajectory.snapshots[k];
            for (std::size_t a = 0; a < n_modes; ++a) {
                const DecayMode& mode = spectrum.modes[a];
                const auto& sm = masks[mode.sector];
                std::complex<double> val(0.0, 0.0);
                for (std::size_t rr = 0; rr < sm.size(); ++rr)
                    for (std::size_t cc = 0; cc < sm.size(); ++cc)
                        val += mode.vector[rr] * mode.vector[cc] * rho(sm[rr], sm[cc]);
                p[k][a] = std::real(val);
            }
        }
    } else if (!trajectory.mode_populations.empty()) {
        if (trajectory.mode_populations.size() != n_times ||
            trajectory.mode_populations.front().size() != static_cast<long>(n_modes))
            throw std::invalid_argument(
                "recorded mode populations do not match the spectrum");
        for (std::size_t k = 0; k < n_times; ++k) p[k] = trajectory.mode_populations[k];
    } else {
        throw std::invalid_argument(
            "trajectory carries neither snapshots nor projected mode populations");
    }

    Eigen::VectorXd integral = Eigen::VectorXd::Zero(n_modes);
    for (std::size_t k = 0; k + 1 < n_times; ++k)
        integral += 0.5 * (trajectory.times[k + 1] - trajectory.times[k]) * (p[k] + p[k + 1]);

    double norm = 0.0;
    for (std::size_t a = 0; a < n_modes; ++a)
        if (spectrum.modes[a].sector >= 1) norm += integral[a];
    if (!(norm > 0.0))
        throw std::invalid_argument("no excited-state weight in the trajectory");

    DecaySpectrum out = spectrum;
    for (std::size_t a = 0; a < n_modes; ++a)
        out.modes[a].population =
            (out.modes[a].sector >= 1) ? integral[a] / norm : 0.0;
    return out;
}

}  // namespace excirad
