#include "excirad/cumulant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "excirad/ode.hpp"

namespace excirad {

namespace {

using Cd = std::complex<double>;

constexpr int kMaxSites = 64;

int pair_count(int m) { return m * (m - 1) / 2; }

int triple_count(int m) { return m * (m - 1) * (m - 2) / 6; }

// rank of i < j among ordered pairs of [0, m)
int pair_rank(int m, int i, int j) { return (2 * m - i - 1) * i / 2 + (j - i - 1); }

// rank of a < b < c among ordered triples of [0, m)
int triple_rank(int m, int a, int b, int c) {
    const int head = triple_count(m) - triple_count(m - a);
    return head + pair_rank(m - a - 1, b - a - 1, c - a - 1);
}

void check_site(const CumulantState& st, int i) {
    if (i < 0 || i >= st.n_sites) throw std::out_of_range("site index out of range");
}

void sort2(int& i, int& j) {
    if (i > j) std::swap(i, j);
}

void sort3(int& a, int& b, int& c) {
    sort2(a, b);
    sort2(b, c);
    sort2(a, b);
}

struct Layout {
    int m = 0;
    int pairs = 0;
    int off_s = 0;
    int off_c = 0;
    int off_t = 0;
    int off_f = 0;
    bool triples = false;

    Layout(int n_sites, int order)
        : m(n_sites),
          pairs(pair_count(n_sites)),
          off_s(n_sites),
          off_c(n_sites + 2 * pairs),
          off_t(off_c + pairs),
          off_f(off_t + 2 * n_sites * pairs),
          triples(order == 3) {}

    std::size_t size() const {
        if (!triples) return static_cast<std::size_t>(off_t);
        return static_cast<std::size_t>(off_f + triple_count(m));
    }
};

// scratch buffers and precomputed contractions for one rhs evaluation
struct Workspace {
    int m = 0;
    int order = 3;
    Layout lay{0, 3};
    const CouplingMatrices* c = nullptr;

    Eigen::MatrixXcd Lam, Lamc, S, LS, SLc, CB, CB2;
    Eigen::MatrixXd Cm, VC;
    Eigen::VectorXd z, vsum, Vz, q;
    Eigen::VectorXcd r;
    std::vector<Eigen::MatrixXcd> T, E1, E2;

    void prepare(const CouplingMatrices& couplings, int order_in) {
        c = &couplings;
        m = couplings.size();
        order = order_in;
        lay = Layout(m, order);
        Lam = (0.5 * couplings.Gamma - Cd(0.0, 1.0) * couplings.W).cast<Cd>();
        Lam.diagonal().setZero();
        Lamc = Lam.conjugate();
        S.resize(m, m);
        Cm.resize(m, m);
        z.resize(m);
        vsum = couplings.V.rowwise().sum();
        if (order == 3) {
            T.assign(m, Eigen::MatrixXcd::Zero(m, m));
            E1.assign(m, Eigen::MatrixXcd(m, m));
            E2.assign(m, Eigen::MatrixXcd(m, m));
        }
    }

    void rhs(const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        const Eigen::MatrixXd& G = c->Gamma;
        const Eigen::MatrixXd& W = c->W;
        const Eigen::MatrixXd& V = c->V;

        z = y.head(m);
        S.setZero();
        Cm.setZero();
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const int p = pair_rank(m, i, j);
                const Cd s(y[lay.off_s + 2 * p], y[lay.off_s + 2 * p + 1]);
                S(i, j) = s;
                S(j, i) = std::conj(s);
                Cm(i, j) = Cm(j, i) = y[lay.off_c + p];
            }
        if (order == 3)
            for (int k = 0; k < m; ++k) {
                T[k].setZero();
                for (int i = 0; i < m; ++i)
                    for (int j = i + 1; j < m; ++j) {
                        if (i == k || j == k) continue;
                        const int slot = lay.off_t + 2 * (k * lay.pairs + pair_rank(m, i, j));
                        const Cd t(y[slot], y[slot + 1]);
                        T[k](i, j) = t;
                        T[k](j, i) = std::conj(t);
                    }
            }

        LS = Lam * S;
        SLc = S * Lamc;
        r = Lamc.cwiseProduct(S).rowwise().sum();
        q = 2.0 * Lam.cwiseProduct(S.transpose()).rowwise().sum().real();
        Vz = V * z;
        VC = V * Cm;
        if (order == 3) {
            CB = Eigen::MatrixXcd::Zero(m, m);
            CB2 = Eigen::MatrixXcd::Zero(m, m);
            for (int k = 0; k < m; ++k) {
                E1[k] = Lam * T[k];
                E2[k] = T[k] * Lamc;
                CB += V.col(k).cast<Cd>().asDiagonal() * T[k];
                CB2 += T[k] * V.col(k).cast<Cd>().asDiagonal();
            }
        }

        auto f3 = [&](int a, int b, int cc) {
            sort3(a, b, cc);
            return y[lay.off_f + triple_rank(m, a, b, cc)];
        };

        dy.resize(y.size());
        dy.setZero();
        const Cd ih(0.0, 0.5);

        for (int i = 0; i < m; ++i) dy[i] = -G(i, i) * (1.0 + z[i]) - 4.0 * r[i].real();

        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const int p = pair_rank(m, i, j);
                const Cd sij = S(i, j);

                Cd ds = -0.5 * (G(i, i) + G(j, j)) * sij +
                        G(i, j) * (0.25 * (z[i] + z[j]) + 0.5 * Cm(i, j)) +
                        ih * W(i, j) * (z[j] - z[i]) +
                        ih * (vsum[i] - vsum[j]) * sij;
                double dc = -(G(i, i) * z[j] + G(j, j) * z[i]) -
                            (G(i, i) + G(j, j)) * Cm(i, j) + 4.0 * G(i, j) * sij.real();
                if (order == 3) {
                    ds += E1[i](i, j) + E2[j](i, j) + ih * (CB(i, j) - CB2(i, j));
                    dc += -4.0 * (E2[j](i, i) + E2[i](j, j)).real();
                } else {
                    ds += z[i] * LS(i, j) + z[j] * SLc(i, j) +
                          ih * sij *
                              ((Vz[i] - V(i, j) * z[j]) - (Vz[j] - V(i, j) * z[i]));
                    dc += -4.0 * (z[j] * (r[i] - Lamc(i, j) * S(i, j)) +
                                  z[i] * (r[j] - Lamc(j, i) * S(j, i)))
                                     .real();
                }
                dy[lay.off_s + 2 * p] = ds.real();
                dy[lay.off_s + 2 * p + 1] = ds.imag();
                dy[lay.off_c + p] = dc;
            }

        if (order != 3) return;

        for (int k = 0; k < m; ++k)
            for (int i = 0; i < m; ++i)
                for (int j = i + 1; j < m; ++j) {
                    if (i == k || j == k) continue;
                    const Cd t0 = T[k](i, j);
                    const Cd sij = S(i, j);

                    Cd dt = -(0.5 * (G(i, i) + G(j, j)) + G(k, k)) * t0 -
                            G(k, k) * sij;
                    dt += Cd(0.0, 1.0) * (W(j, k) * S(i, k) - W(i, k) * S(k, j)) +
                          ih * W(i, j) * (Cm(k, j) - Cm(k, i));
                    dt += ih * (V(i, k) - V(j, k)) * (sij + t0);
                    dt += -G(i, k) * (0.5 * S(k, j) + T[i](k, j)) -
                          G(j, k) * (0.5 * S(i, k) + T[j](i, k)) +
                          G(i, j) * (0.25 * (Cm(k, i) + Cm(k, j)) + 0.5 * f3(k, i, j));
                    dt += ih * (vsum[i] - vsum[j] - V(i, k) + V(j, k)) * t0;

                    const double qt = q[k] - 2.0 * (Lam(k, i) * S(i, k)).real() -
                                      2.0 * (Lam(k, j) * S(j, k)).real();
                    dt += -2.0 * sij * qt -
                          2.0 * S(i, k) * (LS(k, j) - Lam(k, i) * sij) -
                          2.0 * S(k, j) * (SLc(i, k) - sij * Lamc(j, k));

                    dt += z[k] * (E1[i](i, j) - Lam(i, k) * T[i](k, j)) +
                          z[i] * E1[k](i, j) +
                          (Cm(k, i) - 2.0 * z[k] * z[i]) * (LS(i, j) - Lam(i, k) * S(k, j));
                    dt += z[k] * (E2[j](i, j) - T[j](i, k) * Lamc(k, j)) +
                          z[j] * E2[k](i, j) +
                          (Cm(k, j) - 2.0 * z[k] * z[j]) * (SLc(i, j) - S(i, k) * Lamc(k, j));

                    const double w1 = (Vz[i] - V(i, j) * z[j] - V(i, k) * z[k]) -
                                      (Vz[j] - V(i, j) * z[i] - V(j, k) * z[k]);
                    const double w2 = (VC(i, k) - V(i, j) * Cm(j, k)) -
                                      (VC(j, k) - V(i, j) * Cm(i, k));
                    const Cd cb = (CB(i, j) - V(i, k) * t0) - (CB2(i, j) - V(j, k) * t0);
                    dt += ih * (w1 * t0 + z[k] * cb + sij * (w2 - 2.0 * z[k] * w1));

                    const int slot = lay.off_t + 2 * (k * lay.pairs + pair_rank(m, i, j));
                    dy[slot] = dt.real();
                    dy[slot + 1] = dt.imag();
                }

        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b)
                for (int cc = b + 1; cc < m; ++cc) {
                    const double f = f3(a, b, cc);
                    double df = -(G(a, a) * (Cm(b, cc) + f) + G(b, b) * (Cm(a, cc) + f) +
                                  G(cc, cc) * (Cm(a, b) + f));
                    df += 4.0 * (G(a, b) * T[cc](a, b).real() +
                                 G(b, cc) * T[a](b, cc).real() +
                                 G(a, cc) * T[b](cc, a).real());
                    const int xs[3] = {a, b, cc};
                    for (int leg = 0; leg < 3; ++leg) {
                        const int x = xs[leg];
                        const int u = xs[(leg + 1) % 3];
                        const int v = xs[(leg + 2) % 3];
                        const Cd sum =
                            z[u] * (E2[v](x, x) - T[v](x, u) * Lamc(x, u)) +
                            z[v] * (E2[u](x, x) - T[u](x, v) * Lamc(x, v)) +
                            (Cm(u, v) - 2.0 * z[u] * z[v]) *
                                (r[x] - Lamc(x, u) * S(x, u) - Lamc(x, v) * S(x, v));
                        df += -4.0 * sum.real();
                    }
                    dy[lay.off_f + triple_rank(m, a, b, cc)] = df;
                }
    }
};

}  // namespace

std::size_t CumulantState::state_size(int n_sites, int order) {
    if (n_sites < 1) throw std::invalid_argument("cumulant state needs at least one site");
    if (order != 2 && order != 3)
        throw std::invalid_argument("cumulant order must be 2 or 3");
    return Layout(n_sites, order).size();
}

double CumulantState::z(int i) const {
    check_site(*this, i);
    return data[i];
}

double& CumulantState::z(int i) {
    check_site(*this, i);
    return data[i];
}

std::complex<double> CumulantState::S(int i, int j) const {
    check_site(*this, i);
    check_site(*this, j);
    if (i == j) throw std::invalid_argument("pair moment needs distinct sites");
    const bool flip = i > j;
    if (flip) std::swap(i, j);
    const Layout lay(n_sites, order);
    const int p = pair_rank(n_sites, i, j);
    const Cd s(data[lay.off_s + 2 * p], data[lay.off_s + 2 * p + 1]);
    return flip ? std::conj(s) : s;
}

double CumulantState::C(int i, int j) const {
    check_site(*this, i);
    check_site(*this, j);
    if (i == j) throw std::invalid_argument("pair moment needs distinct sites");
    sort2(i, j);
    return data[Layout(n_sites, order).off_c + pair_rank(n_sites, i, j)];
}

std::complex<double> CumulantState::T(int k, int i, int j) const {
    check_site(*this, k);
    check_site(*this, i);
    check_site(*this, j);
    if (k == i || k == j || i == j)
        throw std::invalid_argument("triple moment needs distinct sites");
    if (order != 3) throw std::logic_error("triples are stored at order 3 only");
    const bool flip = i > j;
    if (flip) std::swap(i, j);
    const Layout lay(n_sites, order);
    const int slot = lay.off_t + 2 * (k * lay.pairs + pair_rank(n_sites, i, j));
    const Cd t(data[slot], data[slot + 1]);
    return flip ? std::conj(t) : t;
}

double CumulantState::F(int a, int b, int c) const {
    check_site(*this, a);
    check_site(*this, b);
    check_site(*this, c);
    if (a == b || b == c || a == c)
        throw std::invalid_argument("triple moment needs distinct sites");
    if (order != 3) throw std::logic_error("triples are stored at order 3 only");
    sort3(a, b, c);
    return data[Layout(n_sites, order).off_f + triple_rank(n_sites, a, b, c)];
}

void CumulantState::set_S(int i, int j, std::complex<double> value) {
    check_site(*this, i);
    check_site(*this, j);
    if (i == j) throw std::invalid_argument("pair moment needs distinct sites");
    if (i > j) {
        std::swap(i, j);
        value = std::conj(value);
    }
    const Layout lay(n_sites, order);
    const int p = pair_rank(n_sites, i, j);
    data[lay.off_s + 2 * p] = value.real();
    data[lay.off_s + 2 * p + 1] = value.imag();
}

void CumulantState::set_C(int i, int j, double value) {
    check_site(*this, i);
    check_site(*this, j);
    if (i == j) throw std::invalid_argument("pair moment needs distinct sites");
    sort2(i, j);
    data[Layout(n_sites, order).off_c + pair_rank(n_sites, i, j)] = value;
}

void CumulantState::set_T(int k, int i, int j, std::complex<double> value) {
    check_site(*this, k);
    check_site(*this, i);
    check_site(*this, j);
    if (k == i || k == j || i == j)
        throw std::invalid_argument("triple moment needs distinct sites");
    if (order != 3) throw std::logic_error("triples are stored at order 3 only");
    if (i > j) {
        std::swap(i, j);
        value = std::conj(value);
    }
    const Layout lay(n_sites, order);
    const int slot = lay.off_t + 2 * (k * lay.pairs + pair_rank(n_sites, i, j));
    data[slot] = value.real();
    data[slot + 1] = value.imag();
}

void CumulantState::set_F(int a, int b, int c, double value) {
    check_site(*this, a);
    check_site(*this, b);
    check_site(*this, c);
    if (a == b || b == c || a == c)
        throw std::invalid_argument("triple moment needs distinct sites");
    if (order != 3) throw std::logic_error("triples are stored at order 3 only");
    sort3(a, b, c);
    data[Layout(n_sites, order).off_f + triple_rank(n_sites, a, b, c)] = value;
}

void CumulantState::validate() const {
    if (order != 2 && order != 3)
        throw std::invalid_argument("cumulant order must be 2 or 3");
    if (n_sites < 1) throw std::invalid_argument("cumulant state needs at least one site");
    if (static_cast<std::size_t>(data.size()) != state_size(n_sites, order))
        throw std::invalid_argument("cumulant state size does not match its layout");
    if (!data.allFinite())
        throw std::invalid_argument("cumulant state contains non-finite moments");
    constexpr double slack = 1e-6;
    for (int i = 0; i < n_sites; ++i) {
        const double n = occupation(i);
        if (n < -slack || n > 1.0 + slack)
            throw std::invalid_argument("site occupation " + std::to_string(n) +
                                        " is outside [0, 1]");
    }
}

CumulantState init_from_fock(const std::vector<bool>& occupancy, int order) {
    const int m = static_cast<int>(occupancy.size());
    CumulantState st;
    st.n_sites = m;
    st.order = order;
    st.data = Eigen::VectorXd::Zero(CumulantState::state_size(m, order));
    for (int i = 0; i < m; ++i) st.z(i) = occupancy[i] ? 1.0 : -1.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) st.set_C(i, j, st.z(i) * st.z(j));
    if (order == 3)
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b)
                for (int c = b + 1; c < m; ++c)
                    st.set_F(a, b, c, st.z(a) * st.z(b) * st.z(c));
    return st;
}

CumulantState init_from_fock(const LatticeConfiguration& config, int order) {
    return init_from_fock(config.active_occupancy(), order);
}

CumulantState cumulant_rhs(const CumulantState& state, const CouplingMatrices& couplings) {
    state.validate();
    if (state.n_sites != couplings.size())
        throw std::invalid_argument("cumulant state does not match the couplings");
    Workspace ws;
    ws.prepare(couplings, state.order);
    CumulantState deriv = state;
    ws.rhs(state.data, deriv.data);
    return deriv;
}

CumulantTrajectory evolve_cumulant(const CumulantState& state0,
                                   const CouplingMatrices& couplings, double t_max,
                                   double dt_out, const CumulantOptions& options) {
    state0.validate();
    const int m = couplings.size();
    if (state0.n_sites != m)
        throw std::invalid_argument("cumulant state does not match the couplings");
    if (m > kMaxSites)
        throw std::invalid_argument("cumulant solver supports at most " +
                                    std::to_string(kMaxSites) + " active sites");
    if (!(t_max > 0.0)) throw std::invalid_argument("t_max must be positive");
    if (!(dt_out > 0.0)) throw std::invalid_argument("dt_out must be positive");

    Workspace ws;
    ws.prepare(couplings, state0.order);
    const Layout lay(m, state0.order);

    CumulantTrajectory traj;
    double nx0 = -1.0;
    auto observe = [&](const Eigen::VectorXd& y, double t) {
        Eigen::MatrixXcd S(m, m);
        double nx = 0.0;
        for (int i = 0; i < m; ++i) {
            const double n = 0.5 * (1.0 + y[i]);
            if (!std::isfinite(n) || std::abs(n) > 1.0 + options.breakdown_tol)
                throw std::runtime_error("cumulant closure breakdown at t = " +
                                         std::to_string(t) + ": <n_" +
                                         std::to_string(i) + "> = " + std::to_string(n));
            S(i, i) = n;
            nx += n;
        }
        for (int i = 0; i < m; ++i)
            for (int j = i + 1; j < m; ++j) {
                const int p = pair_rank(m, i, j);
                const Cd s(y[lay.off_s + 2 * p], y[lay.off_s + 2 * p + 1]);
                S(i, j) = s;
                S(j, i) = std::conj(s);
            }
        traj.times.push_back(t);
        traj.coherences.push_back(std::move(S));
        traj.total_excitons.push_back(nx);
        if (nx0 < 0.0) nx0 = nx;
        return !(options.stop_fraction > 0.0 && nx < options.stop_fraction * nx0);
    };

    OdeOptions ode;
    ode.rtol = options.rtol;
    ode.atol = options.atol;
    Eigen::VectorXd y = state0.data;
    auto rhs = [&ws](const Eigen::VectorXd& s, Eigen::VectorXd& dsdt, double) {
        ws.rhs(s, dsdt);
    };
    double t_end = state0.time;
    try {
        t_end = integrate_grid(rhs, y, state0.time, state0.time + t_max, dt_out, observe, ode);
    } catch (const std::runtime_error& err) {
        const std::string what = err.what();
        if (what.find("closure breakdown") != std::string::npos) throw;
        throw std::runtime_error("cumulant closure breakdown: " + what);
    }

    traj.final_state = state0;
    traj.final_state.data = y;
    traj.final_state.time = t_end;
    return traj;
}

}  // namespace excirad
