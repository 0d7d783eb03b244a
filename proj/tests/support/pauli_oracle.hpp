#ifndef EXCIRAD_TESTS_PAULI_ORACLE_HPP
#define EXCIRAD_TESTS_PAULI_ORACLE_HPP

// Brute-force cross-check for the moment hierarchy: operators are kept as
// symbolic sums of site-local monomials, Heisenberg derivatives are expanded
// mechanically, and expectations beyond the stored order are closed with the
// generic cumulant partition sum.  Slow and simple on purpose.

#include <Eigen/Core>
#include <complex>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "excirad/couplings.hpp"
#include "excirad/cumulant.hpp"

namespace pauli {

using Cd = std::complex<double>;

enum Op : int { I = 0, Up = 1, Dn = 2, Zz = 3 };  // 1, sigma^+, sigma^-, sigma^z

using Monomial = std::vector<int>;       // one op code per site
using OpSum = std::map<Monomial, Cd>;    // operator as a sparse sum of monomials

// single-site product a * b in the {1, sigma^+, sigma^-, sigma^z} basis
inline std::vector<std::pair<int, Cd>> site_product(int a, int b) {
    if (a == I) return {{b, 1.0}};
    if (b == I) return {{a, 1.0}};
    if (a == Up && b == Up) return {};
    if (a == Dn && b == Dn) return {};
    if (a == Up && b == Dn) return {{I, 0.5}, {Zz, 0.5}};
    if (a == Dn && b == Up) return {{I, 0.5}, {Zz, -0.5}};
    if (a == Up && b == Zz) return {{Up, -1.0}};
    if (a == Zz && b == Up) return {{Up, 1.0}};
    if (a == Dn && b == Zz) return {{Dn, 1.0}};
    if (a == Zz && b == Dn) return {{Dn, -1.0}};
    return {{I, 1.0}};  // Zz * Zz
}

inline void accumulate_product(OpSum& out, const Monomial& a, const Monomial& b, Cd coeff) {
    const int m = static_cast<int>(a.size());
    std::vector<std::pair<Monomial, Cd>> partial{{Monomial(m, I), coeff}};
    for (int s = 0; s < m; ++s) {
        const auto factors = site_product(a[s], b[s]);
        if (factors.empty()) return;
        std::vector<std::pair<Monomial, Cd>> next;
        next.reserve(partial.size() * factors.size());
        for (const auto& [mono, cf] : partial)
            for (const auto& [op, w] : factors) {
                Monomial nm = mono;
                nm[s] = op;
                next.emplace_back(std::move(nm), cf * w);
            }
        partial = std::move(next);
    }
    for (const auto& [mono, cf] : partial) out[mono] += cf;
}

inline OpSum mul(const OpSum& A, const OpSum& B) {
    OpSum out;
    for (const auto& [ma, ca] : A)
        for (const auto& [mb, cb] : B) accumulate_product(out, ma, mb, ca * cb);
    return out;
}

inline void add(OpSum& A, const OpSum& B, Cd factor = 1.0) {
    for (const auto& [mono, cf] : B) A[mono] += factor * cf;
}

inline OpSum single(int m, int site, int op) {
    Monomial mono(m, I);
    mono[site] = op;
    return {{mono, Cd(1.0, 0.0)}};
}

inline OpSum hamiltonian(const Eigen::MatrixXd& W, const Eigen::MatrixXd& V, int m) {
    OpSum H;
    for (int l = 0; l < m; ++l)
        for (int k = 0; k < m; ++k) {
            if (l == k || W(l, k) == 0.0) continue;
            add(H, mul(single(m, l, Up), single(m, k, Dn)), W(l, k));
        }
    for (int l = 0; l < m; ++l)
        for (int k = l + 1; k < m; ++k) {
            if (V(l, k) == 0.0) continue;
            // n_l n_k = (1 + Z_l + Z_k + Z_l Z_k) / 4
            add(H, OpSum{{Monomial(m, I), 1.0}}, 0.25 * V(l, k));
            add(H, single(m, l, Zz), 0.25 * V(l, k));
            add(H, single(m, k, Zz), 0.25 * V(l, k));
            add(H, mul(single(m, l, Zz), single(m, k, Zz)), 0.25 * V(l, k));
        }
    return H;
}

// adjoint-generator image of O under the full master equation
inline OpSum heisenberg(const OpSum& O, const Eigen::MatrixXd& G,
                        const Eigen::MatrixXd& W, const Eigen::MatrixXd& V, int m) {
    OpSum dO;
    const OpSum H = hamiltonian(W, V, m);
    add(dO, mul(H, O), Cd(0.0, 1.0));
    add(dO, mul(O, H), Cd(0.0, -1.0));
    for (int l = 0; l < m; ++l)
        for (int k = 0; k < m; ++k) {
            if (G(l, k) == 0.0) continue;
            const OpSum pl = single(m, l, Up);
            const OpSum mk = single(m, k, Dn);
            const OpSum pm = mul(pl, mk);
            add(dO, mul(mul(pl, O), mk), G(l, k));
            add(dO, mul(pm, O), -0.5 * G(l, k));
            add(dO, mul(O, pm), -0.5 * G(l, k));
        }
    return dO;
}

// ---- expectation values with generic cumulant closure ----

inline Cd kappa1(const excirad::CumulantState& st, int site, int op) {
    return op == Zz ? Cd(st.z(site), 0.0) : Cd(0.0, 0.0);
}

inline Cd moment2(const excirad::CumulantState& st, int s1, int o1, int s2, int o2) {
    if (o1 == Up && o2 == Dn) return st.S(s1, s2);
    if (o1 == Dn && o2 == Up) return st.S(s2, s1);
    if (o1 == Zz && o2 == Zz) return Cd(st.C(s1, s2), 0.0);
    return Cd(0.0, 0.0);  // anomalous or charge-odd
}

inline Cd kappa2(const excirad::CumulantState& st, int s1, int o1, int s2, int o2) {
    return moment2(st, s1, o1, s2, o2) - kappa1(st, s1, o1) * kappa1(st, s2, o2);
}

inline Cd moment3(const excirad::CumulantState& st, const std::vector<int>& sites,
                  const std::vector<int>& ops) {
    int zc = 0, uc = 0, dc = 0;
    for (int o : ops) {
        zc += o == Zz;
        uc += o == Up;
        dc += o == Dn;
    }
    if (zc == 3) return Cd(st.F(sites[0], sites[1], sites[2]), 0.0);
    if (zc == 1 && uc == 1 && dc == 1) {
        int ks = -1, us = -1, ds = -1;
        for (int a = 0; a < 3; ++a) {
            if (ops[a] == Zz) ks = sites[a];
            if (ops[a] == Up) us = sites[a];
            if (ops[a] == Dn) ds = sites[a];
        }
        return st.T(ks, us, ds);
    }
    return Cd(0.0, 0.0);
}

inline Cd kappa3(const excirad::CumulantState& st, const std::vector<int>& sites,
                 const std::vector<int>& ops) {
    Cd k = moment3(st, sites, ops);
    k -= kappa1(st, sites[0], ops[0]) * kappa2(st, sites[1], ops[1], sites[2], ops[2]);
    k -= kappa1(st, sites[1], ops[1]) * kappa2(st, sites[0], ops[0], sites[2], ops[2]);
    k -= kappa1(st, sites[2], ops[2]) * kappa2(st, sites[0], ops[0], sites[1], ops[1]);
    k -= kappa1(st, sites[0], ops[0]) * kappa1(st, sites[1], ops[1]) *
         kappa1(st, sites[2], ops[2]);
    return k;
}

inline Cd expect(const excirad::CumulantState& st, const Monomial& mono) {
    std::vector<int> sites, ops;
    for (int s = 0; s < static_cast<int>(mono.size()); ++s)
        if (mono[s] != I) {
            sites.push_back(s);
            ops.push_back(mono[s]);
        }
    const int n = static_cast<int>(sites.size());
    auto k1 = [&](int a) { return kappa1(st, sites[a], ops[a]); };
    auto k2 = [&](int a, int b) {
        return kappa2(st, sites[a], ops[a], sites[b], ops[b]);
    };
    auto k3 = [&](int a, int b, int c) {
        return kappa3(st, {sites[a], sites[b], sites[c]}, {ops[a], ops[b], ops[c]});
    };
    switch (n) {
        case 0:
            return Cd(1.0, 0.0);
        case 1:
            return k1(0);
        case 2:
            return moment2(st, sites[0], ops[0], sites[1], ops[1]);
        case 3:
            if (st.order == 3) return moment3(st, sites, ops);
            // third cumulant dropped
            return k1(0) * k2(1, 2) + k1(1) * k2(0, 2) + k1(2) * k2(0, 1) +
                   k1(0) * k1(1) * k1(2);
        case 4: {
            // partition sum with the fourth joint cumulant set to zero
            Cd val = k1(0) * k1(1) * k1(2) * k1(3);
            const int pairs[6][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2},
                                     {1, 2, 0, 3}, {1, 3, 0, 2}, {2, 3, 0, 1}};
            for (const auto& p : pairs) val += k2(p[0], p[1]) * k1(p[2]) * k1(p[3]);
            val += k2(0, 1) * k2(2, 3) + k2(0, 2) * k2(1, 3) + k2(0, 3) * k2(1, 2);
            if (st.order == 3) {
                const int triples[4][4] = {
                    {0, 1, 2, 3}, {0, 1, 3, 2}, {0, 2, 3, 1}, {1, 2, 3, 0}};
                for (const auto& t : triples)
                    val += k3(t[0], t[1], t[2]) * k1(t[3]);
            }
            return val;
        }
        default:
            throw std::logic_error("monomial support exceeds the closed hierarchy");
    }
}

inline Cd expect(const excirad::CumulantState& st, const OpSum& A) {
    Cd val(0.0, 0.0);
    for (const auto& [mono, cf] : A) {
        if (std::abs(cf) < 1e-12) continue;  // cancelled terms leave zero entries
        val += cf * expect(st, mono);
    }
    return val;
}

// derivative of every stored moment, one symbolic Heisenberg expansion each
inline excirad::CumulantState oracle_rhs(const excirad::CumulantState& st,
                                         const excirad::CouplingMatrices& c) {
    const int m = st.n_sites;
    const Eigen::MatrixXd& G = c.Gamma;
    const Eigen::MatrixXd& W = c.W;
    const Eigen::MatrixXd& V = c.V;

    excirad::CumulantState deriv = st;
    deriv.data.setZero();

    for (int i = 0; i < m; ++i)
        deriv.z(i) = expect(st, heisenberg(single(m, i, Zz), G, W, V, m)).real();

    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            const OpSum pm = mul(single(m, i, Up), single(m, j, Dn));
            deriv.set_S(i, j, expect(st, heisenberg(pm, G, W, V, m)));
            const OpSum zz = mul(single(m, i, Zz), single(m, j, Zz));
            deriv.set_C(i, j, expect(st, heisenberg(zz, G, W, V, m)).real());
        }

    if (st.order == 3) {
        for (int k = 0; k < m; ++k)
            for (int i = 0; i < m; ++i)
                for (int j = i + 1; j < m; ++j) {
                    if (i == k || j == k) continue;
                    const OpSum zpm = mul(single(m, k, Zz),
                                          mul(single(m, i, Up), single(m, j, Dn)));
                    deriv.set_T(k, i, j, expect(st, heisenberg(zpm, G, W, V, m)));
                }
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b)
                for (int cc = b + 1; cc < m; ++cc) {
                    const OpSum zzz = mul(single(m, a, Zz),
                                          mul(single(m, b, Zz), single(m, cc, Zz)));
                    deriv.set_F(a, b, cc, expect(st, heisenberg(zzz, G, W, V, m)).real());
                }
    }
    return deriv;
}

}  // namespace pauli

#endif
