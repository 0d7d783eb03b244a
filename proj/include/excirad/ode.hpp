#ifndef EXCIRAD_ODE_HPP
#define EXCIRAD_ODE_HPP

#include <boost/numeric/odeint.hpp>
#include <boost/numeric/odeint/external/eigen/eigen.hpp>

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <string>

namespace excirad {

struct OdeOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double initial_dt = 1e-3;
    double min_dt = 1e-13;  // below this a step rejection is treated as failure
};

// Adaptive dopri5 over [t0, t1] with observation at t0, t0 + dt_out, ..., t1.
// The integration state is a flat real vector; rhs(y, dydt, t) fills the
// derivative, observe(y, t) is called exactly on the output grid and may
// return false to stop early.  Returns the last observed time.
template <typename Rhs, typename Observer>
double integrate_grid(Rhs&& rhs, Eigen::VectorXd& y, double t0, double t1, double dt_out,
                      Observer&& observe, const OdeOptions& opts = {}) {
    namespace odeint = boost::numeric::odeint;
    using Stepper = odeint::runge_kutta_dopri5<Eigen::VectorXd, double, Eigen::VectorXd,
                                               double, odeint::vector_space_algebra>;
    if (!(t1 > t0)) throw std::invalid_argument("integrate_grid needs t1 > t0");
    if (!(dt_out > 0.0)) throw std::invalid_argument("integrate_grid needs dt_out > 0");

    auto ctrl = odeint::make_controlled<Stepper>(opts.atol, opts.rtol);
    // odeint copies the system functor on every step; keep that copy cheap
    auto sys = [&rhs](const Eigen::VectorXd& s, Eigen::VectorXd& dsdt, double t) {
        rhs(s, dsdt, t);
    };
    double t = t0;
    double dt = opts.initial_dt;
    if (!observe(y, t)) return t;

    const auto n_out = static_cast<long>(std::ceil((t1 - t0) / dt_out - 1e-9));
    for (long k = 1; k <= n_out; ++k) {
        const double t_next = (k == n_out) ? t1 : t0 + k * dt_out;
        while (t < t_next) {
            const bool clamped = dt > t_next - t;
            double dt_io = clamped ? t_next - t : dt;
            if (ctrl.try_step(sys, y, t, dt_io) == odeint::success) {
                // a grid-clamped step must not shrink the working step size
                if (!clamped || dt_io > dt) dt = dt_io;
            } else {
                dt = dt_io;
                if (dt < opts.min_dt)
                    throw std::runtime_error("step size underflow at t = " +
                                             std::to_string(t));
            }
        }
        if (!observe(y, t)) return t;
    }
    return t;
}

}  // namespace excirad

#endif
