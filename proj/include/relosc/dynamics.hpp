#pragma once

#include <cmath>
#include <string>
#include <string_view>
#include <utility>

#include "relosc/error.hpp"
#include "relosc/expr.hpp"

namespace relosc {

/// Point (t, q, p) of the extended phase space; p = dq/dt in light-speed units.
struct State {
    double t = 0.0;
    double q = 0.0;
    double p = 0.0;
};

enum class Topology { line, circle };

inline std::string_view to_string(Topology topo) { return topo == Topology::line ? "line" : "circle"; }

inline Topology topology_from_string(std::string_view s) {
    if (s == "line") return Topology::line;
    if (s == "circle") return Topology::circle;
    throw ValidationError("unknown topology '" + std::string(s) + "' (expected \"line\" or \"circle\")");
}

/// Forced relativistic particle: d/dt (p / sqrt(1 - p^2)) = f(t, q, p), f T-periodic in t.
///
/// The coordinate topology is carried for reporting; all numerics run in the
/// universal cover q in R.
class Problem {
public:
    Problem(Expression force, double period, Topology topology = Topology::line)
        : force_(std::move(force)), period_(period), topology_(topology) {
        if (!(period_ > 0.0) || !std::isfinite(period_))
            throw ValidationError("period must be a finite positive number");
        if (!force_.variables().subset_of(VarSet::all()))
            throw ValidationError("force may only reference t, q, p");
    }

    Problem(std::string_view force_text, double period, Topology topology = Topology::line)
        : Problem(Expression::parse(force_text, VarSet::all()), period, topology) {}

    const Expression& force() const { return force_; }
    double period() const { return period_; }
    Topology topology() const { return topology_; }

    /// t reduced into [0, T).
    double reduce_time(double t) const {
        double r = t - period_ * std::floor(t / period_);
        if (r >= period_) r -= period_;
        return r < 0.0 ? 0.0 : r;
    }

    double force_at(double t, double q, double p) const { return force_.eval(reduce_time(t), q, p); }

private:
    Expression force_;
    double period_;
    Topology topology_;
};

inline double velocity_to_momentum(double p) {
    if (!(std::fabs(p) < 1.0)) throw DomainError("luminal velocity: |p| must be < 1");
    return p / std::sqrt((1.0 - p) * (1.0 + p));
}

inline double momentum_to_velocity(double u) {
    if (!std::isfinite(u)) throw DomainError("momentum must be finite");
    // u / sqrt(1 + u^2), arranged to stay accurate for large |u|
    if (std::fabs(u) > 1.0) return std::copysign(1.0 / std::sqrt(1.0 + 1.0 / (u * u)), u);
    return u / std::sqrt(1.0 + u * u);
}

struct PhaseVelocity {
    double dq = 0.0;
    double dp = 0.0;
};

/// (dq, dp) = (p, (1 - p^2)^{3/2} f); dp is exactly 0 on the invariant lines |p| = 1.
inline PhaseVelocity rhs(const State& s, const Problem& problem) {
    const double ap = std::fabs(s.p);
    if (ap > 1.0 || std::isnan(s.p)) throw DomainError("|p| > 1 is outside the phase space");
    if (ap == 1.0) return {s.p, 0.0};
    const double w = 1.0 - s.p * s.p;
    return {s.p, w * std::sqrt(w) * problem.force_at(s.t, s.q, s.p)};
}

struct MomentumVelocity {
    double dq = 0.0;
    double du = 0.0;
};

/// Right-hand side in the momentum variable u: dq = p(u), du = f(t, q, p(u)).
inline MomentumVelocity rhs_regularized(double t, double q, double u, const Problem& problem) {
    const double p = momentum_to_velocity(u);
    return {p, problem.force_at(t, q, p)};
}

}  // namespace relosc
