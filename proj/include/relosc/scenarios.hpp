#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "relosc/barrier.hpp"
#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"
#include "relosc/expr.hpp"

namespace relosc {

/// Relativistic pendulum: force = f_ext - gamma p + alpha sin(q), barriers -pi/2, pi/2.
struct PendulumParams {
    double alpha = 1.0;
    double gamma = 0.0;
    std::string f_ext = "0";
    double period = 1.0;
    bool operator==(const PendulumParams&) const = default;
};

/// Particle on the curve y(q): force = f_ext - gamma p - alpha y'(q), barriers q1, q2.
struct CurveParams {
    std::string y = "sin(q)";
    double alpha = 1.0;
    double gamma = 0.0;
    std::string f_ext = "0";
    double period = 1.0;
    double q1 = 0.0;
    double q2 = std::numbers::pi;
    bool operator==(const CurveParams&) const = default;
};

/// Pendulum in a rotating field of strength f_mag(t) and direction psi(t);
/// barriers psi + pi/2, psi + 3 pi/2.
struct RotatingFieldParams {
    std::string f_mag = "1";
    std::string psi = "0";
    double gamma = 0.0;
    double period = 1.0;
    bool operator==(const RotatingFieldParams&) const = default;
};

using ScenarioParams = std::variant<PendulumParams, CurveParams, RotatingFieldParams>;

inline std::string_view scenario_name(const ScenarioParams& params) {
    static constexpr std::array<std::string_view, 3> names{"pendulum", "curve", "rotating_field"};
    return names[params.index()];
}

struct Scenario {
    ScenarioParams params;
    Problem problem;
    BarrierPair barriers;
    std::vector<HypothesisCheck> hypotheses;

    std::string_view name() const { return scenario_name(params); }

    bool hypotheses_hold() const {
        return std::all_of(hypotheses.begin(), hypotheses.end(), [](const auto& h) { return h.satisfied; });
    }
};

namespace detail {

/// Shortest round-trip decimal, parenthesized when negative.
inline std::string literal(double v) {
    if (!std::isfinite(v)) throw ValidationError("scenario parameters must be finite");
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), std::fabs(v));
    std::string s(buf.data(), res.ptr);
    return std::signbit(v) && v != 0.0 ? "(-" + s + ")" : s;
}

inline constexpr std::size_t kHypothesisGrid = 2048;

/// Minimum of margin(x) over [lo, hi] sampled on a grid and refined by golden section.
inline HypothesisCheck grid_check(std::string name, const std::function<double(double)>& margin, double lo,
                                  double hi, std::size_t n, bool include_end) {
    const std::size_t count = include_end ? n + 1 : n;
    const double step = (hi - lo) / double(n);
    double best_x = lo;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < count; ++i) {
        const double x = lo + double(i) * step;
        const double m = margin(x);
        if (m < best) {
            best = m;
            best_x = x;
            best_i = i;
        }
    }
    if (std::isfinite(best)) {
        const double a = std::max(lo, lo + (double(best_i) - 1.0) * step);
        const double b = std::min(hi, lo + (double(best_i) + 1.0) * step);
        const auto [x, m] = golden_section_min(margin, a, b, 1e-12 * std::max(1.0, hi - lo));
        if (m < best) {
            best = m;
            best_x = x;
        }
    }
    return {std::move(name), best > 0.0, best, best_x};
}

}  // namespace detail

inline Scenario pendulum(const PendulumParams& prm) {
    if (!(prm.alpha > 0.0)) throw ValidationError("pendulum: alpha must be positive");
    if (!(prm.period > 0.0)) throw ValidationError("pendulum: period must be positive");
    const Expression f_ext = Expression::parse(prm.f_ext, VarSet::all());
    const std::string force =
        "(" + prm.f_ext + ") - " + detail::literal(prm.gamma) + "*p + " + detail::literal(prm.alpha) + "*sin(q)";

    Scenario sc{prm, Problem(force, prm.period, Topology::circle), BarrierPair("-pi/2", "pi/2", prm.period), {}};
    const double half_pi = std::numbers::pi / 2;
    auto fe = [&](double t, double q) { return f_ext.eval(sc.problem.reduce_time(t), q, 0.0); };
    sc.hypotheses.push_back(detail::grid_check(
        "f_ext_lower", [&](double t) { return prm.alpha - fe(t, -half_pi); }, 0.0, prm.period,
        detail::kHypothesisGrid, false));
    sc.hypotheses.push_back(detail::grid_check(
        "f_ext_upper", [&](double t) { return fe(t, half_pi) + prm.alpha; }, 0.0, prm.period,
        detail::kHypothesisGrid, false));
    return sc;
}

inline Scenario curve_constrained(const CurveParams& prm) {
    if (!(prm.alpha > 0.0)) throw ValidationError("curve: alpha must be positive");
    if (!(prm.period > 0.0)) throw ValidationError("curve: period must be positive");
    if (!(prm.q1 < prm.q2)) throw ValidationError("curve: q1 must be less than q2");
    const Expression y = Expression::parse(prm.y, VarSet{Var::q});
    const Expression f_ext = Expression::parse(prm.f_ext, VarSet::all());
    const std::string force = "(" + prm.f_ext + ") - " + detail::literal(prm.gamma) + "*p - " +
                              detail::literal(prm.alpha) + "*dq(" + prm.y + ")";

    Scenario sc{prm, Problem(force, prm.period, Topology::line),
                BarrierPair(detail::literal(prm.q1), detail::literal(prm.q2), prm.period), {}};

    auto slope = [&](double q) { return y.eval_jet(Var::q, 0.0, q, 0.0).d1; };
    constexpr double kSlopeTol = 1e-6;
    sc.hypotheses.push_back({"y_prime_q1", std::fabs(slope(prm.q1) - 1.0) <= kSlopeTol,
                             kSlopeTol - std::fabs(slope(prm.q1) - 1.0), prm.q1});
    sc.hypotheses.push_back({"y_prime_q2", std::fabs(slope(prm.q2) + 1.0) <= kSlopeTol,
                             kSlopeTol - std::fabs(slope(prm.q2) + 1.0), prm.q2});

    // y > 0 strictly inside (q1, q2); argmin_t carries the q location here
    const std::size_t n = detail::kHypothesisGrid;
    const double dq = (prm.q2 - prm.q1) / double(n);
    HypothesisCheck positive{"y_positive", true, std::numeric_limits<double>::infinity(), prm.q1};
    for (std::size_t i = 1; i < n; ++i) {
        const double q = prm.q1 + double(i) * dq;
        const double v = y.eval(0.0, q, 0.0);
        if (v < positive.worst_margin) {
            positive.worst_margin = v;
            positive.argmin_t = q;
        }
    }
    positive.satisfied = positive.worst_margin > 0.0;
    sc.hypotheses.push_back(positive);

    auto fe = [&](double t, double q) { return f_ext.eval(sc.problem.reduce_time(t), q, 0.0); };
    sc.hypotheses.push_back(detail::grid_check(
        "f_ext_lower", [&](double t) { return prm.alpha - fe(t, prm.q1); }, 0.0, prm.period, n, false));
    sc.hypotheses.push_back(detail::grid_check(
        "f_ext_upper", [&](double t) { return fe(t, prm.q2) + prm.alpha; }, 0.0, prm.period, n, false));
    return sc;
}

inline Scenario rotating_field(const RotatingFieldParams& prm) {
    if (!(prm.period > 0.0)) throw ValidationError("rotating_field: period must be positive");
    const Expression f_mag = Expression::parse(prm.f_mag, VarSet::time_only());
    const Expression psi = Expression::parse(prm.psi, VarSet::time_only());
    const std::string p = "(" + prm.psi + ")";
    const std::string force = "(" + prm.f_mag + ")*(cos(q)*sin" + p + " - sin(q)*cos" + p + ") - " +
                              detail::literal(prm.gamma) + "*p";

    Scenario sc{prm, Problem(force, prm.period, Topology::circle),
                BarrierPair(p + " + pi/2", p + " + 3*pi/2", prm.period), {}};

    sc.hypotheses.push_back(detail::grid_check(
        "psi_slope", [&](double t) { return 1.0 - std::fabs(psi.eval_jet2(t).d1); }, 0.0, prm.period,
        detail::kHypothesisGrid, false));
    sc.hypotheses.push_back(detail::grid_check(
        "field_strength",
        [&](double t) {
            const Jet2 j = psi.eval_jet2(t);
            const double w = 1.0 - j.d1 * j.d1;
            if (!(w > 0.0)) return -std::numeric_limits<double>::infinity();
            return f_mag.eval(t, 0.0, 0.0) - std::fabs(j.d2) / (w * std::sqrt(w)) - std::fabs(prm.gamma * j.d1);
        },
        0.0, prm.period, detail::kHypothesisGrid, false));
    return sc;
}

inline Scenario build_scenario(const ScenarioParams& params) {
    return std::visit(
        [](const auto& prm) -> Scenario {
            using T = std::decay_t<decltype(prm)>;
            if constexpr (std::is_same_v<T, PendulumParams>) return pendulum(prm);
            else if constexpr (std::is_same_v<T, CurveParams>) return curve_constrained(prm);
            else return rotating_field(prm);
        },
        params);
}

}  // namespace relosc
