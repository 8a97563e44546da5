#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"
#include "relosc/expr.hpp"
#include "relosc/parallel.hpp"

namespace relosc {

enum class Side { lower, upper };

inline std::string_view to_string(Side s) { return s == Side::lower ? "lower" : "upper"; }

/// |dh/dt| >= 1 where a sub-luminal barrier slope is required.
class SlopeViolation : public DomainError {
public:
    SlopeViolation(Side side, double t, double slope)
        : DomainError("slope violation on " + std::string(to_string(side)) + " barrier at t = " +
                      std::to_string(t) + ": |dh/dt| = " + std::to_string(std::fabs(slope)) + " >= 1"),
          side_(side), t_(t) {}

    Side side() const { return side_; }
    double time() const { return t_; }

private:
    Side side_;
    double t_;
};

/// Two C^2, T-periodic functions of t bounding the band h1(t) <= q <= h2(t).
class BarrierPair {
public:
    static constexpr double kDefaultPeriodicityTol = 1e-9;

    BarrierPair(Expression h1, Expression h2, double period, double periodicity_tol = kDefaultPeriodicityTol)
        : h1_(std::move(h1)), h2_(std::move(h2)), period_(period) {
        if (!(period_ > 0.0) || !std::isfinite(period_))
            throw ValidationError("barrier period must be a finite positive number");
        check_expression(h1_, "h1");
        check_expression(h2_, "h2");
        check_periodic(h1_, "h1", periodicity_tol);
        check_periodic(h2_, "h2", periodicity_tol);
    }

    BarrierPair(std::string_view h1, std::string_view h2, double period,
                double periodicity_tol = kDefaultPeriodicityTol)
        : BarrierPair(Expression::parse(h1, VarSet::time_only()), Expression::parse(h2, VarSet::time_only()), period,
                      periodicity_tol) {}

    const Expression& h1() const { return h1_; }
    const Expression& h2() const { return h2_; }
    const Expression& barrier(Side s) const { return s == Side::lower ? h1_ : h2_; }
    double period() const { return period_; }

    Jet2 jet(Side s, double t) const { return barrier(s).eval_jet2(t); }

private:
    static void check_expression(const Expression& h, const char* name) {
        if (!h.variables().subset_of(VarSet::time_only()))
            throw ValidationError(std::string(name) + " may only reference t");
        if (h.uses(Func::abs)) throw ValidationError(std::string(name) + " must be C^2; abs is not allowed");
        if (h.uses_derivative()) throw ValidationError(std::string(name) + " may not use dq(.)");
    }

    void check_periodic(const Expression& h, const char* name, double tol) const {
        const Jet2 a = h.eval_jet2(0.0);
        const Jet2 b = h.eval_jet2(period_);
        const std::array<double, 3> gaps{std::fabs(a.value - b.value), std::fabs(a.d1 - b.d1),
                                         std::fabs(a.d2 - b.d2)};
        static constexpr std::array<const char*, 3> what{"value", "first derivative", "second derivative"};
        for (std::size_t k = 0; k < 3; ++k)
            if (!(gaps[k] <= tol))
                throw ValidationError(std::string(name) + " is not T-periodic: " + what[k] + " differs by " +
                                      std::to_string(gaps[k]) + " between t = 0 and t = T");
    }

    Expression h1_;
    Expression h2_;
    double period_;
};

/// (1 - dh^2)^{3/2} f(t, h, dh) - d2h for the chosen barrier. The certificate
/// needs it negative on the lower barrier and positive on the upper one.
inline double condition_residual(double t, Side side, const BarrierPair& barriers, const Problem& problem) {
    const Jet2 h = barriers.jet(side, t);
    if (!(std::fabs(h.d1) < 1.0)) throw SlopeViolation(side, t, h.d1);
    const double w = 1.0 - h.d1 * h.d1;
    return w * std::sqrt(w) * problem.force_at(t, h.value, h.d1) - h.d2;
}

struct HypothesisCheck {
    std::string name;
    bool satisfied = false;
    double worst_margin = 0.0;
    double argmin_t = 0.0;
};

struct CertificateReport {
    std::vector<HypothesisCheck> hypotheses;
    std::size_t grid_size = 0;
    bool refined = false;

    bool passed() const {
        return !hypotheses.empty() &&
               std::all_of(hypotheses.begin(), hypotheses.end(), [](const auto& h) { return h.satisfied; });
    }

    const HypothesisCheck& get(std::string_view name) const {
        for (const auto& h : hypotheses)
            if (h.name == name) return h;
        throw ValidationError("no hypothesis named '" + std::string(name) + "'");
    }
};

inline constexpr std::array<std::string_view, 5> kHypothesisNames{"ordering", "slope1", "slope2",
                                                                  "condition_lower", "condition_upper"};

namespace detail {

/// All five margins at t; positive means the strict inequality holds.
inline std::array<double, 5> certificate_margins(double t, const BarrierPair& barriers, const Problem& problem) {
    constexpr double kNoSlope = -std::numeric_limits<double>::infinity();
    const Jet2 h1 = barriers.jet(Side::lower, t);
    const Jet2 h2 = barriers.jet(Side::upper, t);
    std::array<double, 5> m{};
    m[0] = h2.value - h1.value;
    m[1] = 1.0 - std::fabs(h1.d1);
    m[2] = 1.0 - std::fabs(h2.d1);
    m[3] = m[1] > 0.0 ? -condition_residual(t, Side::lower, barriers, problem) : kNoSlope;
    m[4] = m[2] > 0.0 ? condition_residual(t, Side::upper, barriers, problem) : kNoSlope;
    return m;
}

template <class F>
std::pair<double, double> golden_section_min(F&& f, double a, double b, double tol) {
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c);
    double fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return fc < fd ? std::pair{c, fc} : std::pair{d, fd};
}

}  // namespace detail

/// Samples every barrier-certificate hypothesis on a uniform grid over [0, T)
/// and optionally refines each worst point by golden-section search. A passing
/// report is a sampled certificate, not a rigorous proof.
inline CertificateReport verify_certificate(const BarrierPair& barriers, const Problem& problem,
                                            std::size_t grid_n, bool refine = true) {
    if (grid_n < 16) throw ValidationError("certificate grid needs at least 16 points");
    const double period = problem.period();
    if (std::fabs(barriers.period() - period) > 1e-12 * period)
        throw ValidationError("barrier period differs from the problem period");

    const double dt = period / double(grid_n);
    std::vector<std::array<double, 5>> margins(grid_n);
    parallel_for(grid_n, [&](std::size_t i) {
        margins[i] = detail::certificate_margins(double(i) * dt, barriers, problem);
    });

    CertificateReport report;
    report.grid_size = grid_n;
    report.refined = refine;
    for (std::size_t k = 0; k < kHypothesisNames.size(); ++k) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < grid_n; ++i)
            if (margins[i][k] < margins[worst][k]) worst = i;
        double best_t = double(worst) * dt;
        double best = margins[worst][k];

        if (refine && std::isfinite(best)) {
            auto f = [&](double t) { return detail::certificate_margins(t, barriers, problem)[k]; };
            const double lo = best_t - dt;
            const double hi = best_t + dt;
            const auto [t_ref, m_ref] = detail::golden_section_min(f, lo, hi, 1e-12 * period);
            if (m_ref < best) {
                best = m_ref;
                best_t = problem.reduce_time(t_ref);
            }
        }
        report.hypotheses.push_back({std::string(kHypothesisNames[k]), best > 0.0, best, best_t});
    }
    return report;
}

namespace detail {

/// Oscillation count of sampled g: total variation over twice the range.
inline double oscillation_count(const std::vector<double>& g) {
    if (g.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(g.begin(), g.end());
    const double range = *hi - *lo;
    const double scale = std::max({1.0, std::fabs(*lo), std::fabs(*hi)});
    if (!(range > 1e-12 * scale)) return 0.0;
    double tv = 0.0;
    for (std::size_t i = 1; i < g.size(); ++i) tv += std::fabs(g[i] - g[i - 1]);
    return tv / (2.0 * range);
}

}  // namespace detail

/// Grid size for verify_certificate: 256 points per estimated oscillation of
/// h1, h2 and the force along the barriers, never fewer than 256.
inline std::size_t suggest_grid(const BarrierPair& barriers, const Problem& problem) {
    constexpr std::size_t kSamples = 4096;
    constexpr std::size_t kFloor = 256;
    constexpr std::size_t kCap = std::size_t(1) << 20;
    const double period = problem.period();

    std::array<std::vector<double>, 4> signals;
    for (auto& s : signals) s.reserve(kSamples + 1);
    for (std::size_t i = 0; i <= kSamples; ++i) {
        const double t = period * double(i) / double(kSamples);
        for (Side side : {Side::lower, Side::upper}) {
            const std::size_t k = side == Side::lower ? 0 : 1;
            const Jet2 h = barriers.jet(side, t);
            signals[k].push_back(h.value);
            if (std::fabs(h.d1) < 1.0) {
                try {
                    signals[k + 2].push_back(problem.force_at(t, h.value, h.d1));
                } catch (const EvalError&) {
                }
            }
        }
    }
    double cycles = 0.0;
    for (const auto& s : signals) cycles = std::max(cycles, detail::oscillation_count(s));
    const double blocks = std::ceil(cycles - 1e-6);
    if (!(blocks > 1.0)) return kFloor;
    return std::min(kCap, kFloor * std::size_t(blocks));
}

}  // namespace relosc
