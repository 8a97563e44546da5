#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relosc/barrier.hpp"
#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"

namespace relosc {

enum class BoundaryClass { interior, essential_exit, entry, face_p_plus, face_p_minus, outside };

inline std::string_view to_string(BoundaryClass c) {
    switch (c) {
        case BoundaryClass::interior: return "interior";
        case BoundaryClass::essential_exit: return "essential_exit";
        case BoundaryClass::entry: return "entry";
        case BoundaryClass::face_p_plus: return "face_p_plus";
        case BoundaryClass::face_p_minus: return "face_p_minus";
        case BoundaryClass::outside: return "outside";
    }
    return "?";
}

struct FiberPoint {
    double q = 0.0;
    double p = 0.0;
};

struct IndexReport {
    int index = 0;
    int chi_fiber = 0;  // Euler characteristic of the fiber W_0
    int chi_exit = 0;   // Euler characteristic of its essential exit set
};

/// The periodic segment W = {0 <= t <= T, h1(t) <= q <= h2(t), |p| <= 1} over a
/// certified barrier pair, with its exit-set classification and the explicit
/// fiber-preserving homeomorphism [0, T] x W_0 -> W.
class SegmentGeometry {
public:
    /// Runs verify_certificate (grid_n = 0 picks suggest_grid) and throws
    /// CertificateError unless every hypothesis holds.
    SegmentGeometry(BarrierPair barriers, Problem problem, std::size_t grid_n = 0)
        : barriers_(std::move(barriers)), problem_(std::move(problem)) {
        const std::size_t n = grid_n == 0 ? suggest_grid(barriers_, problem_) : grid_n;
        report_ = verify_certificate(barriers_, problem_, n, true);
        if (!report_.passed()) {
            std::string failed;
            for (const auto& h : report_.hypotheses)
                if (!h.satisfied) failed += (failed.empty() ? "" : ", ") + h.name;
            throw CertificateError("barrier certificate failed: " + failed);
        }
        at0_ = jets(0.0);
    }

    /// Skips the certificate gate. The report is still computed and kept;
    /// certified() tells the two apart.
    static SegmentGeometry uncertified(BarrierPair barriers, Problem problem, std::size_t grid_n = 0) {
        SegmentGeometry g(std::move(barriers), std::move(problem), grid_n, Unchecked{});
        return g;
    }

    bool certified() const { return report_.passed(); }

    const BarrierPair& barriers() const { return barriers_; }
    const Problem& problem() const { return problem_; }
    const CertificateReport& report() const { return report_; }
    double period() const { return problem_.period(); }

    /// Quadratic Taylor coefficient (halved) of q(t) - h_side(t) from a tangent start.
    double tangency_residual(double t0, Side side) const {
        return condition_residual(t0, side, barriers_, problem_);
    }

    BoundaryClass classify_point(double t, double q, double p) const {
        check_time(t);
        if (std::isnan(q) || std::isnan(p)) throw ValidationError("classify_point: NaN coordinate");
        const auto [j1, j2] = jets(t);
        if (std::fabs(p) > 1.0) return BoundaryClass::outside;
        if (q < j1.value - q_tol(j1.value) || q > j2.value + q_tol(j2.value)) return BoundaryClass::outside;

        if (std::fabs(q - j1.value) <= q_tol(j1.value)) {
            if (p < j1.d1 - kSlopeTol) return BoundaryClass::essential_exit;
            if (p > j1.d1 + kSlopeTol) return BoundaryClass::entry;
            return tangent_class(t, Side::lower);
        }
        if (std::fabs(q - j2.value) <= q_tol(j2.value)) {
            if (p > j2.d1 + kSlopeTol) return BoundaryClass::essential_exit;
            if (p < j2.d1 - kSlopeTol) return BoundaryClass::entry;
            return tangent_class(t, Side::upper);
        }
        if (p == 1.0) return BoundaryClass::face_p_plus;
        if (p == -1.0) return BoundaryClass::face_p_minus;
        return BoundaryClass::interior;
    }

    /// Image at time t of a point (q0, p0) of the initial fiber W_0.
    FiberPoint segment_map(double t, double q0, double p0) const {
        if (classify_point(0.0, q0, p0) == BoundaryClass::outside)
            throw ValidationError("segment_map: (q0, p0) is not in W_0");
        check_time(t);
        const auto [j1, j2] = jets(t);
        const auto& [a1, a2] = at0_;
        const double q = (j1.value - j2.value) / (a1.value - a2.value) * (q0 - a1.value) + j1.value;
        return {q, blend(q0, p0, j1.d1, j2.d1)};
    }

    /// Inverse of segment_map at time t: the point of W_0 mapped to (q, p).
    FiberPoint segment_map_inverse(double t, double q, double p) const {
        if (classify_point(t, q, p) == BoundaryClass::outside)
            throw ValidationError("segment_map_inverse: (q, p) is not in W_t");
        const auto [j1, j2] = jets(t);
        const auto& [a1, a2] = at0_;
        const double q0 = (q - j1.value) * (a1.value - a2.value) / (j1.value - j2.value) + a1.value;
        auto g = [&](double s) { return blend(q0, s, j1.d1, j2.d1); };

        // The blend is increasing and piecewise linear with knots at the initial slopes.
        std::array<double, 4> knots{-1.0, std::min(a1.d1, a2.d1), std::max(a1.d1, a2.d1), 1.0};
        for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
            const double lo = knots[k];
            const double hi = knots[k + 1];
            if (!(hi > lo)) continue;
            const double glo = g(lo);
            const double ghi = g(hi);
            if (p <= ghi || k + 2 == knots.size()) return {q0, lo + (p - glo) * (hi - lo) / (ghi - glo)};
        }
        return {q0, p};
    }

    /// m(q, p) = h(T, h^{-1}(0, q, p)); the identity for periodic barriers.
    FiberPoint monodromy(double q, double p) const {
        const FiberPoint x0 = segment_map_inverse(0.0, q, p);
        return segment_map(period(), x0.q, x0.p);
    }

    /// chi(W_0) - chi(W_0^{--}), the Lefschetz-number difference for the
    /// identity monodromy. W_0 is a closed rectangle (a disk, chi = 1); the
    /// essential exit part of its boundary is counted arc by arc.
    IndexReport fixed_point_index(std::size_t samples_per_edge = 256) const {
        const auto& [a1, a2] = at0_;
        std::vector<FiberPoint> loop;
        auto edge = [&](FiberPoint from, FiberPoint to, std::vector<double> extra_p) {
            for (std::size_t i = 0; i < samples_per_edge; ++i) {
                const double s = double(i) / double(samples_per_edge);
                loop.push_back({from.q + s * (to.q - from.q), from.p + s * (to.p - from.p)});
            }
            for (double pe : extra_p) loop.push_back({from.q, pe});
        };
        // Counter-clockwise: bottom, right wall up, top, left wall down.
        edge({a1.value, -1.0}, {a2.value, -1.0}, {});
        edge({a2.value, -1.0}, {a2.value, 1.0}, {a2.d1});
        edge({a2.value, 1.0}, {a1.value, 1.0}, {});
        edge({a1.value, 1.0}, {a1.value, -1.0}, {a1.d1});
        std::stable_sort(loop.begin(), loop.end(), [&](const FiberPoint& x, const FiberPoint& y) {
            return loop_parameter(x) < loop_parameter(y);
        });

        std::vector<bool> exit(loop.size());
        for (std::size_t i = 0; i < loop.size(); ++i)
            exit[i] = classify_point(0.0, loop[i].q, loop[i].p) == BoundaryClass::essential_exit;
        int arcs = 0;
        for (std::size_t i = 0; i < loop.size(); ++i) {
            const bool prev = exit[(i + loop.size() - 1) % loop.size()];
            if (exit[i] && !prev) ++arcs;
        }
        if (arcs == 0 && !exit.empty() && exit.front()) arcs = 1;  // whole boundary exits

        IndexReport r;
        r.chi_fiber = 1;
        r.chi_exit = arcs;
        r.index = r.chi_fiber - r.chi_exit;
        return r;
    }

    /// Barrier jets (h1, h2) at t.
    std::pair<Jet2, Jet2> jets(double t) const {
        return {barriers_.jet(Side::lower, t), barriers_.jet(Side::upper, t)};
    }

private:
    struct Unchecked {};

    SegmentGeometry(BarrierPair barriers, Problem problem, std::size_t grid_n, Unchecked)
        : barriers_(std::move(barriers)), problem_(std::move(problem)) {
        const std::size_t n = grid_n == 0 ? suggest_grid(barriers_, problem_) : grid_n;
        report_ = verify_certificate(barriers_, problem_, n, true);
        at0_ = jets(0.0);
    }

    static constexpr double kSlopeTol = 1e-12;
    static constexpr double kTangencyTol = 1e-12;

    static double q_tol(double h) { return 1e-12 * std::max(1.0, std::fabs(h)); }

    void check_time(double t) const {
        if (!(t >= 0.0 && t <= period())) throw ValidationError("time outside [0, T]");
    }

    BoundaryClass tangent_class(double t, Side side) const {
        const double r = tangency_residual(t, side);
        if (std::fabs(r) <= kTangencyTol)
            throw TangencyError("undetermined tangency on " + std::string(to_string(side)) +
                                " barrier at t = " + std::to_string(t));
        const bool exits = side == Side::lower ? r < 0.0 : r > 0.0;
        return exits ? BoundaryClass::essential_exit : BoundaryClass::entry;
    }

    /// L1 and L2 blended linearly in q0; written so that p = +-1 maps to +-1 exactly.
    double blend(double q0, double p, double slope1_t, double slope2_t) const {
        const auto& [a1, a2] = at0_;
        const double w2 = (q0 - a1.value) / (a2.value - a1.value);
        const double l1 = fiber_line(p, a1.d1, slope1_t);
        const double l2 = fiber_line(p, a2.d1, slope2_t);
        return l1 + w2 * (l2 - l1);
    }

    /// Two-piece linear map of [-1, 1] fixing +-1 and sending slope0 to slope_t.
    static double fiber_line(double p, double slope0, double slope_t) {
        if (p <= slope0) return -1.0 + (slope_t + 1.0) * ((p + 1.0) / (slope0 + 1.0));
        return 1.0 - (1.0 - slope_t) * ((1.0 - p) / (1.0 - slope0));
    }

    /// Position along the counter-clockwise boundary loop of W_0, in [0, 4).
    double loop_parameter(const FiberPoint& x) const {
        const auto& [a1, a2] = at0_;
        const double width = a2.value - a1.value;
        if (x.p == -1.0 && x.q < a2.value) return (x.q - a1.value) / width;
        if (x.q == a2.value && x.p < 1.0) return 1.0 + (x.p + 1.0) / 2.0;
        if (x.p == 1.0 && x.q > a1.value) return 2.0 + (a2.value - x.q) / width;
        return 3.0 + (1.0 - x.p) / 2.0;
    }

    BarrierPair barriers_;
    Problem problem_;
    CertificateReport report_;
    std::pair<Jet2, Jet2> at0_;
};

}  // namespace relosc
