#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"
#include "relosc/integrate.hpp"
#include "relosc/parallel.hpp"
#include "relosc/segment.hpp"

namespace relosc {

/// Axis-aligned search cell in the (q, p) plane.
struct Rect {
    double q_lo = 0.0;
    double q_hi = 0.0;
    double p_lo = 0.0;
    double p_hi = 0.0;

    void validate() const {
        if (!(q_lo < q_hi) || !(p_lo < p_hi)) throw ValidationError("degenerate rectangle");
        if (!(p_lo > -1.0 && p_hi < 1.0)) throw ValidationError("rectangle must stay strictly inside |p| < 1");
    }

    double diameter() const { return std::hypot(q_hi - q_lo, p_hi - p_lo); }
    FiberPoint center() const { return {0.5 * (q_lo + q_hi), 0.5 * (p_lo + p_hi)}; }

    /// Children in the order lower-left, lower-right, upper-right, upper-left.
    std::array<Rect, 4> quarters() const {
        const auto [qm, pm] = center();
        return {Rect{q_lo, qm, p_lo, pm}, Rect{qm, q_hi, p_lo, pm}, Rect{qm, q_hi, pm, p_hi},
                Rect{q_lo, qm, pm, p_hi}};
    }

    /// Point at loop parameter s in [0, 4), counter-clockwise from (q_lo, p_lo).
    FiberPoint boundary_point(double s) const {
        if (s < 1.0) return {q_lo + s * (q_hi - q_lo), p_lo};
        if (s < 2.0) return {q_hi, p_lo + (s - 1.0) * (p_hi - p_lo)};
        if (s < 3.0) return {q_hi - (s - 2.0) * (q_hi - q_lo), p_hi};
        return {q_lo, p_hi - (s - 3.0) * (p_hi - p_lo)};
    }

    static Rect around(FiberPoint x, double radius) {
        return {x.q - radius, x.q + radius, x.p - radius, x.p + radius};
    }
};

struct Displacement {
    double dq = 0.0;
    double dp = 0.0;

    double norm() const { return std::hypot(dq, dp); }
};

/// P(x) - x for the period-T map P. Throws IntegrationError if the trajectory
/// reaches the luminal guard before t = T.
inline Displacement displacement(double q, double p, const Problem& problem, const IntegratorOptions& options = {}) {
    const PeriodMapResult r = period_map_step(q, p, problem, options);
    if (!r.completed) throw IntegrationError("trajectory reached the luminal guard before t = T");
    return {r.q - q, r.p - p};
}

enum class WindingStatus { determined, undersampled, boundary_unusable, zero_on_boundary };

inline std::string_view to_string(WindingStatus s) {
    switch (s) {
        case WindingStatus::determined: return "determined";
        case WindingStatus::undersampled: return "undersampled";
        case WindingStatus::boundary_unusable: return "boundary_unusable";
        case WindingStatus::zero_on_boundary: return "zero_on_boundary";
    }
    return "?";
}

struct WindingResult {
    WindingStatus status = WindingStatus::undersampled;
    int value = 0;               // meaningful only when determined
    std::size_t samples = 0;
    FiberPoint near_zero{};      // smallest-norm boundary sample (zero_on_boundary)

    bool determined() const { return status == WindingStatus::determined; }
};

struct WindingOptions {
    std::size_t sample_cap = 8192;  // adaptive refinement stops here
    double zero_tol = 1e-8;         // boundary samples below this norm count as fixed points
};

/// Winding number of a planar field along the counter-clockwise boundary of
/// `rect`. `field(q, p)` returns nullopt where it cannot be evaluated. Sampling
/// starts uniform with boundary_n points and bisects every interval whose
/// angular increment reaches pi/2 until all increments are below pi/2.
template <class Field>
WindingResult winding_number_of(const Rect& rect, Field&& field, std::size_t boundary_n,
                                const WindingOptions& wopt = {}) {
    if (boundary_n < 64) throw ValidationError("winding number needs at least 64 boundary samples");
    rect.validate();

    struct Sample {
        double s;
        std::optional<Displacement> d;
    };
    auto evaluate = [&](std::vector<double> params) {
        std::vector<Sample> out(params.size());
        parallel_for(params.size(), [&](std::size_t i) {
            const FiberPoint x = rect.boundary_point(params[i]);
            out[i] = {params[i], field(x.q, x.p)};
        });
        return out;
    };
    auto angle_step = [](const Displacement& a, const Displacement& b) {
        return std::atan2(a.dq * b.dp - a.dp * b.dq, a.dq * b.dq + a.dp * b.dp);
    };

    std::vector<double> init(boundary_n);
    for (std::size_t i = 0; i < boundary_n; ++i) init[i] = 4.0 * double(i) / double(boundary_n);
    std::vector<Sample> ring = evaluate(std::move(init));

    WindingResult result;
    for (;;) {
        result.samples = ring.size();
        std::size_t weakest = 0;
        for (std::size_t i = 0; i < ring.size(); ++i) {
            if (!ring[i].d) {
                result.status = WindingStatus::boundary_unusable;
                return result;
            }
            if (ring[i].d->norm() < ring[weakest].d->norm()) weakest = i;
        }
        if (ring[weakest].d->norm() < wopt.zero_tol) {
            result.status = WindingStatus::zero_on_boundary;
            result.near_zero = rect.boundary_point(ring[weakest].s);
            return result;
        }

        std::vector<double> inserts;
        double total = 0.0;
        for (std::size_t i = 0; i < ring.size(); ++i) {
            const Sample& a = ring[i];
            const Sample& b = ring[(i + 1) % ring.size()];
            const double step = angle_step(*a.d, *b.d);
            total += step;
            if (std::fabs(step) >= 0.5 * std::numbers::pi) {
                const double sb = i + 1 == ring.size() ? 4.0 : b.s;
                if (sb - a.s < 1e-12) {
                    result.status = WindingStatus::undersampled;
                    return result;
                }
                inserts.push_back(0.5 * (a.s + sb));
            }
        }
        if (inserts.empty()) {
            result.status = WindingStatus::determined;
            result.value = int(std::lround(total / (2.0 * std::numbers::pi)));
            return result;
        }
        if (ring.size() + inserts.size() > wopt.sample_cap) {
            result.status = WindingStatus::undersampled;
            return result;
        }
        std::vector<Sample> added = evaluate(std::move(inserts));
        ring.insert(ring.end(), added.begin(), added.end());
        std::sort(ring.begin(), ring.end(), [](const Sample& x, const Sample& y) { return x.s < y.s; });
    }
}

/// Degree of the displacement field P(x) - x over `rect`.
inline WindingResult winding_number(const Rect& rect, const Problem& problem, const IntegratorOptions& options = {},
                                    std::size_t boundary_n = 64, const WindingOptions& wopt = {}) {
    auto field = [&](double q, double p) -> std::optional<Displacement> {
        try {
            return displacement(q, p, problem, options);
        } catch (const IntegrationError&) {
            return std::nullopt;
        } catch (const DomainError&) {
            return std::nullopt;
        }
    };
    return winding_number_of(rect, field, boundary_n, wopt);
}

struct SearchOptions {
    IntegratorOptions integrator{};
    double band_inset = 1e-6;      // q inset of the seed cell from the barriers
    double luminal_margin = 1e-3;  // p inset of the seed cell from |p| = 1
    double min_cell = 1e-3;        // below this diameter switch to Newton
    double newton_tol = 1e-9;
    double fd_step = 1e-6;
    std::size_t newton_max_iter = 50;
    double dedup_radius = 1e-6;
    double index_radius = 1e-2;
    std::size_t boundary_n = 64;
    WindingOptions winding{};
    std::size_t max_cells = 20000;
    std::size_t trajectory_dense = 8;  // dense samples per step in the reported trajectory
};

struct PeriodicSolution {
    FiberPoint fixed_point{};
    double residual = 0.0;
    std::optional<int> local_index;  // nullopt: undetermined
    bool in_band = false;
    double band_clearance = 0.0;     // min over the period of min(q - h1, h2 - q)
    std::vector<TrajectorySample> trajectory;
};

struct SearchStats {
    std::size_t cells_examined = 0;
    std::size_t newton_candidates = 0;
    std::size_t additivity_checks = 0;
    std::size_t additivity_violations = 0;
    bool budget_exhausted = false;
    std::optional<int> seed_winding;
};

struct SearchResult {
    std::vector<PeriodicSolution> solutions;
    SearchStats stats;

    bool has_in_band() const {
        return std::any_of(solutions.begin(), solutions.end(), [](const auto& s) { return s.in_band; });
    }
};

namespace detail {

/// Displacement evaluations memoized by exact coordinates; unusable points cached as nullopt.
class DisplacementCache {
public:
    DisplacementCache(const Problem& problem, const IntegratorOptions& options)
        : problem_(problem), options_(options) {}

    std::optional<Displacement> operator()(double q, double p) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find({q, p}); it != cache_.end()) return it->second;
        }
        std::optional<Displacement> d;
        try {
            d = displacement(q, p, problem_, options_);
        } catch (const IntegrationError&) {
        } catch (const DomainError&) {
        }
        std::lock_guard lock(mutex_);
        cache_.emplace(std::pair{q, p}, d);
        return d;
    }

private:
    const Problem& problem_;
    IntegratorOptions options_;
    std::mutex mutex_;
    std::map<std::pair<double, double>, std::optional<Displacement>> cache_;
};

template <class Field>
std::optional<FiberPoint> damped_newton(FiberPoint x, Field&& field, const SearchOptions& opt) {
    std::optional<Displacement> fx = field(x.q, x.p);
    if (!fx) return std::nullopt;
    for (std::size_t it = 0; it < opt.newton_max_iter; ++it) {
        if (fx->norm() < opt.newton_tol) return x;
        const double h = opt.fd_step;
        const auto fq1 = field(x.q + h, x.p);
        const auto fq0 = field(x.q - h, x.p);
        const auto fp1 = field(x.q, x.p + h);
        const auto fp0 = field(x.q, x.p - h);
        if (!fq1 || !fq0 || !fp1 || !fp0) return std::nullopt;
        const double j11 = (fq1->dq - fq0->dq) / (2 * h), j12 = (fp1->dq - fp0->dq) / (2 * h);
        const double j21 = (fq1->dp - fq0->dp) / (2 * h), j22 = (fp1->dp - fp0->dp) / (2 * h);
        const double det = j11 * j22 - j12 * j21;
        if (!std::isfinite(det) || std::fabs(det) < 1e-14) return std::nullopt;
        const double sq = -(j22 * fx->dq - j12 * fx->dp) / det;
        const double sp = -(-j21 * fx->dq + j11 * fx->dp) / det;

        bool accepted = false;
        for (double lambda = 1.0; lambda >= 1.0 / 1024.0; lambda *= 0.5) {
            const FiberPoint xn{x.q + lambda * sq, x.p + lambda * sp};
            if (!(std::fabs(xn.p) < 1.0)) continue;
            const auto fn = field(xn.q, xn.p);
            if (fn && fn->norm() < (1.0 - 1e-4 * lambda) * fx->norm()) {
                x = xn;
                fx = fn;
                accepted = true;
                break;
            }
        }
        if (!accepted) return fx->norm() < opt.newton_tol ? std::optional{x} : std::nullopt;
    }
    return fx->norm() < opt.newton_tol ? std::optional{x} : std::nullopt;
}

}  // namespace detail

/// Checks a fixed point against the band over one period and measures its local index.
inline PeriodicSolution assess_solution(FiberPoint x, const SegmentGeometry& geometry, const SearchOptions& opt) {
    const Problem& problem = geometry.problem();
    PeriodicSolution sol;
    sol.fixed_point = x;
    const IntegratorOptions tight = opt.integrator.tightened(10.0);
    sol.residual = displacement(x.q, x.p, problem, tight).norm();

    const Trajectory traj = integrate(0.0, x.q, x.p, problem.period(), problem, opt.integrator, &geometry.barriers());
    sol.trajectory = traj.dense_samples(opt.trajectory_dense);
    double clearance = std::numeric_limits<double>::infinity();
    for (const auto& s : sol.trajectory) {
        const double h1 = geometry.barriers().h1().eval(s.t, 0.0, 0.0);
        const double h2 = geometry.barriers().h2().eval(s.t, 0.0, 0.0);
        clearance = std::min({clearance, s.q - h1, h2 - s.q});
    }
    sol.band_clearance = clearance;
    sol.in_band = clearance > 0.0 && !traj.has_event(EventKind::crossed_h1) &&
                  !traj.has_event(EventKind::crossed_h2) && !traj.has_event(EventKind::luminal_guard);

    const double room = 1.0 - opt.integrator.luminal_guard - std::fabs(x.p);
    const double radius = std::min(opt.index_radius, 0.5 * room);
    if (radius > 0.0) {
        const WindingResult w =
            winding_number(Rect::around(x, radius), problem, opt.integrator, opt.boundary_n, opt.winding);
        if (w.determined()) sol.local_index = w.value;
    }
    return sol;
}

/// Localizes T-periodic solutions inside the certified band: quadtree subdivision
/// of W_0 guided by the winding number of P(x) - x, then damped Newton with a
/// finite-difference Jacobian. Throws SearchError if no solution stays in the band.
inline SearchResult find_periodic(const SegmentGeometry& geometry, const SearchOptions& opt = {}) {
    const Problem& problem = geometry.problem();
    const auto [j1, j2] = geometry.jets(0.0);
    const double margin = std::max(opt.luminal_margin, opt.integrator.luminal_guard);
    const Rect seed{j1.value + opt.band_inset, j2.value - opt.band_inset, -1.0 + margin, 1.0 - margin};
    seed.validate();

    detail::DisplacementCache field(problem, opt.integrator);
    SearchResult result;
    auto& stats = result.stats;
    std::vector<FiberPoint> candidates;

    struct Cell {
        Rect rect;
        std::optional<int> parent_winding;
        std::size_t family;
    };
    std::deque<Cell> queue{{seed, std::nullopt, 0}};
    // family id -> (children seen, children determined, sum of windings, parent winding)
    struct Family {
        int seen = 0;
        int determined = 0;
        int sum = 0;
        std::optional<int> parent;
    };
    std::vector<Family> families(1);

    while (!queue.empty()) {
        if (stats.cells_examined >= opt.max_cells) {
            stats.budget_exhausted = true;
            break;
        }
        const Cell cell = queue.front();
        queue.pop_front();
        ++stats.cells_examined;

        const WindingResult w = winding_number_of(cell.rect, field, opt.boundary_n, opt.winding);
        if (stats.cells_examined == 1 && w.determined()) stats.seed_winding = w.value;

        Family& fam = families[cell.family];
        ++fam.seen;
        if (w.determined()) {
            ++fam.determined;
            fam.sum += w.value;
        }
        if (cell.family != 0 && fam.seen == 4 && fam.determined == 4 && fam.parent) {
            ++stats.additivity_checks;
            if (fam.sum != *fam.parent) ++stats.additivity_violations;
        }

        if (w.status == WindingStatus::zero_on_boundary) candidates.push_back(w.near_zero);
        if (w.determined() && w.value == 0) continue;

        if (cell.rect.diameter() < opt.min_cell) {
            candidates.push_back(cell.rect.center());
            continue;
        }
        const std::size_t id = families.size();
        families.push_back({0, 0, 0, w.determined() ? std::optional{w.value} : std::nullopt});
        for (const Rect& child : cell.rect.quarters()) queue.push_back({child, families[id].parent, id});
    }

    stats.newton_candidates = candidates.size();
    std::vector<FiberPoint> roots;
    for (const FiberPoint& c : candidates) {
        auto root = detail::damped_newton(c, field, opt);
        if (!root) continue;
        // polish with tighter integration so the reported residual is not integrator noise
        detail::DisplacementCache tight(problem, opt.integrator.tightened(10.0));
        if (auto polished = detail::damped_newton(*root, tight, opt)) root = polished;
        const bool duplicate = std::any_of(roots.begin(), roots.end(), [&](const FiberPoint& r) {
            return std::hypot(r.q - root->q, r.p - root->p) < opt.dedup_radius;
        });
        if (!duplicate) roots.push_back(*root);
    }
    std::sort(roots.begin(), roots.end(),
              [](const FiberPoint& a, const FiberPoint& b) { return a.q < b.q || (a.q == b.q && a.p < b.p); });

    for (const FiberPoint& r : roots) result.solutions.push_back(assess_solution(r, geometry, opt));

    if (!result.has_in_band()) {
        std::string why = stats.budget_exhausted ? "subdivision budget exhausted" : "no in-band fixed point found";
        if (!candidates.empty() && roots.empty()) why = "Newton diverged on all candidate cells";
        throw SearchError(why + " (" + std::to_string(stats.cells_examined) + " cells, " +
                          std::to_string(candidates.size()) + " candidates)");
    }
    return result;
}

}  // namespace relosc
