#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "relosc/barrier.hpp"
#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"

namespace relosc {

struct IntegratorOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-12;
    double max_step = 0.0;  // 0 selects T / 50
    double luminal_guard = 1e-6;
    std::size_t max_steps = 1'000'000;

    void validate() const {
        if (!(rel_tol > 0.0) || !(abs_tol > 0.0)) throw ValidationError("integrator tolerances must be positive");
        if (!(max_step >= 0.0)) throw ValidationError("max_step must be non-negative");
        if (!(luminal_guard > 0.0 && luminal_guard < 0.1))
            throw ValidationError("luminal guard must lie in (0, 0.1)");
        if (max_steps == 0) throw ValidationError("max_steps must be positive");
    }

    double step_cap(double period) const { return max_step > 0.0 ? max_step : period / 50.0; }

    IntegratorOptions tightened(double factor) const {
        IntegratorOptions o = *this;
        o.rel_tol /= factor;
        o.abs_tol /= factor;
        return o;
    }
};

struct TrajectorySample {
    double t = 0.0;
    double q = 0.0;
    double p = 0.0;
    double u = 0.0;
};

enum class EventKind { crossed_h1, crossed_h2, luminal_guard, completed };

inline std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::crossed_h1: return "crossed_h1";
        case EventKind::crossed_h2: return "crossed_h2";
        case EventKind::luminal_guard: return "luminal_guard";
        case EventKind::completed: return "completed";
    }
    return "?";
}

struct TrajectoryEvent {
    double t = 0.0;
    EventKind kind = EventKind::completed;
    double q = 0.0;
    double p = 0.0;
};

/// Quartic continuous extension of one Dormand-Prince step in (q, u).
struct DenseSegment {
    double t0 = 0.0;
    double h = 0.0;
    std::array<std::array<double, 2>, 5> rc{};

    std::array<double, 2> eval(double t) const {
        const double s = (t - t0) / h;
        const double s1 = 1.0 - s;
        std::array<double, 2> y{};
        for (std::size_t i = 0; i < 2; ++i)
            y[i] = rc[0][i] + s * (rc[1][i] + s1 * (rc[2][i] + s * (rc[3][i] + s1 * rc[4][i])));
        return y;
    }

    double t1() const { return t0 + h; }
};

/// Solution x(t0, x0, t): step samples, events and the dense interpolant.
class Trajectory {
public:
    const std::vector<TrajectorySample>& samples() const { return samples_; }
    const std::vector<TrajectoryEvent>& events() const { return events_; }
    const std::vector<DenseSegment>& segments() const { return segments_; }

    double t_begin() const { return samples_.front().t; }
    double t_end() const { return samples_.back().t; }
    const TrajectorySample& back() const { return samples_.back(); }

    bool has_event(EventKind k) const {
        return std::any_of(events_.begin(), events_.end(), [k](const auto& e) { return e.kind == k; });
    }

    /// Dense-output state at t inside the integrated span.
    TrajectorySample at(double t) const {
        if (segments_.empty()) return samples_.front();
        const bool forward = segments_.front().h > 0.0;
        auto it = std::lower_bound(segments_.begin(), segments_.end(), t, [forward](const DenseSegment& s, double x) {
            return forward ? s.t1() < x : s.t1() > x;
        });
        if (it == segments_.end()) it = std::prev(segments_.end());
        const auto y = it->eval(t);
        return {t, y[0], momentum_to_velocity(y[1]), y[1]};
    }

    /// Step samples plus `per_step` interior dense samples in every step.
    std::vector<TrajectorySample> dense_samples(std::size_t per_step) const {
        std::vector<TrajectorySample> out;
        out.push_back(samples_.front());
        for (const auto& seg : segments_) {
            for (std::size_t k = 1; k <= per_step; ++k) {
                const double t = seg.t0 + seg.h * double(k) / double(per_step + 1);
                const auto y = seg.eval(t);
                out.push_back({t, y[0], momentum_to_velocity(y[1]), y[1]});
            }
            const auto y = seg.eval(seg.t1());
            out.push_back({seg.t1(), y[0], momentum_to_velocity(y[1]), y[1]});
        }
        return out;
    }

private:
    friend class Integrator;
    std::vector<TrajectorySample> samples_;
    std::vector<TrajectoryEvent> events_;
    std::vector<DenseSegment> segments_;
};

/// Adaptive Dormand-Prince 5(4) integrator of the momentum form with PI step control.
class Integrator {
public:
    Integrator(const Problem& problem, const IntegratorOptions& options, const BarrierPair* band = nullptr)
        : problem_(problem), opt_(options), band_(band) {
        opt_.validate();
        const double pg = 1.0 - opt_.luminal_guard;
        u_guard_ = pg / std::sqrt(1.0 - pg * pg);
    }

    Trajectory run(double t0, double q0, double p0, double t_end) {
        if (!std::isfinite(t0) || !std::isfinite(t_end) || t_end == t0)
            throw ValidationError("integration span must be finite and non-empty");
        if (!std::isfinite(q0)) throw ValidationError("initial q must be finite");
        const double u0 = velocity_to_momentum(p0);

        Trajectory traj;
        traj.samples_.push_back({t0, q0, p0, u0});
        if (std::fabs(u0) >= u_guard_) {
            traj.events_.push_back({t0, EventKind::luminal_guard, q0, p0});
            return traj;
        }

        const double dir = t_end > t0 ? 1.0 : -1.0;
        const double hmax = opt_.step_cap(problem_.period());
        init_band(t0, q0);

        std::array<double, 2> y{q0, u0};
        std::array<double, 2> k1 = f(t0, y);
        double t = t0;
        double h = dir * std::min(hmax, initial_step(t0, y, k1, dir, hmax));
        double facold = 1e-4;
        bool last_rejected = false;
        std::size_t steps = 0;

        while (dir * (t_end - t) > 0.0) {
            if (++steps > opt_.max_steps)
                throw IntegrationError("max_steps exceeded at t = " + std::to_string(t));
            if (std::fabs(h) < 1e-14 * std::max(1.0, std::fabs(t)))
                throw IntegrationError("step size underflow at t = " + std::to_string(t));
            bool last = false;
            if (dir * (t + h - t_end) >= 0.0 || dir * (t_end - (t + h)) < 1e-12 * std::fabs(h)) {
                h = t_end - t;
                last = true;
            }

            Stage st = stage(t, y, k1, h);
            const double err = error_norm(y, st.y1, st.err);
            if (!std::isfinite(err)) throw IntegrationError("non-finite error estimate at t = " + std::to_string(t));

            const double fac11 = std::pow(err, kExpo1);
            if (err <= 1.0) {
                double fac = fac11 / std::pow(facold, kBeta);
                fac = std::max(kFacMin, std::min(kFacMax, fac / kSafe));
                facold = std::max(err, 1e-4);

                DenseSegment seg = dense(t, h, y, st);
                const double t_new = last ? t_end : t + h;
                traj.segments_.push_back(seg);
                const bool halted = check_events(traj, t, t_new);
                if (halted) break;

                t = t_new;
                y = st.y1;
                k1 = st.k7;
                traj.samples_.push_back({t, y[0], momentum_to_velocity(y[1]), y[1]});

                double h_new = h / fac;
                if (last_rejected) h_new = dir * std::min(std::fabs(h_new), std::fabs(h));
                h = dir * std::min(std::fabs(h_new), hmax);
                last_rejected = false;
            } else {
                const double fac = std::min(kFacMax, fac11 / kSafe);
                h = h / fac;
                last_rejected = true;
            }
        }
        if (!traj.has_event(EventKind::luminal_guard))
            traj.events_.push_back({traj.t_end(), EventKind::completed, traj.back().q, traj.back().p});
        std::stable_sort(traj.events_.begin(), traj.events_.end(),
                         [dir](const auto& a, const auto& b) { return dir * a.t < dir * b.t; });
        return traj;
    }

private:
    struct Stage {
        std::array<double, 2> y1{};
        std::array<double, 2> err{};
        std::array<std::array<double, 2>, 7> k{};
        std::array<double, 2> k7{};
    };

    // Dormand-Prince 5(4) tableau.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                            a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                            d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                            d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

    static constexpr double kBeta = 0.04;
    static constexpr double kExpo1 = 0.2 - kBeta * 0.75;
    static constexpr double kSafe = 0.9;
    static constexpr double kFacMin = 0.1;  // step may grow at most 10x
    static constexpr double kFacMax = 5.0;  // and shrink at most 5x

    std::array<double, 2> f(double t, const std::array<double, 2>& y) const {
        const MomentumVelocity v = rhs_regularized(t, y[0], y[1], problem_);
        return {v.dq, v.du};
    }

    Stage stage(double t, const std::array<double, 2>& y, const std::array<double, 2>& k1, double h) const {
        Stage s;
        auto& k = s.k;
        k[0] = k1;
        auto at = [&](std::initializer_list<std::pair<std::size_t, double>> terms) {
            std::array<double, 2> out = y;
            for (const auto& [j, a] : terms)
                for (std::size_t i = 0; i < 2; ++i) out[i] += h * a * k[j][i];
            return out;
        };
        k[1] = f(t + c2 * h, at({{0, a21}}));
        k[2] = f(t + c3 * h, at({{0, a31}, {1, a32}}));
        k[3] = f(t + c4 * h, at({{0, a41}, {1, a42}, {2, a43}}));
        k[4] = f(t + c5 * h, at({{0, a51}, {1, a52}, {2, a53}, {3, a54}}));
        k[5] = f(t + h, at({{0, a61}, {1, a62}, {2, a63}, {3, a64}, {4, a65}}));
        s.y1 = at({{0, a71}, {2, a73}, {3, a74}, {4, a75}, {5, a76}});
        s.k7 = f(t + h, s.y1);
        k[6] = s.k7;
        for (std::size_t i = 0; i < 2; ++i)
            s.err[i] = h * (e1 * k[0][i] + e3 * k[2][i] + e4 * k[3][i] + e5 * k[4][i] + e6 * k[5][i] + e7 * k[6][i]);
        return s;
    }

    DenseSegment dense(double t, double h, const std::array<double, 2>& y, const Stage& s) const {
        DenseSegment seg;
        seg.t0 = t;
        seg.h = h;
        const auto& k = s.k;
        for (std::size_t i = 0; i < 2; ++i) {
            const double ydiff = s.y1[i] - y[i];
            const double bspl = h * k[0][i] - ydiff;
            seg.rc[0][i] = y[i];
            seg.rc[1][i] = ydiff;
            seg.rc[2][i] = bspl;
            seg.rc[3][i] = ydiff - h * k[6][i] - bspl;
            seg.rc[4][i] =
                h * (d1 * k[0][i] + d3 * k[2][i] + d4 * k[3][i] + d5 * k[4][i] + d6 * k[5][i] + d7 * k[6][i]);
        }
        return seg;
    }

    double error_norm(const std::array<double, 2>& y0, const std::array<double, 2>& y1,
                      const std::array<double, 2>& e) const {
        double sum = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            const double sk = opt_.abs_tol + opt_.rel_tol * std::max(std::fabs(y0[i]), std::fabs(y1[i]));
            sum += (e[i] / sk) * (e[i] / sk);
        }
        return std::sqrt(sum / 2.0);
    }

    double initial_step(double t, const std::array<double, 2>& y, const std::array<double, 2>& k1, double dir,
                        double hmax) const {
        double dnf = 0.0, dny = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            const double sk = opt_.abs_tol + opt_.rel_tol * std::fabs(y[i]);
            dnf += (k1[i] / sk) * (k1[i] / sk);
            dny += (y[i] / sk) * (y[i] / sk);
        }
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
        h = std::min(h, hmax);
        std::array<double, 2> y1{y[0] + dir * h * k1[0], y[1] + dir * h * k1[1]};
        const auto k2 = f(t + dir * h, y1);
        double der2 = 0.0;
        for (std::size_t i = 0; i < 2; ++i) {
            const double sk = opt_.abs_tol + opt_.rel_tol * std::fabs(y[i]);
            der2 += ((k2[i] - k1[i]) / sk) * ((k2[i] - k1[i]) / sk);
        }
        der2 = std::sqrt(der2) / h;
        const double der12 = std::max(std::fabs(der2), std::sqrt(dnf));
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
        return std::min({100.0 * h, h1, hmax});
    }

    // Band monitoring: side i is "inside" when sign_i * (q - h_i) > 0; points on a barrier count as inside.
    void init_band(double t0, double q0) {
        if (!band_) return;
        const double g1 = q0 - band_->h1().eval(t0, 0.0, 0.0);
        const double g2 = q0 - band_->h2().eval(t0, 0.0, 0.0);
        last_sign_ = {g1 < 0.0 ? -1 : 1, g2 > 0.0 ? 1 : -1};
        last_t_ = {t0, t0};
    }

    double band_gap(const Trajectory& traj, std::size_t side, double t) const {
        const Expression& h = side == 0 ? band_->h1() : band_->h2();
        return traj.at(t).q - h.eval(t, 0.0, 0.0);
    }

    static int sign_of(double g) { return g > 0.0 ? 1 : (g < 0.0 ? -1 : 0); }

    /// Locates sign changes of q - h_i and the luminal guard in (ta, tb]. Returns true if halted.
    bool check_events(Trajectory& traj, double ta, double tb) {
        constexpr std::array<double, 4> kChecks{0.25, 0.5, 0.75, 1.0};
        for (double frac : kChecks) {
            const double tc = frac == 1.0 ? tb : ta + frac * (tb - ta);
            if (band_) {
                for (std::size_t side = 0; side < 2; ++side) {
                    const int s = sign_of(band_gap(traj, side, tc));
                    if (s != 0 && s != last_sign_[side]) {
                        const int keep = last_sign_[side];
                        const double te = bisect(last_t_[side], tc, [&](double x) {
                            const int sx = sign_of(band_gap(traj, side, x));
                            return sx == 0 || sx == keep;
                        });
                        const auto st = traj.at(te);
                        traj.events_.push_back(
                            {te, side == 0 ? EventKind::crossed_h1 : EventKind::crossed_h2, st.q, st.p});
                        last_sign_[side] = s;
                    }
                    last_t_[side] = tc;
                }
            }
            if (std::fabs(traj.at(tc).u) >= u_guard_) {
                const double te = bisect(ta, tc, [&](double x) { return std::fabs(traj.at(x).u) < u_guard_; });
                const auto st = traj.at(te);
                traj.samples_.push_back(st);
                traj.events_.push_back({te, EventKind::luminal_guard, st.q, st.p});
                return true;
            }
        }
        return false;
    }

    /// Last time in [a, b] where `before` still holds, to 1e-12 in t.
    template <class Pred>
    static double bisect(double a, double b, Pred before) {
        for (int i = 0; i < 200 && std::fabs(b - a) > 1e-12; ++i) {
            const double m = 0.5 * (a + b);
            if (before(m))
                a = m;
            else
                b = m;
        }
        return 0.5 * (a + b);
    }

    const Problem& problem_;
    IntegratorOptions opt_;
    const BarrierPair* band_;
    double u_guard_ = 0.0;
    std::array<int, 2> last_sign_{1, -1};
    std::array<double, 2> last_t_{0.0, 0.0};
};

/// Integrates the momentum form from (t0, q0, p0) to t_end (either direction).
/// With a band, crossings of q = h1(t), q = h2(t) are recorded without halting;
/// reaching |p| >= 1 - luminal_guard halts with a luminal_guard event.
inline Trajectory integrate(double t0, double q0, double p0, double t_end, const Problem& problem,
                            const IntegratorOptions& options = {}, const BarrierPair* band = nullptr) {
    return Integrator(problem, options, band).run(t0, q0, p0, t_end);
}

struct PeriodMapResult {
    double q = 0.0;
    double p = 0.0;
    bool stayed_in_band = true;
    bool completed = true;
};

/// One stroboscopic step t = 0 -> T.
inline PeriodMapResult period_map_step(double q0, double p0, const Problem& problem,
                                       const IntegratorOptions& options = {}, const BarrierPair* band = nullptr) {
    const Trajectory traj = integrate(0.0, q0, p0, problem.period(), problem, options, band);
    PeriodMapResult r;
    r.q = traj.back().q;
    r.p = traj.back().p;
    r.completed = !traj.has_event(EventKind::luminal_guard);
    r.stayed_in_band = r.completed && !traj.has_event(EventKind::crossed_h1) &&
                       !traj.has_event(EventKind::crossed_h2);
    return r;
}

}  // namespace relosc
