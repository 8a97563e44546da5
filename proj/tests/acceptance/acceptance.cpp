// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "oracles/oracle_values.hpp"
#include "relosc/relosc.hpp"

#ifndef RELOSC_CLI_PATH
#error "RELOSC_CLI_PATH must name the relosc executable"
#endif

using namespace relosc;

namespace {

constexpr double pi = std::numbers::pi;

struct Verdict {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Case {
    std::string name;
    Problem problem;
    BarrierPair barriers;
};

Case autonomous() { return {"autonomous pendulum", Problem("sin(q)", 1.0), BarrierPair("-pi/2", "pi/2", 1.0)}; }

Case forced() {
    return {"forced pendulum", Problem("0.5*cos(2*pi*t) + sin(q)", 1.0), BarrierPair("-pi/2", "pi/2", 1.0)};
}

Case rotating(double amp = 0.1, double f0 = 5.0, double gamma = 0.0) {
    const Scenario sc = rotating_field({detail::literal(f0), detail::literal(amp) + "*sin(2*pi*t)", gamma, 1.0});
    return {"rotating field", sc.problem, sc.barriers};
}

Case curve() {
    const Scenario sc = curve_constrained({"sin(q)", 2.0, 0.0, "0", 1.0, 0.0, pi});
    return {"curve", sc.problem, sc.barriers};
}

// Independent fixed-step RK4 on q' = p, p' = (1 - p^2)^{3/2} f.
std::array<double, 2> rk4(const Problem& pr, double t0, double q, double p, double duration, double h) {
    const long n = std::lround(duration / h);
    const double dt = duration / double(n);
    auto f = [&](double t, double qq, double pp) {
        const double w = 1.0 - pp * pp;
        return std::array<double, 2>{pp, w * std::sqrt(w) * pr.force().eval(pr.reduce_time(t), qq, pp)};
    };
    double t = t0;
    for (long i = 0; i < n; ++i) {
        const auto k1 = f(t, q, p);
        const auto k2 = f(t + dt / 2, q + dt / 2 * k1[0], p + dt / 2 * k1[1]);
        const auto k3 = f(t + dt / 2, q + dt / 2 * k2[0], p + dt / 2 * k2[1]);
        const auto k4 = f(t + dt, q + dt * k3[0], p + dt * k3[1]);
        q += dt / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        p += dt / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        t = t0 + double(i + 1) * dt;
    }
    return {q, p};
}

// 1. Certificate margins for the forced pendulum.
Verdict criterion1() {
    Verdict v;
    const Case c = forced();
    const auto t0 = std::chrono::steady_clock::now();
    const CertificateReport r = verify_certificate(c.barriers, c.problem, suggest_grid(c.barriers, c.problem), true);
    const double elapsed = seconds_since(t0);
    const double lo = r.get("condition_lower").worst_margin;
    const double up = r.get("condition_upper").worst_margin;
    v.require(r.passed(), "certificate did not pass");
    v.require(std::fabs(lo - 0.5) <= 1e-9, "lower margin " + fmt("%.17g", lo));
    v.require(std::fabs(up - 0.5) <= 1e-9, "upper margin " + fmt("%.17g", up));
    v.require(elapsed < 1.0, "runtime " + fmt("%.3f s", elapsed));
    if (v.ok) v.detail = "margins " + fmt("%.12g", lo) + " / " + fmt("%.12g", up) + ", " + fmt("%.4f s", elapsed);
    return v;
}

// 2. Rotating-field residuals equal the closed-form reduction.
Verdict criterion2() {
    Verdict v;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double a = 0.15 * u01(rng), gamma = u01(rng), f0 = 5.0 + 5.0 * u01(rng), t = u01(rng);
        const Case c = rotating(a, f0, gamma);
        const double w = 2 * pi;
        const double d1 = a * w * std::cos(w * t), d2 = -a * w * w * std::sin(w * t);
        const double s = std::pow(1 - d1 * d1, 1.5);
        const double lower = -s * (f0 + gamma * d1) - d2;
        const double upper = s * (f0 - gamma * d1) - d2;
        worst = std::max({worst, std::fabs(condition_residual(t, Side::lower, c.barriers, c.problem) - lower),
                          std::fabs(condition_residual(t, Side::upper, c.barriers, c.problem) - upper)});
    }
    v.require(worst <= 1e-10, "max deviation " + fmt("%.3g", worst));
    if (v.ok) v.detail = "max deviation " + fmt("%.3g", worst) + " over 1000 draws";
    return v;
}

// 3. find_periodic returns an in-band solution for the three cases.
Verdict criterion3() {
    Verdict v;
    std::string summary;
    for (const Case& c : {autonomous(), forced(), rotating()}) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const SegmentGeometry g(c.barriers, c.problem);
            const SearchResult r = find_periodic(g);
            const double elapsed = seconds_since(t0);
            bool found = false;
            double best = INFINITY;
            for (const auto& s : r.solutions) {
                bool inside = s.in_band;
                for (const auto& x : s.trajectory) {
                    const double h1 = c.barriers.h1().eval(x.t, 0, 0), h2 = c.barriers.h2().eval(x.t, 0, 0);
                    inside = inside && h1 < x.q && x.q < h2;
                }
                if (inside && s.residual < 1e-9) {
                    found = true;
                    best = std::min(best, s.residual);
                }
            }
            v.require(found, c.name + ": no in-band solution with residual < 1e-9");
            v.require(elapsed < 60.0, c.name + ": runtime " + fmt("%.1f s", elapsed));
            summary += (summary.empty() ? "" : ", ") + c.name + " res " + fmt("%.2g", best) + " in " +
                       fmt("%.2f s", elapsed);
        } catch (const std::exception& e) {
            v.require(false, c.name + ": " + e.what());
        }
    }
    if (v.ok) v.detail = summary;
    return v;
}

// 4. Index -1 from the winding number, the segment topology and the linearization.
Verdict criterion4() {
    Verdict v;
    const Case c = autonomous();
    const WindingResult w = winding_number({-0.5, 0.5, -0.5, 0.5}, c.problem);
    const IndexReport idx = SegmentGeometry(c.barriers, c.problem).fixed_point_index();
    v.require(w.determined(), "winding undetermined");
    v.require(w.value == -1, "winding " + std::to_string(w.value));
    v.require(idx.index == -1 && idx.chi_fiber == 1 && idx.chi_exit == 2, "segment index " + std::to_string(idx.index));
    v.require(oracle::kAutonomousDet < 0.0, "oracle det(I - DP) not negative");

    // the library's own finite-difference linearization must agree with the RK4 oracle
    const double e = 1e-6;
    const Displacement qp = displacement(e, 0, c.problem), qm = displacement(-e, 0, c.problem);
    const Displacement pp = displacement(0, e, c.problem), pm = displacement(0, -e, c.problem);
    const double a = -(qp.dq - qm.dq) / (2 * e), b = -(pp.dq - pm.dq) / (2 * e);
    const double cc = -(qp.dp - qm.dp) / (2 * e), d = -(pp.dp - pm.dp) / (2 * e);
    const double det = a * d - b * cc;  // det(I - DP) with I - DP = -(D displacement)
    v.require(std::fabs(det - oracle::kAutonomousDet) < 1e-6, "det(I - DP) " + fmt("%.10g", det));
    if (v.ok)
        v.detail = "winding -1, chi " + std::to_string(idx.chi_fiber) + " - " + std::to_string(idx.chi_exit) +
                   " = -1, det(I - DP) = " + fmt("%.10g", det);
    return v;
}

// 5. Exit-set classification and tangency signs.
Verdict criterion5() {
    Verdict v;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    int checked = 0, tangents = 0, matched = 0;
    for (const Case& c : {autonomous(), forced(), rotating(), curve()}) {
        const SegmentGeometry g(c.barriers, c.problem);
        const double T = g.period();
        auto slope = [&](const Expression& h, double t) {
            const double dt = 1e-6;
            return (h.eval(t + dt, 0, 0) - h.eval(t - dt, 0, 0)) / (2 * dt);
        };
        for (int i = 0; i < 1000; ++i) {
            const double t = T * u01(rng);
            const double h1 = c.barriers.h1().eval(t, 0, 0), h2 = c.barriers.h2().eval(t, 0, 0);
            const int face = int(4 * u01(rng));
            double q, p;
            BoundaryClass expected;
            if (face == 0 || face == 1) {
                q = face == 0 ? h1 : h2;
                p = -1.0 + 2.0 * u01(rng);
                const double s = slope(face == 0 ? c.barriers.h1() : c.barriers.h2(), t);
                if (std::fabs(p - s) < 1e-6) continue;
                const bool exits = face == 0 ? p <= s : p >= s;
                expected = exits ? BoundaryClass::essential_exit : BoundaryClass::entry;
            } else {
                q = h1 + (h2 - h1) * (0.001 + 0.998 * u01(rng));
                p = face == 2 ? 1.0 : -1.0;
                expected = face == 2 ? BoundaryClass::face_p_plus : BoundaryClass::face_p_minus;
            }
            ++checked;
            const BoundaryClass got = g.classify_point(t, q, p);
            if (got != expected) {
                v.require(false, c.name + ": (" + fmt("%.6g", t) + ", " + fmt("%.6g", q) + ", " + fmt("%.6g", p) +
                                     ") classified " + std::string(to_string(got)));
                break;
            }
        }
        for (int i = 0; i < 25; ++i) {
            const double t0 = 0.99 * T * u01(rng);
            const Side side = u01(rng) < 0.5 ? Side::lower : Side::upper;
            const Jet2 h = c.barriers.jet(side, t0);
            const double r = g.tangency_residual(t0, side);
            if (std::fabs(r) <= 1e-3) continue;
            ++tangents;
            const double delta = 1e-3;
            const auto end = rk4(c.problem, t0, h.value, h.d1, delta, 1e-6);
            const double gap = end[0] - c.barriers.barrier(side).eval(t0 + delta, 0, 0);
            if ((gap > 0.0) == (r > 0.0)) ++matched;
        }
        // the tangent point itself classifies as essential exit under a passing certificate
        const Jet2 l = c.barriers.jet(Side::lower, 0.3 * T), u = c.barriers.jet(Side::upper, 0.3 * T);
        v.require(g.classify_point(0.3 * T, l.value, l.d1) == BoundaryClass::essential_exit,
                  c.name + ": lower tangent point not essential exit");
        v.require(g.classify_point(0.3 * T, u.value, u.d1) == BoundaryClass::essential_exit,
                  c.name + ": upper tangent point not essential exit");
    }
    v.require(tangents >= 90, "only " + std::to_string(tangents) + " tangent points with |residual| > 1e-3");
    v.require(matched == tangents, std::to_string(matched) + "/" + std::to_string(tangents) + " tangency signs match");
    if (v.ok)
        v.detail = std::to_string(checked) + " boundary points, " + std::to_string(matched) + "/" +
                   std::to_string(tangents) + " tangency signs";
    return v;
}

// 6. Segment homeomorphism properties.
Verdict criterion6() {
    Verdict v;
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst_id = 0, worst_mono = 0, worst_corner = 0;
    int faces_kept = 0, exits_kept = 0;
    for (const Case& c : {forced(), rotating()}) {
        const SegmentGeometry g(c.barriers, c.problem);
        const auto [a1, a2] = g.jets(0.0);
        for (int i = 0; i < 1000; ++i) {
            const double q0 = a1.value + (a2.value - a1.value) * u01(rng);
            const double p0 = -1.0 + 2.0 * u01(rng);
            const double t = g.period() * u01(rng);
            const FiberPoint id = g.segment_map(0.0, q0, p0);
            worst_id = std::max({worst_id, std::fabs(id.q - q0), std::fabs(id.p - p0)});
            const FiberPoint m = g.monodromy(q0, p0);
            worst_mono = std::max({worst_mono, std::fabs(m.q - q0), std::fabs(m.p - p0)});
            if (g.segment_map(t, q0, 1.0).p == 1.0 && g.segment_map(t, q0, -1.0).p == -1.0) ++faces_kept;
            const auto [j1, j2] = g.jets(t);
            const FiberPoint c1 = g.segment_map(t, a1.value, a1.d1), c2 = g.segment_map(t, a2.value, a2.d1);
            worst_corner = std::max({worst_corner, std::fabs(c1.q - j1.value), std::fabs(c1.p - j1.d1),
                                     std::fabs(c2.q - j2.value), std::fabs(c2.p - j2.d1)});

            const bool lower = u01(rng) < 0.5;
            const Jet2& a = lower ? a1 : a2;
            const double pe = lower ? -1.0 + (a.d1 + 1.0) * u01(rng) : a.d1 + (1.0 - a.d1) * u01(rng);
            const FiberPoint x = g.segment_map(t, a.value, pe);
            if (g.classify_point(t, x.q, x.p) == BoundaryClass::essential_exit) ++exits_kept;
        }
    }
    v.require(worst_id <= 1e-10, "identity at t = 0 off by " + fmt("%.3g", worst_id));
    v.require(worst_mono <= 1e-10, "monodromy off by " + fmt("%.3g", worst_mono));
    v.require(worst_corner <= 1e-10, "corner tracking off by " + fmt("%.3g", worst_corner));
    v.require(faces_kept == 2000, "p = +-1 not preserved");
    v.require(exits_kept == 2000, std::to_string(exits_kept) + "/2000 exit images stay essential exit");
    if (v.ok)
        v.detail = "identity " + fmt("%.2g", worst_id) + ", monodromy " + fmt("%.2g", worst_mono) + ", corners " +
                   fmt("%.2g", worst_corner) + ", 2000/2000 exit images";
    return v;
}

// 7. Integrator agreement with RK4, convergence order, momentum conservation.
Verdict criterion7() {
    Verdict v;
    const Case c = forced();
    const PeriodMapResult r = period_map_step(0.3, 0.2, c.problem);
    const double err = std::max(std::fabs(r.q - oracle::kForcedMapQ), std::fabs(r.p - oracle::kForcedMapP));
    v.require(err < 1e-8, "default tolerances off the RK4 oracle by " + fmt("%.3g", err));

    // tolerance halving over a decade; error against the oracle on a log-log fit
    std::vector<double> xs, ys;
    for (int k = 0; k <= 4; ++k) {
        IntegratorOptions opt;
        opt.rel_tol = 1e-6 / std::pow(2.0, k) / 1.25;
        opt.abs_tol = opt.rel_tol;
        opt.max_step = c.problem.period();
        const PeriodMapResult s = period_map_step(0.3, 0.2, c.problem, opt);
        const double e = std::hypot(s.q - oracle::kForcedMapQ, s.p - oracle::kForcedMapP);
        xs.push_back(std::log(opt.rel_tol));
        ys.push_back(std::log(e));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i] / double(xs.size()), my += ys[i] / double(xs.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) sxy += (xs[i] - mx) * (ys[i] - my), sxx += (xs[i] - mx) * (xs[i] - mx);
    const double slope = sxy / sxx;
    v.require(slope >= 0.8 && slope <= 1.2, "convergence slope " + fmt("%.3f", slope));

    const double u0 = velocity_to_momentum(0.6);
    const Trajectory free = integrate(0.0, 0.0, 0.6, 10.0, Problem("0", 1.0));
    double drift = 0.0;
    for (const auto& s : free.dense_samples(4)) drift = std::max(drift, std::fabs(s.u - u0));
    v.require(drift <= 1e-9, "momentum drift " + fmt("%.3g", drift));
    if (v.ok)
        v.detail = "RK4 gap " + fmt("%.2g", err) + ", slope " + fmt("%.3f", slope) + ", u drift " + fmt("%.2g", drift);
    return v;
}

// 8. Friction leaves constant-barrier margins unchanged.
Verdict criterion8() {
    Verdict v;
    std::vector<CertificateReport> reports;
    for (double gamma : {0.0, 0.5, 2.0}) {
        const Scenario sc = pendulum({1.0, gamma, "0.5*cos(2*pi*t)", 1.0});
        reports.push_back(verify_certificate(sc.barriers, sc.problem, suggest_grid(sc.barriers, sc.problem), true));
    }
    double worst = 0.0;
    for (const auto& r : reports)
        for (std::size_t i = 0; i < r.hypotheses.size(); ++i)
            worst = std::max(worst, std::fabs(r.hypotheses[i].worst_margin - reports[0].hypotheses[i].worst_margin));
    v.require(worst <= 1e-12, "margins differ by " + fmt("%.3g", worst));
    for (const auto& r : reports) v.require(r.passed(), "certificate failed");
    if (v.ok) v.detail = "max margin difference " + fmt("%.3g", worst) + " for gamma in {0, 0.5, 2}";
    return v;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(RELOSC_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 9. Negative controls.
Verdict criterion9() {
    Verdict v;
    const auto dir = std::filesystem::temp_directory_path() / ("relosc_acceptance_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    const auto file = dir / "strong.toml";
    std::ofstream(file) << "[scenario]\nname = \"pendulum\"\nalpha = 1\nf_ext = \"2\"\n";
    const int code = run_cli("verify " + file.string());
    v.require(code == 2, "verify on f_ext = 2 exited " + std::to_string(code));
    const Scenario strong = pendulum({1.0, 0.0, "2", 1.0});
    v.require(!verify_certificate(strong.barriers, strong.problem, 256).passed(), "f_ext = 2 certificate passed");

    const Scenario fast = rotating_field({"5", "0.3*sin(2*pi*t)", 0.0, 1.0});
    v.require(!fast.hypotheses[0].satisfied, "psi = 0.3 sin 2 pi t passed the slope hypothesis");
    const CertificateReport rf = verify_certificate(fast.barriers, fast.problem, 256);
    v.require(!rf.get("slope1").satisfied && !rf.get("slope2").satisfied, "generic slope check passed");

    const Scenario bent = curve_constrained({"q^2", 1.0, 0.0, "0", 1.0, -1.0, 1.0});
    bool y_prime_failed = false;
    for (const auto& h : bent.hypotheses)
        if (h.name == "y_prime_q1" && !h.satisfied) y_prime_failed = true;
    v.require(y_prime_failed, "y = q^2 on (-1, 1) passed the y' check");
    std::filesystem::remove_all(dir);
    if (v.ok) v.detail = "f_ext = 2 exit 2, psi amplitude 0.3 slope failure, y = q^2 rejected";
    return v;
}

}  // namespace

int main() {
    const std::array<std::pair<const char*, std::function<Verdict()>>, 9> criteria{{
        {"certificate margins for the forced pendulum", criterion1},
        {"rotating-field residual reduction", criterion2},
        {"periodic solution inside the band", criterion3},
        {"fixed-point index -1", criterion4},
        {"exit-set geometry", criterion5},
        {"segment homeomorphism", criterion6},
        {"integrator order and oracle agreement", criterion7},
        {"friction invariance", criterion8},
        {"negative controls", criterion9},
    }};
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.ok = false;
            v.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s criterion %zu: %s (%s)\n", v.ok ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
        if (!v.ok) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
