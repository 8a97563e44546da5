// Reference values computed without the library: fixed-step RK4 on
// q' = p, p' = (1 - p^2)^{3/2} f(t, q, p), brute grid scans, plain Newton.
// Run offline; the printed numbers are frozen in oracle_values.hpp.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <vector>

namespace {

constexpr double kPi = std::numbers::pi;

using Force = std::function<double(double, double, double)>;
using Vec = std::array<double, 2>;

struct Case {
    const char* name;
    Force f;
    std::function<double(double)> h1, h2;
};

Vec field(const Force& f, double t, const Vec& y) {
    const double w = 1.0 - y[1] * y[1];
    return {y[1], w * std::sqrt(w) * f(t, y[0], y[1])};
}

// Returns false when |p| leaves [-1, 1] or the band check fails.
bool rk4(const Case& c, Vec& y, double t0, double t1, double h, bool band = false) {
    const long n = std::lround((t1 - t0) / h);
    const double dt = (t1 - t0) / double(n);
    double t = t0;
    for (long i = 0; i < n; ++i) {
        const Vec k1 = field(c.f, t, y);
        const Vec y2{y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]};
        if (std::fabs(y2[1]) >= 1.0) return false;
        const Vec k2 = field(c.f, t + 0.5 * dt, y2);
        const Vec y3{y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]};
        if (std::fabs(y3[1]) >= 1.0) return false;
        const Vec k3 = field(c.f, t + 0.5 * dt, y3);
        const Vec y4{y[0] + dt * k3[0], y[1] + dt * k3[1]};
        if (std::fabs(y4[1]) >= 1.0) return false;
        const Vec k4 = field(c.f, t + dt, y4);
        y[0] += dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        y[1] += dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
        t = t0 + double(i + 1) * dt;
        if (std::fabs(y[1]) >= 1.0 || !std::isfinite(y[0])) return false;
        if (band && !(y[0] > c.h1(t) && y[0] < c.h2(t))) return false;
    }
    return true;
}

bool displacement(const Case& c, const Vec& x, double h, Vec& d, bool band = false) {
    Vec y = x;
    if (!rk4(c, y, 0.0, 1.0, h, band)) return false;
    d = {y[0] - x[0], y[1] - x[1]};
    return true;
}

bool newton(const Case& c, Vec& x, double h) {
    for (int it = 0; it < 40; ++it) {
        Vec d;
        if (!displacement(c, x, h, d)) return false;
        if (std::hypot(d[0], d[1]) < 1e-13) return true;
        const double e = 1e-6;
        double J[2][2];
        for (int k = 0; k < 2; ++k) {
            Vec xp = x, xm = x, dp, dm;
            xp[k] += e;
            xm[k] -= e;
            if (!displacement(c, xp, h, dp) || !displacement(c, xm, h, dm)) return false;
            J[0][k] = (dp[0] - dm[0]) / (2 * e);
            J[1][k] = (dp[1] - dm[1]) / (2 * e);
        }
        const double det = J[0][0] * J[1][1] - J[0][1] * J[1][0];
        if (det == 0.0) return false;
        x[0] -= (J[1][1] * d[0] - J[0][1] * d[1]) / det;
        x[1] -= (-J[1][0] * d[0] + J[0][0] * d[1]) / det;
        if (std::fabs(x[1]) >= 1.0) return false;
    }
    Vec d;
    return displacement(c, x, h, d) && std::hypot(d[0], d[1]) < 1e-11;
}

// 400 x 400 cell-centre scan of |P(x) - x| over W_0, Newton from the best 10.
void grid_newton(const Case& c) {
    const int n = 400;
    const double q_lo = c.h1(0.0), q_hi = c.h2(0.0);
    struct Cell {
        double norm;
        Vec x;
    };
    std::vector<Cell> cells;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const Vec x{q_lo + (i + 0.5) * (q_hi - q_lo) / n, -1.0 + (j + 0.5) * 2.0 / n};
            Vec d;
            if (displacement(c, x, 1e-3, d)) cells.push_back({std::hypot(d[0], d[1]), x});
        }
    }
    std::partial_sort(cells.begin(), cells.begin() + 10, cells.end(),
                      [](const Cell& a, const Cell& b) { return a.norm < b.norm; });
    std::vector<Vec> found;
    for (int k = 0; k < 10; ++k) {
        Vec x = cells[k].x;
        if (!newton(c, x, 1e-6)) continue;
        Vec d;
        const bool in_band = displacement(c, x, 1e-6, d, true);
        if (!in_band) continue;
        bool dup = false;
        for (const Vec& y : found) dup = dup || std::hypot(x[0] - y[0], x[1] - y[1]) < 1e-6;
        if (!dup) found.push_back(x);
    }
    std::printf("%s: %zu in-band fixed point(s)\n", c.name, found.size());
    for (const Vec& x : found) std::printf("  q* = %.17g  p* = %.17g\n", x[0], x[1]);
}

}  // namespace

int main() {
    const Case autonomous{"autonomous", [](double, double q, double) { return std::sin(q); },
                          [](double) { return -kPi / 2; }, [](double) { return kPi / 2; }};
    const Case forced{"forced", [](double t, double q, double) { return 0.5 * std::cos(2 * kPi * t) + std::sin(q); },
                      [](double) { return -kPi / 2; }, [](double) { return kPi / 2; }};
    auto psi = [](double t) { return 0.1 * std::sin(2 * kPi * t); };
    const Case rotating{"rotating",
                        [&](double t, double q, double) { return 5.0 * std::sin(psi(t) - q); },
                        [&](double t) { return psi(t) + kPi / 2; }, [&](double t) { return psi(t) + 3 * kPi / 2; }};

    // Period map of the forced case from (0.3, 0.2).
    Vec y{0.3, 0.2};
    rk4(forced, y, 0.0, 1.0, 1e-6);
    std::printf("forced period map from (0.3, 0.2): q = %.17g  p = %.17g\n", y[0], y[1]);

    // Autonomous pendulum from (0.1, 0) to t = 1.
    Vec z{0.1, 0.0};
    rk4(autonomous, z, 0.0, 1.0, 1e-6);
    std::printf("autonomous from (0.1, 0): q = %.17g  p = %.17g\n", z[0], z[1]);

    // Linearization of the autonomous period map at the origin.
    {
        const double e = 1e-6;
        double J[2][2];
        for (int k = 0; k < 2; ++k) {
            Vec xp{0, 0}, xm{0, 0};
            xp[k] += e;
            xm[k] -= e;
            rk4(autonomous, xp, 0.0, 1.0, 1e-6);
            rk4(autonomous, xm, 0.0, 1.0, 1e-6);
            J[0][k] = (xp[0] - xm[0]) / (2 * e);
            J[1][k] = (xp[1] - xm[1]) / (2 * e);
        }
        const double det = (1 - J[0][0]) * (1 - J[1][1]) - J[0][1] * J[1][0];
        std::printf("autonomous det(I - DP) at origin: %.17g\n", det);
    }

    // Worst certificate margins of the rotating case on a 10^6-point grid.
    {
        const long n = 1000000;
        double lower = INFINITY, upper = INFINITY, t_lower = 0, t_upper = 0, hyp = INFINITY;
        for (long i = 0; i < n; ++i) {
            const double t = double(i) / double(n);
            const double d1 = 0.2 * kPi * std::cos(2 * kPi * t);
            const double d2 = -0.4 * kPi * kPi * std::sin(2 * kPi * t);
            const double w = std::pow(1 - d1 * d1, 1.5);
            const double ml = -(w * 5.0 * std::sin(-kPi / 2) - d2);  // -(residual on h1)
            const double mu = w * 5.0 * std::sin(-3 * kPi / 2) - d2;
            if (ml < lower) lower = ml, t_lower = t;
            if (mu < upper) upper = mu, t_upper = t;
            hyp = std::min(hyp, 5.0 - std::fabs(d2) / std::pow(1 - d1 * d1, 1.5));
        }
        std::printf("rotating worst lower margin %.17g at t = %.6f\n", lower, t_lower);
        std::printf("rotating worst upper margin %.17g at t = %.6f\n", upper, t_upper);
        std::printf("rotating field_strength margin %.17g\n", hyp);
    }

    grid_newton(autonomous);
    grid_newton(forced);
    grid_newton(rotating);
    const Case curve{"curve", [](double, double q, double) { return -2.0 * std::cos(q); }, [](double) { return 0.0; },
                     [](double) { return kPi; }};
    grid_newton(curve);
}
