// relosc: verify barrier certificates, search for periodic solutions, trace trajectories.
//
// Exit codes: 0 success, 1 usage or parse error, 2 certificate failure, 3 runtime or search failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "relosc/relosc.hpp"

namespace {

using namespace relosc;

enum Exit : int { kOk = 0, kUsage = 1, kCertificate = 2, kRuntime = 3 };

struct Failure {
    int code;
    std::string message;
};

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::size_t grid_for(const ResolvedProblem& rp, const SolverSection& solver, std::optional<std::size_t> flag) {
    if (flag) return *flag;
    if (solver.grid) return std::size_t(*solver.grid);
    return suggest_grid(rp.barriers, rp.problem);
}

void print_report_text(const CertificateReport& r, const std::optional<Scenario>& sc) {
    if (sc) {
        std::cout << "scenario " << sc->name() << ": hypotheses " << (sc->hypotheses_hold() ? "hold" : "FAIL") << "\n";
        for (const auto& h : sc->hypotheses)
            std::printf("  %-16s %-4s margin %.17g at %.17g\n", h.name.c_str(), h.satisfied ? "ok" : "FAIL",
                        h.worst_margin, h.argmin_t);
    }
    std::cout << "certificate: " << (r.passed() ? "pass" : "FAIL") << " (grid " << r.grid_size
              << (r.refined ? ", refined" : "") << ")\n";
    for (const auto& h : r.hypotheses)
        std::printf("  %-16s %-4s margin %.17g at t = %.17g\n", h.name.c_str(), h.satisfied ? "ok" : "FAIL",
                    h.worst_margin, h.argmin_t);
}

Json verify_json(const CertificateReport& r, const std::optional<Scenario>& sc) {
    Json j = to_json(r);
    j["scenario"] = sc ? to_json(*sc) : Json(nullptr);
    return j;
}

bool verified(const CertificateReport& r, const std::optional<Scenario>& sc) {
    return r.passed() && (!sc || sc->hypotheses_hold());
}

int cmd_verify(const ProblemFile& file, std::optional<std::size_t> grid, bool refine, bool text) {
    const ResolvedProblem rp = resolve(file);
    const CertificateReport r = verify_certificate(rp.barriers, rp.problem, grid_for(rp, file.solver, grid), refine);
    if (text)
        print_report_text(r, rp.scenario);
    else
        print_json(verify_json(r, rp.scenario));
    return verified(r, rp.scenario) ? kOk : kCertificate;
}

int cmd_solve(const ProblemFile& file, bool json, const std::string& csv_dir, bool force) {
    const ResolvedProblem rp = resolve(file);
    const std::size_t grid = grid_for(rp, file.solver, std::nullopt);
    const SegmentGeometry geometry = SegmentGeometry::uncertified(rp.barriers, rp.problem, grid);
    const bool certified = verified(geometry.report(), rp.scenario);
    if (!certified && !force) {
        if (json)
            print_json(verify_json(geometry.report(), rp.scenario));
        else
            print_report_text(geometry.report(), rp.scenario);
        std::cerr << "relosc: certificate failed; not searching (use --force-search to override)\n";
        return kCertificate;
    }

    std::optional<SearchResult> found;
    std::string failure;
    try {
        found = find_periodic(geometry, file.solver.search());
    } catch (const SearchError& e) {
        if (!json) throw;
        failure = e.what();
    }
    const SearchResult result = found.value_or(SearchResult{});

    if (!csv_dir.empty()) {
        std::filesystem::create_directories(csv_dir);
        for (std::size_t k = 0; k < result.solutions.size(); ++k) {
            const std::string path = csv_dir + "/solution_" + std::to_string(k) + ".csv";
            std::ofstream out(path);
            if (!out) throw ValidationError("cannot write '" + path + "'");
            write_trajectory_csv(out, result.solutions[k].trajectory);
        }
    }

    if (json) {
        Json j;
        j["schema_version"] = kSchemaVersion;
        j["conforming"] = certified;
        j["certificate"] = to_json(geometry.report());
        j["scenario"] = rp.scenario ? to_json(*rp.scenario) : Json(nullptr);
        j["topology"] = to_string(rp.problem.topology());
        if (certified)
            j["segment_index"] = geometry.fixed_point_index().index;
        else
            j["segment_index"] = nullptr;
        j["solutions"] = Json::array();
        for (const auto& s : result.solutions) j["solutions"].push_back(to_json(s, rp.problem.topology()));
        j["stats"] = found ? to_json(result.stats) : Json(nullptr);
        print_json(j);
        if (!found) {
            std::cerr << "relosc: " << failure << "\n";
            return kRuntime;
        }
    } else {
        if (!certified) std::cout << "WARNING: certificate failed; results are non-conforming\n";
        std::cout << result.solutions.size() << " periodic solution(s)\n";
        for (const auto& s : result.solutions) {
            std::printf("  q = %.17g  p = %.17g  residual %.3g  index %s  %s\n", s.fixed_point.q, s.fixed_point.p,
                        s.residual, s.local_index ? std::to_string(*s.local_index).c_str() : "undetermined",
                        s.in_band ? "in band" : "leaves band");
        }
    }
    return kOk;
}

int cmd_trace(const ProblemFile& file, double q0, double p0, double t_end, const std::string& csv_path) {
    if (!std::isfinite(q0) || !(std::fabs(p0) < 1.0) || !std::isfinite(t_end))
        throw ValidationError("trace needs finite q0, |p0| < 1 and a finite t-end");
    const ResolvedProblem rp = resolve(file);
    const IntegratorOptions opt = file.solver.integrator();
    int code = kOk;
    Json events;
    try {
        const Trajectory traj = integrate(0.0, q0, p0, t_end, rp.problem, opt, &rp.barriers);
        events = events_json(traj);
        if (!csv_path.empty()) {
            std::ofstream out(csv_path);
            if (!out) throw ValidationError("cannot write '" + csv_path + "'");
            write_trajectory_csv(out, traj.samples());
        } else {
            write_trajectory_csv(std::cout, traj.samples());
        }
        if (traj.has_event(EventKind::luminal_guard)) {
            const auto& last = traj.back();
            std::cerr << "relosc: luminal guard reached at t = " << last.t << " (q = " << last.q << ", p = " << last.p
                      << ")\n";
            code = kRuntime;
        }
    } catch (const IntegrationError& e) {
        events = Json{{"schema_version", kSchemaVersion}, {"error", e.what()}};
        code = kRuntime;
        std::cerr << "relosc: " << e.what() << "\n";
    }
    if (!csv_path.empty()) {
        std::ofstream side(csv_path + ".events.json");
        side << events.dump(2) << "\n";
    } else {
        std::cerr << events.dump(2) << "\n";
    }
    return code;
}

struct ExampleFlags {
    std::optional<double> alpha, gamma, period, q1, q2;
    std::optional<std::string> f, y, psi, f0;
    std::string emit;
    bool run = false;
};

ProblemFile example_file(const std::string& name, const ExampleFlags& fl) {
    ProblemFile file;
    if (name == "pendulum") {
        PendulumParams p;
        p.alpha = fl.alpha.value_or(p.alpha);
        p.gamma = fl.gamma.value_or(p.gamma);
        p.f_ext = fl.f.value_or(p.f_ext);
        p.period = fl.period.value_or(p.period);
        file.scenario = p;
    } else if (name == "curve") {
        CurveParams p;
        p.y = fl.y.value_or(p.y);
        p.alpha = fl.alpha.value_or(p.alpha);
        p.gamma = fl.gamma.value_or(p.gamma);
        p.f_ext = fl.f.value_or(p.f_ext);
        p.period = fl.period.value_or(p.period);
        p.q1 = fl.q1.value_or(p.q1);
        p.q2 = fl.q2.value_or(p.q2);
        file.scenario = p;
    } else if (name == "rotating-field" || name == "rotating_field") {
        RotatingFieldParams p;
        p.f_mag = fl.f0.value_or(p.f_mag);
        p.psi = fl.psi.value_or(p.psi);
        p.gamma = fl.gamma.value_or(p.gamma);
        p.period = fl.period.value_or(p.period);
        file.scenario = p;
    } else {
        throw Failure{kUsage, "unknown example '" + name + "' (expected pendulum, curve or rotating-field)"};
    }
    // reparse so the generated text passes the same validation as a user file
    return parse_problem_file(emit_problem_file(file));
}

int cmd_example(const std::string& name, const ExampleFlags& fl) {
    const ProblemFile file = example_file(name, fl);
    const std::string text = emit_problem_file(file);
    if (!fl.emit.empty()) {
        std::ofstream out(fl.emit);
        if (!out) throw ValidationError("cannot write '" + fl.emit + "'");
        out << text;
    }
    if (!fl.run) {
        if (fl.emit.empty()) std::cout << text;
        return kOk;
    }
    const ResolvedProblem rp = resolve(file);
    const CertificateReport r = verify_certificate(rp.barriers, rp.problem, grid_for(rp, file.solver, std::nullopt));
    if (!verified(r, rp.scenario)) {
        print_json(verify_json(r, rp.scenario));
        return kCertificate;
    }
    return cmd_solve(file, true, "", false);
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const CertificateError*>(&e)) return kCertificate;
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return kUsage;
    return kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relosc: periodic solutions of forced relativistic oscillators via barrier certificates"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "relosc 1.0.0");

    std::string path;
    std::optional<std::size_t> grid;
    bool refine = false, text = false, json_flag = false, force = false;
    std::string csv;
    double q0 = 0.0, p0 = 0.0, t_end = 0.0;
    std::string example_name;
    ExampleFlags fl;

    auto* verify = app.add_subcommand("verify", "check the barrier certificate hypotheses");
    verify->add_option("file", path, "problem file (TOML)")->required();
    verify->add_option("--grid", grid, "grid points per period (default: from [solver] or suggested)")
        ->check(CLI::Range(std::size_t(16), std::size_t(1) << 24));
    verify->add_flag("--refine", refine, "golden-section refinement of each worst margin");
    auto* jf = verify->add_flag("--json", json_flag, "JSON report (default)");
    verify->add_flag("--text", text, "human-readable report")->excludes(jf);

    auto* solve = app.add_subcommand("solve", "locate periodic solutions inside the band");
    solve->add_option("file", path, "problem file (TOML)")->required();
    solve->add_flag("--json", json_flag, "JSON report");
    solve->add_option("--csv-out", csv, "directory for per-solution trajectory CSV files");
    solve->add_flag("--force-search", force, "search even if the certificate fails (non-conforming)");

    auto* trace = app.add_subcommand("trace", "integrate one trajectory");
    trace->add_option("file", path, "problem file (TOML)")->required();
    trace->add_option("--q0", q0, "initial position")->required();
    trace->add_option("--p0", p0, "initial velocity, |p0| < 1")->required();
    trace->add_option("--t-end", t_end, "final time")->required();
    trace->add_option("--csv-out", csv, "CSV path; events go to <path>.events.json");

    auto* example = app.add_subcommand("example", "generate (and optionally run) a scenario problem file");
    example->add_option("name", example_name, "pendulum | curve | rotating-field")->required();
    example->add_option("--alpha", fl.alpha, "gravity coefficient");
    example->add_option("--gamma", fl.gamma, "friction coefficient");
    example->add_option("--f", fl.f, "external force f_ext(t, q, p)");
    example->add_option("--period", fl.period, "period T");
    example->add_option("--y", fl.y, "curve profile y(q)");
    example->add_option("--q1", fl.q1, "left barrier");
    example->add_option("--q2", fl.q2, "right barrier");
    example->add_option("--psi", fl.psi, "field direction psi(t)");
    example->add_option("--f0", fl.f0, "field strength f(t)");
    example->add_option("--emit", fl.emit, "write the generated problem file here");
    example->add_flag("--run", fl.run, "verify and solve the generated problem");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*verify) return cmd_verify(read_problem_file(path), grid, refine, text);
        if (*solve) return cmd_solve(read_problem_file(path), json_flag, csv, force);
        if (*trace) return cmd_trace(read_problem_file(path), q0, p0, t_end, csv);
        if (*example) return cmd_example(example_name, fl);
    } catch (const Failure& f) {
        std::cerr << "relosc: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "relosc: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kUsage;
}
