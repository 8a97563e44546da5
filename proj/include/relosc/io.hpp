#pragma once

// Problem files (TOML in), reports (JSON out), trajectories (CSV out).

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "relosc/barrier.hpp"
#include "relosc/dynamics.hpp"
#include "relosc/error.hpp"
#include "relosc/integrate.hpp"
#include "relosc/poincare.hpp"
#include "relosc/scenarios.hpp"
#include "relosc/segment.hpp"

namespace relosc {

inline constexpr int kSchemaVersion = 1;

/// Schema violation in a problem file, with the offending field and line.
class SchemaError : public ValidationError {
public:
    SchemaError(const std::string& field, std::size_t line, const std::string& what)
        : ValidationError(format(field, line, what)), field_(field), line_(line) {}

    const std::string& field() const { return field_; }
    std::size_t line() const { return line_; }

private:
    static std::string format(const std::string& field, std::size_t line, const std::string& what) {
        std::string s;
        if (line > 0) s += "line " + std::to_string(line) + ": ";
        if (!field.empty()) s += field + ": ";
        return s + what;
    }

    std::string field_;
    std::size_t line_;
};

struct ProblemSection {
    std::string force;
    double period = 1.0;
    Topology topology = Topology::line;
    bool operator==(const ProblemSection&) const = default;
};

struct BarrierSection {
    std::string h1;
    std::string h2;
    bool operator==(const BarrierSection&) const = default;
};

/// Optional overrides of integrator and search defaults.
struct SolverSection {
    std::optional<double> rel_tol, abs_tol, max_step, luminal_guard;
    std::optional<std::int64_t> max_steps, grid, boundary_n, max_cells;
    std::optional<double> band_inset, luminal_margin, min_cell, newton_tol, dedup_radius, index_radius;
    bool operator==(const SolverSection&) const = default;

    IntegratorOptions integrator() const {
        IntegratorOptions o;
        if (rel_tol) o.rel_tol = *rel_tol;
        if (abs_tol) o.abs_tol = *abs_tol;
        if (max_step) o.max_step = *max_step;
        if (luminal_guard) o.luminal_guard = *luminal_guard;
        if (max_steps) o.max_steps = std::size_t(*max_steps);
        o.validate();
        return o;
    }

    SearchOptions search() const {
        SearchOptions s;
        s.integrator = integrator();
        if (band_inset) s.band_inset = *band_inset;
        if (luminal_margin) s.luminal_margin = *luminal_margin;
        if (min_cell) s.min_cell = *min_cell;
        if (newton_tol) s.newton_tol = *newton_tol;
        if (dedup_radius) s.dedup_radius = *dedup_radius;
        if (index_radius) s.index_radius = *index_radius;
        if (boundary_n) s.boundary_n = std::size_t(*boundary_n);
        if (max_cells) s.max_cells = std::size_t(*max_cells);
        return s;
    }
};

/// Either [problem] + [barriers] or [scenario], plus optional [solver].
struct ProblemFile {
    std::optional<ProblemSection> problem;
    std::optional<BarrierSection> barriers;
    std::optional<ScenarioParams> scenario;
    SolverSection solver;
    bool operator==(const ProblemFile&) const = default;
};

/// Everything needed to run a command: the dynamics, the barriers, and the scenario if any.
struct ResolvedProblem {
    Problem problem;
    BarrierPair barriers;
    std::optional<Scenario> scenario;
};

namespace detail {

inline std::size_t line_of(const toml::node& n) { return std::size_t(n.source().begin.line); }

class TableReader {
public:
    TableReader(const toml::table& table, std::string section) : table_(table), section_(std::move(section)) {}

    ~TableReader() = default;

    std::optional<double> number(std::string_view key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        double v = 0.0;
        if (auto f = n->as_floating_point()) {
            v = f->get();
        } else if (auto i = n->as_integer()) {
            v = double(i->get());
        } else {
            throw SchemaError(field(key), line_of(*n), "expected a number");
        }
        if (!std::isfinite(v)) throw SchemaError(field(key), line_of(*n), "number must be finite");
        return v;
    }

    std::optional<std::int64_t> integer(std::string_view key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        auto i = n->as_integer();
        if (!i) throw SchemaError(field(key), line_of(*n), "expected an integer");
        if (i->get() <= 0) throw SchemaError(field(key), line_of(*n), "must be positive");
        return i->get();
    }

    std::optional<std::string> string(std::string_view key) {
        const toml::node* n = take(key);
        if (!n) return std::nullopt;
        auto s = n->as_string();
        if (!s) throw SchemaError(field(key), line_of(*n), "expected a string");
        return s->get();
    }

    double required_number(std::string_view key) {
        auto v = number(key);
        if (!v) throw SchemaError(field(key), line_of(table_), "missing required field");
        return *v;
    }

    std::string required_string(std::string_view key) {
        auto v = string(key);
        if (!v) throw SchemaError(field(key), line_of(table_), "missing required field");
        return *v;
    }

    /// Rejects keys that were never read.
    void finish() const {
        for (const auto& [k, v] : table_) {
            if (std::find(seen_.begin(), seen_.end(), std::string(k.str())) == seen_.end())
                throw SchemaError(section_ + "." + std::string(k.str()), line_of(v), "unknown field");
        }
    }

    std::size_t line(std::string_view key) const {
        if (const toml::node* n = table_.get(key)) return line_of(*n);
        return line_of(table_);
    }

    std::string field(std::string_view key) const { return section_ + "." + std::string(key); }

private:
    const toml::node* take(std::string_view key) {
        seen_.emplace_back(key);
        return table_.get(key);
    }

    const toml::table& table_;
    std::string section_;
    std::vector<std::string> seen_;
};

inline void check_expression(TableReader& r, std::string_view key, const std::string& text, VarSet vars) {
    try {
        (void)Expression::parse(text, vars);
    } catch (const ParseError& e) {
        throw SchemaError(r.field(key), r.line(key), e.what());
    }
}

inline ScenarioParams read_scenario(const toml::table& t) {
    TableReader r(t, "scenario");
    const std::string name = r.required_string("name");
    auto positive = [&](std::string_view key, double v) {
        if (!(v > 0.0)) throw SchemaError(r.field(key), r.line(key), "must be positive");
        return v;
    };
    ScenarioParams out;
    if (name == "pendulum") {
        PendulumParams p;
        p.alpha = positive("alpha", r.required_number("alpha"));
        p.gamma = r.number("gamma").value_or(0.0);
        p.f_ext = r.string("f_ext").value_or("0");
        p.period = positive("period", r.number("period").value_or(1.0));
        check_expression(r, "f_ext", p.f_ext, VarSet::all());
        out = p;
    } else if (name == "curve") {
        CurveParams p;
        p.y = r.required_string("y");
        p.alpha = positive("alpha", r.required_number("alpha"));
        p.gamma = r.number("gamma").value_or(0.0);
        p.f_ext = r.string("f_ext").value_or("0");
        p.period = positive("period", r.number("period").value_or(1.0));
        p.q1 = r.required_number("q1");
        p.q2 = r.required_number("q2");
        if (!(p.q1 < p.q2)) throw SchemaError(r.field("q2"), r.line("q2"), "q1 must be less than q2");
        check_expression(r, "y", p.y, VarSet{Var::q});
        check_expression(r, "f_ext", p.f_ext, VarSet::all());
        out = p;
    } else if (name == "rotating_field") {
        RotatingFieldParams p;
        p.f_mag = r.required_string("f_mag");
        p.psi = r.required_string("psi");
        p.gamma = r.number("gamma").value_or(0.0);
        p.period = positive("period", r.number("period").value_or(1.0));
        check_expression(r, "f_mag", p.f_mag, VarSet::time_only());
        check_expression(r, "psi", p.psi, VarSet::time_only());
        out = p;
    } else {
        throw SchemaError("scenario.name", r.line("name"),
                          "unknown scenario '" + name + "' (expected pendulum, curve or rotating_field)");
    }
    r.finish();
    return out;
}

inline SolverSection read_solver(const toml::table& t) {
    TableReader r(t, "solver");
    SolverSection s;
    s.rel_tol = r.number("rel_tol");
    s.abs_tol = r.number("abs_tol");
    s.max_step = r.number("max_step");
    s.luminal_guard = r.number("luminal_guard");
    s.max_steps = r.integer("max_steps");
    s.grid = r.integer("grid");
    s.boundary_n = r.integer("boundary_n");
    s.max_cells = r.integer("max_cells");
    s.band_inset = r.number("band_inset");
    s.luminal_margin = r.number("luminal_margin");
    s.min_cell = r.number("min_cell");
    s.newton_tol = r.number("newton_tol");
    s.dedup_radius = r.number("dedup_radius");
    s.index_radius = r.number("index_radius");
    r.finish();
    if (s.grid && *s.grid < 16) throw SchemaError("solver.grid", r.line("grid"), "must be at least 16");
    if (s.boundary_n && *s.boundary_n < 64)
        throw SchemaError("solver.boundary_n", r.line("boundary_n"), "must be at least 64");
    try {
        (void)s.integrator();
    } catch (const ValidationError& e) {
        throw SchemaError("solver", line_of(t), e.what());
    }
    return s;
}

inline std::string number_text(double v) {
    std::array<char, 64> buf{};
    auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    std::string s(buf.data(), res.ptr);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";  // keep TOML floats floats
    return s;
}

inline std::string quoted(std::string_view s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out + "\"";
}

}  // namespace detail

inline ProblemFile parse_problem_file(std::string_view text, std::string_view source_name = "problem") {
    toml::table doc;
    try {
        doc = toml::parse(text, source_name);
    } catch (const toml::parse_error& e) {
        throw SchemaError("", std::size_t(e.source().begin.line), std::string(e.description()));
    }

    ProblemFile file;
    for (const auto& [key, node] : doc) {
        const std::string k(key.str());
        if (k != "problem" && k != "barriers" && k != "scenario" && k != "solver")
            throw SchemaError(k, detail::line_of(node), "unknown section");
        if (!node.is_table()) throw SchemaError(k, detail::line_of(node), "expected a table");
    }

    if (const toml::table* t = doc["problem"].as_table()) {
        detail::TableReader r(*t, "problem");
        ProblemSection p;
        p.force = r.required_string("force");
        p.period = r.required_number("period");
        if (!(p.period > 0.0)) throw SchemaError("problem.period", r.line("period"), "must be positive");
        const std::string topo = r.string("topology").value_or("line");
        try {
            p.topology = topology_from_string(topo);
        } catch (const ValidationError& e) {
            throw SchemaError("problem.topology", r.line("topology"), e.what());
        }
        detail::check_expression(r, "force", p.force, VarSet::all());
        r.finish();
        file.problem = p;
    }
    if (const toml::table* t = doc["barriers"].as_table()) {
        detail::TableReader r(*t, "barriers");
        BarrierSection b;
        b.h1 = r.required_string("h1");
        b.h2 = r.required_string("h2");
        detail::check_expression(r, "h1", b.h1, VarSet::time_only());
        detail::check_expression(r, "h2", b.h2, VarSet::time_only());
        r.finish();
        file.barriers = b;
    }
    if (const toml::table* t = doc["scenario"].as_table()) file.scenario = detail::read_scenario(*t);
    if (const toml::table* t = doc["solver"].as_table()) file.solver = detail::read_solver(*t);

    const bool explicit_problem = file.problem || file.barriers;
    if (file.scenario && explicit_problem)
        throw SchemaError("scenario", detail::line_of(*doc.get("scenario")),
                          "[scenario] cannot be combined with [problem]/[barriers]");
    if (!file.scenario) {
        if (!file.problem) throw SchemaError("problem", 0, "missing [problem] section (or use [scenario])");
        if (!file.barriers) throw SchemaError("barriers", 0, "missing [barriers] section (or use [scenario])");
    }
    return file;
}

inline ProblemFile read_problem_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read problem file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_problem_file(ss.str(), path);
}

inline std::string emit_problem_file(const ProblemFile& file) {
    using detail::number_text;
    using detail::quoted;
    std::ostringstream out;
    if (file.problem) {
        out << "[problem]\n";
        out << "force = " << quoted(file.problem->force) << "\n";
        out << "period = " << number_text(file.problem->period) << "\n";
        out << "topology = " << quoted(to_string(file.problem->topology)) << "\n\n";
    }
    if (file.barriers) {
        out << "[barriers]\n";
        out << "h1 = " << quoted(file.barriers->h1) << "\n";
        out << "h2 = " << quoted(file.barriers->h2) << "\n\n";
    }
    if (file.scenario) {
        out << "[scenario]\n";
        out << "name = " << quoted(scenario_name(*file.scenario)) << "\n";
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, PendulumParams>) {
                    out << "alpha = " << number_text(p.alpha) << "\n";
                    out << "gamma = " << number_text(p.gamma) << "\n";
                    out << "f_ext = " << quoted(p.f_ext) << "\n";
                    out << "period = " << number_text(p.period) << "\n";
                } else if constexpr (std::is_same_v<T, CurveParams>) {
                    out << "y = " << quoted(p.y) << "\n";
                    out << "alpha = " << number_text(p.alpha) << "\n";
                    out << "gamma = " << number_text(p.gamma) << "\n";
                    out << "f_ext = " << quoted(p.f_ext) << "\n";
                    out << "period = " << number_text(p.period) << "\n";
                    out << "q1 = " << number_text(p.q1) << "\n";
                    out << "q2 = " << number_text(p.q2) << "\n";
                } else {
                    out << "f_mag = " << quoted(p.f_mag) << "\n";
                    out << "psi = " << quoted(p.psi) << "\n";
                    out << "gamma = " << number_text(p.gamma) << "\n";
                    out << "period = " << number_text(p.period) << "\n";
                }
            },
            *file.scenario);
        out << "\n";
    }
    const SolverSection& s = file.solver;
    if (s != SolverSection{}) {
        out << "[solver]\n";
        auto num = [&](const char* key, const std::optional<double>& v) {
            if (v) out << key << " = " << number_text(*v) << "\n";
        };
        auto count = [&](const char* key, const std::optional<std::int64_t>& v) {
            if (v) out << key << " = " << *v << "\n";
        };
        num("rel_tol", s.rel_tol);
        num("abs_tol", s.abs_tol);
        num("max_step", s.max_step);
        num("luminal_guard", s.luminal_guard);
        count("max_steps", s.max_steps);
        count("grid", s.grid);
        count("boundary_n", s.boundary_n);
        count("max_cells", s.max_cells);
        num("band_inset", s.band_inset);
        num("luminal_margin", s.luminal_margin);
        num("min_cell", s.min_cell);
        num("newton_tol", s.newton_tol);
        num("dedup_radius", s.dedup_radius);
        num("index_radius", s.index_radius);
    }
    return out.str();
}

inline ResolvedProblem resolve(const ProblemFile& file) {
    if (file.scenario) {
        Scenario sc = build_scenario(*file.scenario);
        Problem problem = sc.problem;
        BarrierPair barriers = sc.barriers;
        return {std::move(problem), std::move(barriers), std::move(sc)};
    }
    Problem problem(file.problem->force, file.problem->period, file.problem->topology);
    BarrierPair barriers(file.barriers->h1, file.barriers->h2, file.problem->period);
    return {std::move(problem), std::move(barriers), std::nullopt};
}

// ---- JSON -------------------------------------------------------------------

using Json = nlohmann::ordered_json;

inline Json to_json(const HypothesisCheck& h) {
    Json j;
    j["name"] = h.name;
    j["satisfied"] = h.satisfied;
    j["worst_margin"] = h.worst_margin;  // non-finite prints as null
    j["argmin_t"] = h.argmin_t;
    return j;
}

inline Json to_json(const CertificateReport& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["verdict"] = r.passed() ? "pass" : "fail";
    j["grid_size"] = r.grid_size;
    j["refined"] = r.refined;
    j["hypotheses"] = Json::array();
    for (const auto& h : r.hypotheses) j["hypotheses"].push_back(to_json(h));
    return j;
}

inline Json to_json(const Scenario& sc) {
    Json j;
    j["name"] = sc.name();
    j["force"] = sc.problem.force().source();
    j["h1"] = sc.barriers.h1().source();
    j["h2"] = sc.barriers.h2().source();
    j["hypotheses_hold"] = sc.hypotheses_hold();
    j["hypotheses"] = Json::array();
    for (const auto& h : sc.hypotheses) j["hypotheses"].push_back(to_json(h));
    return j;
}

inline Json to_json(const PeriodicSolution& s, Topology topology) {
    Json j;
    j["q"] = s.fixed_point.q;
    j["p"] = s.fixed_point.p;
    if (topology == Topology::circle) {
        const double two_pi = 2.0 * std::numbers::pi;
        j["q_mod_2pi"] = s.fixed_point.q - two_pi * std::floor(s.fixed_point.q / two_pi);
    }
    j["residual"] = s.residual;
    if (s.local_index)
        j["local_index"] = *s.local_index;
    else
        j["local_index"] = "undetermined";
    j["in_band"] = s.in_band;
    j["band_clearance"] = s.band_clearance;
    j["trajectory_samples"] = s.trajectory.size();
    return j;
}

inline Json to_json(const SearchStats& st) {
    Json j;
    j["cells_examined"] = st.cells_examined;
    j["newton_candidates"] = st.newton_candidates;
    j["additivity_checks"] = st.additivity_checks;
    j["additivity_violations"] = st.additivity_violations;
    j["budget_exhausted"] = st.budget_exhausted;
    if (st.seed_winding)
        j["seed_winding"] = *st.seed_winding;
    else
        j["seed_winding"] = nullptr;
    return j;
}

inline Json to_json(const TrajectoryEvent& e) {
    Json j;
    j["t"] = e.t;
    j["kind"] = to_string(e.kind);
    j["q"] = e.q;
    j["p"] = e.p;
    return j;
}

inline Json events_json(const Trajectory& traj) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["t_begin"] = traj.t_begin();
    j["t_end"] = traj.t_end();
    j["samples"] = traj.samples().size();
    j["events"] = Json::array();
    for (const auto& e : traj.events()) j["events"].push_back(to_json(e));
    return j;
}

/// Columns t, q, p, u with 17 significant digits.
inline void write_trajectory_csv(std::ostream& out, const std::vector<TrajectorySample>& samples) {
    out << "t,q,p,u\n";
    char line[160];
    for (const auto& s : samples) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g\n", s.t, s.q, s.p, s.u);
        out << line;
    }
}

}  // namespace relosc
