#include "mffbsde/scenarios.hpp"

#include "mffbsde/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace mffbsde {

namespace {

using nlohmann::json;

double clip_to(double v, double c) { return std::max(-c, std::min(c, v)); }

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double sech2(double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
}

Eigen::VectorXd vec1(double v) { return Eigen::VectorXd::Constant(1, v); }

std::string format_level(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw SchemaError(path + " " + what);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) known = known || it.key() == key;
        if (!known) fail(path + "." + it.key(), "is not a recognized field");
    }
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) fail(path, "must be a number");
    return v.get<double>();
}

std::int64_t as_integer(const json& v, const std::string& path) {
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail(path, "must be an integer");
    return v.get<std::int64_t>();
}

std::string as_string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(path, "must be a string");
    return v.get<std::string>();
}

bool as_bool(const json& v, const std::string& path) {
    if (!v.is_boolean()) fail(path, "must be a boolean");
    return v.get<bool>();
}

std::vector<double> as_number_array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(path, "must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

/// Registered coefficient bundle: parameter names with defaults plus the
/// dimensions and default start point the scenario schema fills in.
struct BundleDef {
    bool game = false;
    int state_dim = 1;
    std::vector<std::pair<std::string, double>> params;
    double default_x0 = 0.0;
};

const std::map<std::string, BundleDef>& bundle_registry() {
    static const std::map<std::string, BundleDef> registry = {
        {"brownian", {false, 1, {{"sigma", 1.0}}, 0.0}},
        {"constant_drift", {false, 1, {{"c", 1.0}, {"sigma", 1.0}}, 0.0}},
        {"ou", {false, 1, {{"theta", 1.0}, {"sigma", 1.0}}, 1.0}},
        {"tanh_mean_drift", {false, 1, {{"scale", 0.5}, {"sigma", 1.0}}, 0.5}},
        {"clipped_identity", {false, 1, {{"clip", 10.0}}, 0.0}},
        {"bounded_adjoint", {true, 1, {{"c_lip", 1.0}, {"sigma", 1.0}}, 0.0}},
    };
    return registry;
}

struct ResolvedPopulation {
    std::string bundle;
    std::map<std::string, double> params;
    Eigen::VectorXd x0;
};

/// Everything a config can say, with defaults already applied. realize()
/// turns this into closures; emit_config() is its exact JSON image.
struct ResolvedConfig {
    std::string name = "custom";
    std::string description;
    double T = 1.0;
    double dt = 0.02;
    std::vector<ResolvedPopulation> populations;
    PsiConfig solver;
    bool is_game = false;
    ControlSet box;
    bool analytic_hooks = true;
    InitSpec inits{"constant", {0.0, 1.0}};
    json outputs;  // null unless the config carried an outputs section
};

double declared_ellipticity(double s) {
    return s > 0.0 ? std::max(s * s, 1.0 / (s * s)) : 1.0;
}

DiffusionFn constant_sigma(double s) {
    return [s](double, const Eigen::VectorXd&) { return Eigen::MatrixXd::Constant(1, 1, s); };
}

CoefficientBundle make_system_bundle(const std::string& bundle,
                                     const std::map<std::string, double>& p, std::size_t self) {
    CoefficientBundle c;
    c.state_dim = 1;
    c.value_dim = 1;
    c.noise_dim = 1;
    c.h = [](double, const Eigen::VectorXd& x) { return Eigen::VectorXd::Zero(x.size()); };
    c.b = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
             const Measures&) { return vec1(0.0); };
    c.f = [](double, const Eigen::VectorXd&, const Eigen::VectorXd&, const Eigen::MatrixXd&,
             const Measures&) { return vec1(0.0); };
    c.g = [](const Eigen::VectorXd& x, const Measures&) { return x; };
    c.growth_constant = 1.0;
    c.growth_exponent = 1.0;

    if (bundle == "brownian") {
        const double s = p.at("sigma");
        c.sigma = constant_sigma(s);
        c.ellipticity = declared_ellipticity(s);
    } else if (bundle == "constant_drift") {
        const double s = p.at("sigma");
        const double drift = p.at("c");
        c.b = [drift](double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                      const Eigen::MatrixXd&, const Measures&) { return vec1(drift); };
        c.sigma = constant_sigma(s);
        c.growth_constant = std::max(1.0, std::abs(drift));
        c.ellipticity = declared_ellipticity(s);
    } else if (bundle == "ou") {
        const double s = p.at("sigma");
        const double theta = p.at("theta");
        c.h = [theta](double, const Eigen::VectorXd& x) { return Eigen::VectorXd(-theta * x); };
        c.sigma = constant_sigma(s);
        c.ellipticity = declared_ellipticity(s);
    } else if (bundle == "tanh_mean_drift") {
        const double s = p.at("sigma");
        const double scale = p.at("scale");
        c.b = [scale, self](double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                            const Eigen::MatrixXd&, const Measures& m) {
            return vec1(scale * std::tanh(m[self].mean()(0)));
        };
        c.sigma = constant_sigma(s);
        c.growth_constant = std::max(1.0, std::abs(scale));
        c.ellipticity = declared_ellipticity(s);
    } else if (bundle == "clipped_identity") {
        const double clip = p.at("clip");
        c.b = [clip](double, const Eigen::VectorXd&, const Eigen::VectorXd& y,
                     const Eigen::MatrixXd&, const Measures&) { return vec1(clip_to(y(0), clip)); };
        c.f = [clip, self](double, const Eigen::VectorXd&, const Eigen::VectorXd&,
                           const Eigen::MatrixXd&, const Measures& m) {
            return vec1(clip_to(m[self].mean()(0), clip));
        };
        c.g = [clip, self](const Eigen::VectorXd&, const Measures& m) {
            return vec1(clip_to(m[self].mean()(0), clip));
        };
        c.sigma = constant_sigma(1.0);
        c.growth_constant = std::max(1.0, clip);
        c.ellipticity = 1.0;
    } else {
        throw UnknownBundle("no bundle named " + bundle);
    }
    return c;
}

GamePopulation make_bounded_adjoint_population(const std::map<std::string, double>& p,
                                               std::size_t self, const ControlSet& box,
                                               bool analytic) {
    const double cl = p.at("c_lip");
    const double s = p.at("sigma");
    GamePopulation pop;
    pop.state_dim = 1;
    pop.noise_dim = 1;
    pop.b = [cl, self](double, const Eigen::VectorXd& x, const Measures& m,
                       const Eigen::VectorXd& a) {
        return vec1(cl * std::tanh(x(0)) + 0.5 * cl * std::tanh(m[self].mean()(0)) - a(0));
    };
    pop.sigma = constant_sigma(s);
    pop.f = [cl](double, const Eigen::VectorXd& x, const Measures&, const Eigen::VectorXd& a) {
        return a.squaredNorm() + cl * softplus(x(0));
    };
    pop.g = [](const Eigen::VectorXd&, const Measures&) { return 0.0; };
    pop.controls = box;
    pop.convexity = 2.0;
    // Controlled drift magnitude tops out at 1.5 c_lip plus the largest
    // admissible control; the adjoint driver needs at least c_lip.
    pop.growth_constant = std::max(1.0, 1.5 * cl + box.upper(0));
    pop.ellipticity = declared_ellipticity(s);
    if (analytic) {
        pop.db_dx = [cl](double, const Eigen::VectorXd& x, const Measures&,
                         const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Constant(1, 1, cl * sech2(x(0)));
        };
        pop.db_da = [](double, const Eigen::VectorXd&, const Measures&, const Eigen::VectorXd&) {
            return Eigen::MatrixXd::Constant(1, 1, -1.0);
        };
        pop.df_dx = [cl](double, const Eigen::VectorXd& x, const Measures&,
                         const Eigen::VectorXd&) { return vec1(cl * sigmoid(x(0))); };
        pop.df_da = [](double, const Eigen::VectorXd&, const Measures&,
                       const Eigen::VectorXd& a) { return Eigen::VectorXd(2.0 * a); };
        pop.dg_dx = [](const Eigen::VectorXd&, const Measures&) { return vec1(0.0); };
        pop.minimizer = [box](double, const Eigen::VectorXd&, const Eigen::VectorXd& y,
                              const Measures&) { return box.project(vec1(0.5 * y(0))); };
    }
    return pop;
}

/// Per-bundle parameter range checks, raised with the field path so custom
/// configs get actionable messages.
void check_params(const ResolvedPopulation& pop, const std::string& path) {
    const auto get = [&](const char* key) { return pop.params.at(key); };
    if (pop.params.count("sigma") && get("sigma") < 0.0)
        fail(path + ".params.sigma", "must be nonnegative");
    if (pop.bundle == "clipped_identity" && !(get("clip") > 0.0))
        fail(path + ".params.clip", "must be positive");
    if (pop.bundle == "bounded_adjoint" && !(get("c_lip") > 0.0))
        fail(path + ".params.c_lip", "must be positive");
}

json emit_config(const ResolvedConfig& r) {
    json cfg;
    cfg["name"] = r.name;
    cfg["description"] = r.description;
    cfg["grid"] = json{{"T", r.T}, {"dt", r.dt}};

    json pops = json::array();
    for (const ResolvedPopulation& pop : r.populations) {
        json params = json::object();
        for (const auto& [key, value] : pop.params) params[key] = value;
        json x0 = json::array();
        for (Eigen::Index i = 0; i < pop.x0.size(); ++i) x0.push_back(pop.x0[i]);
        pops.push_back(json{{"bundle", pop.bundle}, {"params", params}, {"x0", x0}});
    }
    cfg["populations"] = pops;

    cfg["solver"] = json{{"mode", to_string(r.solver.mode)},
                         {"n_particles", r.solver.n_particles},
                         {"basis_degree", r.solver.basis_degree},
                         {"seed", r.solver.seed},
                         {"damping", r.solver.damping},
                         {"tol", r.solver.tol},
                         {"max_iter", r.solver.max_iter}};

    if (r.is_game) {
        json lower = json::array();
        json upper = json::array();
        for (Eigen::Index i = 0; i < r.box.dimension(); ++i) {
            lower.push_back(r.box.lower[i]);
            upper.push_back(r.box.upper[i]);
        }
        cfg["game"] = json{{"control_box", json{{"lower", lower}, {"upper", upper}}},
                           {"hooks", json{{"analytic", r.analytic_hooks}}}};
    }

    json levels = json::array();
    for (double level : r.inits.levels) levels.push_back(level);
    cfg["multistart"] = json{{"kind", r.inits.kind}, {"levels", levels}};

    if (!r.outputs.is_null()) cfg["outputs"] = r.outputs;
    return cfg;
}

PsiConfig parse_solver(const json& s, const std::string& path) {
    if (!s.is_object()) fail(path, "must be an object");
    check_keys(s, path,
               {"mode", "n_particles", "basis_degree", "seed", "damping", "tol", "max_iter"});
    PsiConfig c;
    if (s.contains("mode")) c.mode = psi_mode_from_string(as_string(s["mode"], path + ".mode"));
    if (s.contains("n_particles")) {
        const std::int64_t v = as_integer(s["n_particles"], path + ".n_particles");
        if (v < 1) fail(path + ".n_particles", "must be a positive integer");
        c.n_particles = static_cast<std::size_t>(v);
    }
    if (s.contains("basis_degree")) {
        const std::int64_t v = as_integer(s["basis_degree"], path + ".basis_degree");
        if (v < 0) fail(path + ".basis_degree", "must be nonnegative");
        c.basis_degree = static_cast<int>(v);
    }
    if (s.contains("seed")) {
        const json& v = s["seed"];
        if (v.is_number_unsigned())
            c.seed = v.get<std::uint64_t>();
        else {
            const std::int64_t raw = as_integer(v, path + ".seed");
            if (raw < 0) fail(path + ".seed", "must be nonnegative");
            c.seed = static_cast<std::uint64_t>(raw);
        }
    }
    if (s.contains("damping")) {
        const double v = as_number(s["damping"], path + ".damping");
        if (!(v > 0.0 && v <= 1.0)) fail(path + ".damping", "must lie in (0, 1]");
        c.damping = v;
    }
    if (s.contains("tol")) {
        const double v = as_number(s["tol"], path + ".tol");
        if (v < 0.0) fail(path + ".tol", "must be nonnegative");
        c.tol = v;
    }
    if (s.contains("max_iter")) {
        const std::int64_t v = as_integer(s["max_iter"], path + ".max_iter");
        if (v < 1) fail(path + ".max_iter", "must be at least 1");
        c.max_iter = static_cast<std::size_t>(v);
    }
    c.validate();
    return c;
}

ResolvedConfig parse_config(const json& cfg) {
    if (!cfg.is_object()) throw SchemaError("config must be a JSON object");
    check_keys(cfg, "config",
               {"name", "description", "grid", "populations", "solver", "game", "multistart",
                "outputs"});
    ResolvedConfig r;
    if (cfg.contains("name")) r.name = as_string(cfg["name"], "name");
    if (cfg.contains("description")) r.description = as_string(cfg["description"], "description");

    if (!cfg.contains("grid")) fail("grid", "is required");
    const json& grid = cfg["grid"];
    if (!grid.is_object()) fail("grid", "must be an object");
    check_keys(grid, "grid", {"T", "dt"});
    if (!grid.contains("T")) fail("grid.T", "is required");
    if (!grid.contains("dt")) fail("grid.dt", "is required");
    r.T = as_number(grid["T"], "grid.T");
    r.dt = as_number(grid["dt"], "grid.dt");
    if (!(r.T > 0.0)) fail("grid.T", "must be positive");
    if (!(r.dt > 0.0)) fail("grid.dt", "must be positive");
    if (r.dt > r.T) fail("grid.dt", "must not exceed grid.T");

    if (!cfg.contains("populations")) fail("populations", "is required");
    const json& pops = cfg["populations"];
    if (!pops.is_array() || pops.empty()) fail("populations", "must be a nonempty array");
    bool first = true;
    for (std::size_t i = 0; i < pops.size(); ++i) {
        const std::string path = "populations[" + std::to_string(i) + "]";
        const json& entry = pops[i];
        if (!entry.is_object()) fail(path, "must be an object");
        check_keys(entry, path, {"bundle", "params", "x0"});
        if (!entry.contains("bundle")) fail(path + ".bundle", "is required");
        ResolvedPopulation pop;
        pop.bundle = as_string(entry["bundle"], path + ".bundle");
        const auto it = bundle_registry().find(pop.bundle);
        if (it == bundle_registry().end()) throw UnknownBundle("no bundle named " + pop.bundle);
        const BundleDef& def = it->second;
        if (first) {
            r.is_game = def.game;
            first = false;
        } else if (def.game != r.is_game) {
            fail(path + ".bundle", "cannot mix game and plain bundles");
        }
        for (const auto& [key, value] : def.params) pop.params[key] = value;
        if (entry.contains("params")) {
            const json& params = entry["params"];
            if (!params.is_object()) fail(path + ".params", "must be an object");
            for (auto p = params.begin(); p != params.end(); ++p) {
                if (!pop.params.count(p.key()))
                    fail(path + ".params." + p.key(),
                         "is not a parameter of bundle " + pop.bundle);
                pop.params[p.key()] = as_number(p.value(), path + ".params." + p.key());
            }
        }
        if (entry.contains("x0")) {
            const std::vector<double> x0 = as_number_array(entry["x0"], path + ".x0");
            if (x0.size() != static_cast<std::size_t>(def.state_dim))
                fail(path + ".x0", "must have " + std::to_string(def.state_dim) + " entries");
            pop.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(),
                                                       static_cast<Eigen::Index>(x0.size()));
        } else {
            pop.x0 = Eigen::VectorXd::Constant(def.state_dim, def.default_x0);
        }
        check_params(pop, path);
        r.populations.push_back(std::move(pop));
    }

    if (cfg.contains("solver")) r.solver = parse_solver(cfg["solver"], "solver");

    if (cfg.contains("game") && !r.is_game) fail("game", "section requires a game bundle");
    bool box_given = false;
    if (cfg.contains("game")) {
        const json& game = cfg["game"];
        if (!game.is_object()) fail("game", "must be an object");
        check_keys(game, "game", {"control_box", "hooks"});
        if (game.contains("control_box")) {
            const json& box = game["control_box"];
            if (!box.is_object()) fail("game.control_box", "must be an object");
            check_keys(box, "game.control_box", {"lower", "upper"});
            if (!box.contains("lower") || !box.contains("upper"))
                fail("game.control_box", "needs lower and upper arrays");
            const auto lower = as_number_array(box["lower"], "game.control_box.lower");
            const auto upper = as_number_array(box["upper"], "game.control_box.upper");
            if (lower.empty() || lower.size() != upper.size())
                fail("game.control_box", "lower and upper must be nonempty and equally long");
            r.box.lower = Eigen::Map<const Eigen::VectorXd>(
                lower.data(), static_cast<Eigen::Index>(lower.size()));
            r.box.upper = Eigen::Map<const Eigen::VectorXd>(
                upper.data(), static_cast<Eigen::Index>(upper.size()));
            r.box.validate();
            box_given = true;
        }
        if (game.contains("hooks")) {
            const json& hooks = game["hooks"];
            if (!hooks.is_object()) fail("game.hooks", "must be an object");
            check_keys(hooks, "game.hooks", {"analytic"});
            if (hooks.contains("analytic"))
                r.analytic_hooks = as_bool(hooks["analytic"], "game.hooks.analytic");
        }
    }
    if (r.is_game && !box_given) {
        double c_lip = 1.0;
        for (const ResolvedPopulation& pop : r.populations)
            c_lip = std::max(c_lip, pop.params.at("c_lip"));
        r.box.lower = vec1(0.0);
        r.box.upper = vec1(std::max(5.0, std::exp(c_lip * r.T)));
    }

    if (cfg.contains("multistart")) {
        const json& ms = cfg["multistart"];
        if (!ms.is_object()) fail("multistart", "must be an object");
        check_keys(ms, "multistart", {"kind", "levels"});
        if (ms.contains("kind")) {
            r.inits.kind = as_string(ms["kind"], "multistart.kind");
            if (r.inits.kind != "sine" && r.inits.kind != "constant")
                fail("multistart.kind", "must be sine or constant");
        }
        if (!ms.contains("levels")) fail("multistart.levels", "is required");
        r.inits.levels = as_number_array(ms["levels"], "multistart.levels");
        if (r.inits.levels.empty()) fail("multistart.levels", "must not be empty");
    }

    if (cfg.contains("outputs")) {
        const json& outputs = cfg["outputs"];
        if (!outputs.is_object()) fail("outputs", "must be an object");
        check_keys(outputs, "outputs", {"csv"});
        json csv = json::array();
        if (outputs.contains("csv")) {
            if (!outputs["csv"].is_array()) fail("outputs.csv", "must be an array of strings");
            for (std::size_t i = 0; i < outputs["csv"].size(); ++i)
                csv.push_back(
                    as_string(outputs["csv"][i], "outputs.csv[" + std::to_string(i) + "]"));
        }
        r.outputs = json{{"csv", csv}};
    }
    return r;
}

Scenario realize(ResolvedConfig r) {
    Scenario s;
    s.name = r.name;
    s.description = r.description;
    s.grid = TimeGrid::from_step(r.T, r.dt);
    s.solver = r.solver;
    s.inits = r.inits;
    s.is_game = r.is_game;

    if (r.is_game) {
        for (std::size_t i = 0; i < r.populations.size(); ++i) {
            s.game.populations.push_back(make_bounded_adjoint_population(
                r.populations[i].params, i, r.box, r.analytic_hooks));
            s.game.initial_states.push_back(r.populations[i].x0);
        }
        s.game.validate();
    } else {
        for (std::size_t i = 0; i < r.populations.size(); ++i) {
            s.system.populations.push_back(
                make_system_bundle(r.populations[i].bundle, r.populations[i].params, i));
            s.system.initial_states.push_back(r.populations[i].x0);
        }
        s.system.validate();
        for (const ResolvedPopulation& pop : r.populations) {
            if (pop.bundle != "clipped_identity") continue;
            const double clip = pop.params.at("clip");
            for (double level : r.inits.levels)
                if (std::abs(level) > clip)
                    throw ClipViolation("init mean amplitude " + format_level(level) +
                                        " leaves the clip region of half width " +
                                        format_level(clip));
        }
    }
    s.config = emit_config(r);
    return s;
}

/// Terminal value of the scalar mean equation dm/dt = scale tanh(m) from
/// x0, the independent oracle behind the tanh_mean_drift expectation.
double tanh_mean_terminal(double scale, double x0, double horizon) {
    const int n = 1000;
    const double h = horizon / n;
    const auto rhs = [scale](double m) { return scale * std::tanh(m); };
    double m = x0;
    for (int i = 0; i < n; ++i) {
        const double k1 = rhs(m);
        const double k2 = rhs(m + 0.5 * h * k1);
        const double k3 = rhs(m + 0.5 * h * k2);
        const double k4 = rhs(m + h * k3);
        m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return m;
}

ResolvedConfig base_config(const std::string& name) {
    ResolvedConfig r;
    r.name = name;
    r.T = 1.0;
    r.dt = 0.02;
    r.solver.n_particles = 4000;
    r.solver.basis_degree = 3;
    r.solver.seed = 1;
    r.solver.damping = 1.0;
    r.solver.tol = 0.02;
    r.solver.max_iter = 20;
    return r;
}

Scenario simple_scenario(const std::string& name) {
    ResolvedConfig r = base_config(name);
    std::vector<ExpectedOutcome> expected;
    if (name == "brownian") {
        r.description = "Driftless unit noise baseline; the measure map ignores its argument.";
        r.populations = {{"brownian", {{"sigma", 1.0}}, vec1(0.0)}};
        r.inits = {"constant", {0.0, 1.0}};
        expected.push_back({"terminal_mean", 0.0, 0.05, "driftless average stays put"});
    } else if (name == "constant_drift") {
        r.description = "Unit constant drift with unit noise; the mean grows linearly in time.";
        r.populations = {{"constant_drift", {{"c", 1.0}, {"sigma", 1.0}}, vec1(0.0)}};
        r.inits = {"constant", {0.0, 1.0}};
        expected.push_back({"terminal_mean", 1.0, 0.05, "integrated constant drift"});
    } else if (name == "ou") {
        r.description =
            "Linear mean reversion in the uncontrolled drift part; the mean decays "
            "exponentially and the map has no measure coupling.";
        r.populations = {{"ou", {{"theta", 1.0}, {"sigma", 1.0}}, vec1(1.0)}};
        r.inits = {"constant", {1.0, 0.0}};
        expected.push_back({"terminal_mean", std::exp(-1.0), 0.05, "linear mean decay"});
    } else if (name == "tanh_mean_drift") {
        r.description =
            "Drift is a bounded increasing function of the own population mean, so the mean "
            "flow follows a scalar ODE with a unique solution.";
        r.populations = {{"tanh_mean_drift", {{"scale", 0.5}, {"sigma", 1.0}}, vec1(0.5)}};
        r.inits = {"constant", {0.0, 0.5, 1.0}};
        expected.push_back({"terminal_mean", tanh_mean_terminal(0.5, 0.5, 1.0), 0.05,
                            "mean ode integration"});
    } else {
        throw UnknownBundle("no scenario named " + name);
    }
    Scenario s = realize(std::move(r));
    s.expected = std::move(expected);
    return s;
}

}  // namespace

std::string to_string(PsiMode mode) {
    return mode == PsiMode::girsanov ? "girsanov" : "direct";
}

PsiMode psi_mode_from_string(const std::string& text) {
    if (text == "girsanov") return PsiMode::girsanov;
    if (text == "direct") return PsiMode::direct;
    throw SchemaError("mode must be girsanov or direct, got " + text);
}

std::vector<std::string> scenario_names() {
    return {"counterexample", "brownian",        "constant_drift",
            "ou",             "tanh_mean_drift", "bounded_adjoint_game"};
}

Scenario scenario_by_name(const std::string& name) {
    if (name == "counterexample") return scenario_counterexample();
    if (name == "bounded_adjoint_game") return scenario_bounded_adjoint_game();
    return simple_scenario(name);
}

Scenario scenario_counterexample(double clip, const std::vector<double>& mean_amplitudes) {
    ResolvedConfig r = base_config("counterexample");
    r.description =
        "Scalar system whose measure map fixes a whole family of mean flows a*sin(t): the "
        "drift clips the backward value and both the driver and the terminal value clip the "
        "population mean.";
    r.T = std::acos(-1.0) / 4.0;
    r.dt = r.T / 50.0;
    // The family tolerance: at the default particle count the measured rho
    // floor at a fixed point sits near 0.025, while the branches stay a
    // pairwise 0.28 apart, so 0.05 separates signal from sampling noise.
    r.solver.tol = 0.05;
    r.populations = {{"clipped_identity", {{"clip", clip}}, vec1(0.0)}};
    r.inits = {"sine", mean_amplitudes};
    Scenario s = realize(std::move(r));

    std::set<double> distinct(mean_amplitudes.begin(), mean_amplitudes.end());
    for (double a : distinct)
        s.expected.push_back({"y0_sine_amplitude_" + format_level(a), a, 0.05,
                              "cosine family member at time zero"});
    s.expected.push_back({"multistart_cluster_count", static_cast<double>(distinct.size()), 0.5,
                          "family members stay separated"});
    return s;
}

Scenario scenario_bounded_adjoint_game(double c_lip, double horizon, double sigma) {
    if (!(c_lip > 0.0)) throw SchemaError("c_lip must be positive");
    if (!(horizon > 0.0)) throw SchemaError("horizon must be positive");
    if (!(sigma > 0.0)) throw SchemaError("sigma must be positive");
    ResolvedConfig r = base_config("bounded_adjoint_game");
    r.description =
        "One population control game with Lipschitz data and a convex control penalty; the "
        "adjoint is pinned between zero and an exponential comparison solution and the best "
        "response is half the positive part of the adjoint.";
    r.T = horizon;
    r.dt = horizon / 50.0;
    r.solver.tol = 0.05;
    r.solver.max_iter = 10;
    r.is_game = true;
    r.populations = {{"bounded_adjoint", {{"c_lip", c_lip}, {"sigma", sigma}}, vec1(0.0)}};
    r.box.lower = vec1(0.0);
    r.box.upper = vec1(std::max(5.0, std::exp(c_lip * horizon)));
    r.analytic_hooks = true;
    r.inits = {"constant", {0.0}};
    Scenario s = realize(std::move(r));

    const double upper = std::exp(c_lip * horizon) - 1.0;
    s.expected.push_back(
        {"adjoint_upper_bound", upper, 0.02, "exponential comparison solution"});
    s.expected.push_back({"adjoint_lower_bound", 0.0, 0.02, "nonnegative driver comparison"});
    s.expected.push_back({"terminal_adjoint", 0.0, 0.0, "zero terminal cost gradient"});
    return s;
}

Scenario scenario_custom(const nlohmann::json& config) { return realize(parse_config(config)); }

std::vector<MeasureFlow> make_init_flows(const Scenario& scenario, const InitSpec& spec) {
    if (spec.levels.empty()) throw SchemaError("init spec needs at least one level");
    const bool sine = spec.kind == "sine";
    if (!sine && spec.kind != "constant")
        throw SchemaError("init kind must be sine or constant, got " + spec.kind);
    const std::size_t pops = scenario.population_count();
    if (pops == 0) throw SchemaError("scenario has no populations");

    std::vector<MeasureFlow> flows;
    flows.reserve(spec.levels.size());
    for (double level : spec.levels) {
        std::vector<std::vector<Eigen::VectorXd>> atoms(pops);
        for (std::size_t i = 0; i < pops; ++i) {
            const int dim = scenario.is_game ? scenario.game.populations[i].state_dim
                                             : scenario.system.populations[i].state_dim;
            atoms[i].resize(scenario.grid.points());
            for (std::size_t k = 0; k < scenario.grid.points(); ++k) {
                const double value = sine ? level * std::sin(scenario.grid[k]) : level;
                atoms[i][k] = Eigen::VectorXd::Constant(dim, value);
            }
        }
        flows.push_back(MeasureFlow::dirac(scenario.grid, atoms));
    }
    return flows;
}

}  // namespace mffbsde
