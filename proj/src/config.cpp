#include "nlsc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include "nlsc/errors.hpp"
#include "nlsc/expression.hpp"

namespace nlsc {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"model", {"n", "p", "A", "A_prime", "A1_prime", "potential", "V_lower", "V_upper"}},
        {"curve",
         {"kind", "radius", "a", "b", "axis_a", "axis_b", "center", "points_file", "nodes", "find_critical_radius",
          "radius_lo", "radius_hi"}},
        {"radial", {"r_max", "nodes"}},
        {"tube", {"delta_bar", "core", "points_per_unit", "margin", "s_nodes", "fd_order", "cutoff", "varsigma", "tau"}},
        {"resonance",
         {"delta", "min_nodes", "eps", "gap_eps_max", "gap_eps_min", "gap_count", "gap_threshold_factor"}},
        {"residual", {"levels", "c1", "c2", "c3"}},
        {"run", {"stages", "output"}},
        {"assert",
         {"ground_state_residual_max", "euler_sup_max", "jacobi_min_abs_eig_min", "resonance_C_max",
          "slope_min_level0", "slope_min_level1", "slope_min_level2", "level2_below_level1"}},
    };
    return keys;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Collects conversion problems instead of stopping at the first.
class Reader {
public:
    Reader(const pt::ptree& tree, std::vector<std::string>& errors) : tree_(tree), errors_(errors) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key) const {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'));
        if (!v) return std::nullopt;
        return trim(*v);
    }

    void real(const std::string& section, const std::string& key, double& out) const {
        if (auto v = raw(section, key)) {
            try {
                std::size_t used = 0;
                const double d = std::stod(*v, &used);
                if (used != v->size()) throw std::invalid_argument("trailing text");
                out = d;
            } catch (const std::exception&) {
                errors_.push_back(section + "." + key + ": '" + *v + "' is not a number");
            }
        }
    }

    void integer(const std::string& section, const std::string& key, int& out) const {
        if (auto v = raw(section, key)) {
            try {
                std::size_t used = 0;
                const long d = std::stol(*v, &used);
                if (used != v->size()) throw std::invalid_argument("trailing text");
                out = static_cast<int>(d);
            } catch (const std::exception&) {
                errors_.push_back(section + "." + key + ": '" + *v + "' is not an integer");
            }
        }
    }

    void boolean(const std::string& section, const std::string& key, bool& out) const {
        if (auto v = raw(section, key)) {
            std::string s = *v;
            std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
            if (s == "true" || s == "yes" || s == "1" || s == "on")
                out = true;
            else if (s == "false" || s == "no" || s == "0" || s == "off")
                out = false;
            else
                errors_.push_back(section + "." + key + ": '" + *v + "' is not a boolean");
        }
    }

    void text(const std::string& section, const std::string& key, std::string& out) const {
        if (auto v = raw(section, key)) out = *v;
    }

    void reals(const std::string& section, const std::string& key, std::vector<double>& out) const {
        if (auto v = raw(section, key)) {
            try {
                out = parse_real_list(*v);
            } catch (const ValidationError& e) {
                errors_.push_back(section + "." + key + ": " + e.what());
            }
        }
    }

    template <class T>
    void optional_real(const std::string& section, const std::string& key, std::optional<T>& out) const {
        if (raw(section, key)) {
            if constexpr (std::is_same_v<T, bool>) {
                bool b = false;
                boolean(section, key, b);
                out = b;
            } else {
                double d = std::numeric_limits<double>::quiet_NaN();
                real(section, key, d);
                out = d;
            }
        }
    }

private:
    const pt::ptree& tree_;
    std::vector<std::string>& errors_;
};

std::vector<Eigen::VectorXd> read_points(const std::string& path, int n, std::vector<std::string>& errors) {
    std::vector<Eigen::VectorXd> pts;
    std::ifstream in(path);
    if (!in) {
        errors.push_back("curve.points_file: cannot open '" + path + "'");
        return pts;
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        // Coordinates may be separated by commas, blanks or both.
        std::replace_if(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c) != 0; }, ',');
        try {
            const auto v = parse_real_list(line);
            if (static_cast<int>(v.size()) != n) throw ValidationError("expected " + std::to_string(n) + " values");
            pts.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), n));
        } catch (const ValidationError& e) {
            errors.push_back("curve.points_file line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return pts;
}

RunConfig from_tree(const pt::ptree& tree, const std::string& base_dir) {
    std::vector<std::string> errors;
    const auto& keys = known_keys();
    for (const auto& [section, child] : tree) {
        const auto it = keys.find(section);
        if (it == keys.end()) {
            if (child.empty())
                errors.push_back("key '" + section + "' outside any section");
            else
                errors.push_back("unknown section [" + section + "]");
            continue;
        }
        for (const auto& kv : child)
            if (!it->second.count(kv.first)) errors.push_back("unknown key " + section + "." + kv.first);
    }

    RunConfig cfg;
    const Reader r(tree, errors);
    r.integer("model", "n", cfg.n);
    r.real("model", "p", cfg.p);
    r.real("model", "A", cfg.A);
    r.real("model", "A_prime", cfg.A_prime);
    r.real("model", "A1_prime", cfg.A1_prime);
    r.text("model", "potential", cfg.potential);
    r.real("model", "V_lower", cfg.V_lower);
    r.real("model", "V_upper", cfg.V_upper);

    std::string kind = "circle";
    r.text("curve", "kind", kind);
    if (kind == "circle")
        cfg.curve.kind = CurveSpec::Kind::Circle;
    else if (kind == "ellipse")
        cfg.curve.kind = CurveSpec::Kind::Ellipse;
    else if (kind == "parametric")
        cfg.curve.kind = CurveSpec::Kind::Parametric;
    else
        errors.push_back("curve.kind: '" + kind + "' is not circle, ellipse or parametric");
    r.real("curve", "radius", cfg.curve.radius);
    r.real("curve", "a", cfg.curve.a);
    r.real("curve", "b", cfg.curve.b);
    r.integer("curve", "axis_a", cfg.curve.axis_a);
    r.integer("curve", "axis_b", cfg.curve.axis_b);
    r.reals("curve", "center", cfg.curve.center);
    r.text("curve", "points_file", cfg.points_file);
    r.integer("curve", "nodes", cfg.curve_nodes);
    r.boolean("curve", "find_critical_radius", cfg.find_critical_radius);
    r.real("curve", "radius_lo", cfg.radius_lo);
    r.real("curve", "radius_hi", cfg.radius_hi);
    cfg.curve.n = cfg.n;
    if (cfg.curve.kind == CurveSpec::Kind::Parametric) {
        if (cfg.points_file.empty())
            errors.push_back("curve.points_file is required for a parametric curve");
        else {
            std::string path = cfg.points_file;
            if (!path.empty() && path[0] != '/' && !base_dir.empty()) path = base_dir + "/" + path;
            cfg.curve.points = read_points(path, cfg.n, errors);
        }
    }

    r.real("radial", "r_max", cfg.radial.r_max);
    r.integer("radial", "nodes", cfg.radial.m);

    r.real("tube", "delta_bar", cfg.tube.delta_bar);
    r.real("tube", "core", cfg.tube.core);
    r.real("tube", "points_per_unit", cfg.tube.points_per_unit);
    r.real("tube", "margin", cfg.tube.margin);
    r.integer("tube", "s_nodes", cfg.tube.s_nodes);
    r.integer("tube", "fd_order", cfg.tube.fd_order);
    r.boolean("tube", "cutoff", cfg.tube.cutoff);
    r.real("tube", "varsigma", cfg.varsigma);
    r.real("tube", "tau", cfg.tau);

    r.real("resonance", "delta", cfg.delta);
    r.integer("resonance", "min_nodes", cfg.min_nodes);
    r.reals("resonance", "eps", cfg.eps);
    r.real("resonance", "gap_eps_max", cfg.gap_eps_max);
    r.real("resonance", "gap_eps_min", cfg.gap_eps_min);
    r.integer("resonance", "gap_count", cfg.gap_count);
    r.real("resonance", "gap_threshold_factor", cfg.gap_threshold_factor);

    if (auto v = r.raw("residual", "levels")) {
        cfg.levels.clear();
        try {
            for (double d : parse_real_list(*v)) {
                if (d != std::floor(d)) throw ValidationError("levels must be integers");
                cfg.levels.push_back(static_cast<int>(d));
            }
        } catch (const ValidationError& e) {
            errors.push_back(std::string("residual.levels: ") + e.what());
        }
    }
    r.real("residual", "c1", cfg.c1);
    r.real("residual", "c2", cfg.c2);
    r.real("residual", "c3", cfg.c3);

    if (auto v = r.raw("run", "stages")) cfg.stages = split_list(*v);
    r.text("run", "output", cfg.output_dir);

    r.optional_real("assert", "ground_state_residual_max", cfg.asserts.ground_state_residual_max);
    r.optional_real("assert", "euler_sup_max", cfg.asserts.euler_sup_max);
    r.optional_real("assert", "jacobi_min_abs_eig_min", cfg.asserts.jacobi_min_abs_eig_min);
    r.optional_real("assert", "resonance_C_max", cfg.asserts.resonance_C_max);
    r.optional_real("assert", "slope_min_level0", cfg.asserts.slope_min_level0);
    r.optional_real("assert", "slope_min_level1", cfg.asserts.slope_min_level1);
    r.optional_real("assert", "slope_min_level2", cfg.asserts.slope_min_level2);
    r.optional_real("assert", "level2_below_level1", cfg.asserts.level2_below_level1);

    for (auto& e : config_violations(cfg)) errors.push_back(std::move(e));
    if (!errors.empty()) {
        std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ValidationError(msg);
    }
    return cfg;
}

pt::ptree read_tree(std::istream& in) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ValidationError("malformed configuration: " + std::string(e.what()));
    }
    return tree;
}

}  // namespace

bool Assertions::any() const {
    return ground_state_residual_max || euler_sup_max || jacobi_min_abs_eig_min || resonance_C_max ||
           slope_min_level0 || slope_min_level1 || slope_min_level2 || level2_below_level1;
}

const std::vector<std::string>& known_stages() {
    static const std::vector<std::string> stages = {"profile",   "geometry", "criticality", "branches",
                                                    "resonance", "gap_scan", "residual"};
    return stages;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<double> parse_real_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& item : split_list(text)) {
        std::size_t used = 0;
        double d = 0.0;
        try {
            d = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty()) throw ValidationError("'" + item + "' is not a number");
        out.push_back(d);
    }
    return out;
}

std::vector<std::string> config_violations(const RunConfig& c) {
    std::vector<std::string> v;
    auto need = [&v](bool ok, const std::string& msg) {
        if (!ok) v.push_back(msg);
    };
    need(c.n >= 2, "model.n must be >= 2");
    if (c.n >= 2) {
        if (!admissible_p(c.n, c.p)) {
            std::ostringstream m;
            m << "model.p = " << c.p << " is outside the admissible range 1 < p";
            if (c.n > 3) m << " < (n+1)/(n-3) = " << (c.n + 1.0) / (c.n - 3.0) << " for n = " << c.n;
            v.push_back(m.str());
        }
        try {
            Expression::parse(c.potential, c.n);
        } catch (const std::exception& e) {
            v.push_back(std::string("model.potential: ") + e.what());
        }
    }
    need(std::isfinite(c.A) && std::isfinite(c.A_prime) && std::isfinite(c.A1_prime),
         "model.A, A_prime and A1_prime must be finite");
    if (c.V_lower <= c.V_upper) need(c.V_lower > 0.0, "model.V_lower must be positive when bounds are given");
    try {
        CurveSpec s = c.curve;
        s.n = c.n;
        if (c.n >= 2) s.validate();
    } catch (const ValidationError& e) {
        v.push_back(e.what());
    }
    need(c.curve_nodes >= 64, "curve.nodes must be >= 64");
    if (c.find_critical_radius) {
        need(c.curve.kind == CurveSpec::Kind::Circle, "curve.find_critical_radius needs a circle");
        need(c.radius_lo > 0.0 && c.radius_hi > c.radius_lo, "curve.radius_lo/radius_hi must satisfy 0 < lo < hi");
    }
    need(c.radial.r_max >= 10.0, "radial.r_max must be >= 10");
    need(c.radial.m >= 201 && c.radial.m % 2 == 1, "radial.nodes must be odd and >= 201");
    try {
        c.tube.validate();
    } catch (const ValidationError& e) {
        v.push_back(e.what());
    }
    need(c.varsigma > 0.0 && c.varsigma < 1.0, "tube.varsigma must lie in (0, 1)");
    need(c.tau > 0.0 && c.tau < 1.0, "tube.tau must lie in (0, 1)");
    need(c.delta > 0.0 && c.delta < 1.0, "resonance.delta must lie in (0, 1)");
    need(c.min_nodes >= 16, "resonance.min_nodes must be >= 16");
    need(!c.eps.empty(), "resonance.eps must list at least one value");
    for (std::size_t i = 0; i < c.eps.size(); ++i) {
        need(c.eps[i] > 0.0 && c.eps[i] < 1.0, "resonance.eps values must lie in (0, 1)");
        if (i > 0) need(c.eps[i] < c.eps[i - 1], "resonance.eps must be strictly descending");
    }
    need(c.gap_eps_min > 0.0 && c.gap_eps_max > c.gap_eps_min && c.gap_eps_max < 1.0,
         "resonance.gap_eps_min/gap_eps_max must satisfy 0 < min < max < 1");
    need(c.gap_count >= 2, "resonance.gap_count must be >= 2");
    need(c.gap_threshold_factor >= 0.0, "resonance.gap_threshold_factor must be nonnegative");
    need(!c.levels.empty(), "residual.levels must not be empty");
    for (int l : c.levels) need(l >= 0 && l <= 2, "residual.levels entries must be 0, 1 or 2");
    need(c.c1 > 0.0 && c.c2 > 0.0 && c.c3 > 0.0, "residual.c1, c2, c3 must be positive");
    const auto& ks = known_stages();
    for (const auto& s : c.stages)
        need(std::find(ks.begin(), ks.end(), s) != ks.end(), "run.stages: unknown stage '" + s + "'");
    const bool residual = std::find(c.stages.begin(), c.stages.end(), "residual") != c.stages.end();
    if (residual) need(c.eps.size() >= 3, "the residual stage needs at least three eps values for the order fit");
    auto finite = [&](const std::optional<double>& o, const char* name) {
        if (o) need(std::isfinite(*o), std::string("assert.") + name + " must be a finite number");
    };
    finite(c.asserts.ground_state_residual_max, "ground_state_residual_max");
    finite(c.asserts.euler_sup_max, "euler_sup_max");
    finite(c.asserts.jacobi_min_abs_eig_min, "jacobi_min_abs_eig_min");
    finite(c.asserts.resonance_C_max, "resonance_C_max");
    finite(c.asserts.slope_min_level0, "slope_min_level0");
    finite(c.asserts.slope_min_level1, "slope_min_level1");
    finite(c.asserts.slope_min_level2, "slope_min_level2");
    return v;
}

void validate_config(const RunConfig& cfg) {
    const auto v = config_violations(cfg);
    if (v.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& e : v) msg += "\n  - " + e;
    throw ValidationError(msg);
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open configuration '" + path + "'");
    const auto tree = read_tree(in);
    const auto slash = path.find_last_of('/');
    RunConfig cfg = from_tree(tree, slash == std::string::npos ? "" : path.substr(0, slash));
    cfg.source = path;
    return cfg;
}

RunConfig parse_config_text(const std::string& text) {
    std::istringstream in(text);
    return from_tree(read_tree(in), "");
}

}  // namespace nlsc
