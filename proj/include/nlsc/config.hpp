#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nlsc/curve.hpp"
#include "nlsc/radial.hpp"
#include "nlsc/tube.hpp"

namespace nlsc {

// Thresholds checked after the stages ran; unset ones are skipped.
struct Assertions {
    std::optional<double> ground_state_residual_max;
    std::optional<double> euler_sup_max;
    std::optional<double> jacobi_min_abs_eig_min;
    std::optional<double> resonance_C_max;
    std::optional<double> slope_min_level0, slope_min_level1, slope_min_level2;
    std::optional<bool> level2_below_level1;

    bool any() const;
};

struct RunConfig {
    // [model]
    int n = 2;
    double p = 3.0;
    double A = 0.0;
    double A_prime = 0.0;
    double A1_prime = 0.0;
    std::string potential = "1";
    double V_lower = 0.0, V_upper = -1.0;  // optional bounds, inactive when lower > upper

    // [curve]
    CurveSpec curve;
    std::string points_file;
    int curve_nodes = 128;
    bool find_critical_radius = false;  // circle only: replace radius by the root of the Euler residual
    double radius_lo = 0.5, radius_hi = 10.0;

    // [radial]
    RadialGrid radial{30.0, 4001};

    // [tube]
    TubeOptions tube;
    double varsigma = 0.5;
    double tau = 0.5;  // Hoelder exponent of the weighted spaces; recorded only

    // [resonance]
    double delta = 0.3;
    int min_nodes = 64;
    std::vector<double> eps{0.2, 0.1, 0.05};
    double gap_eps_max = 0.085, gap_eps_min = 0.04;
    int gap_count = 100;
    double gap_threshold_factor = 0.1;  // threshold = factor * mean(k alpha) * 2 pi / L

    // [residual]
    std::vector<int> levels{0, 1, 2};
    double c1 = 10.0, c2 = 10.0, c3 = 10.0;

    // [run]
    std::vector<std::string> stages;
    std::string output_dir;

    Assertions asserts;
    std::string source;  // path the config came from, empty for in-memory configs
};

const std::vector<std::string>& known_stages();

// Reads an INI document; every problem found is reported in one ValidationError.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);
// Re-checks a (possibly edited) config; throws ValidationError listing all violations.
void validate_config(const RunConfig& cfg);
std::vector<std::string> config_violations(const RunConfig& cfg);

std::vector<double> parse_real_list(const std::string& text);
std::vector<std::string> split_list(const std::string& text);

}  // namespace nlsc
