#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "nlsc/expression.hpp"
#include "nlsc/periodic.hpp"

namespace nlsc {

struct CurveSpec {
    enum class Kind { Circle, Ellipse, Parametric };
    Kind kind = Kind::Circle;
    int n = 2;
    double radius = 1.0;             // circle
    double a = 2.0, b = 1.0;         // ellipse semi-axes
    int axis_a = 0, axis_b = 1;      // plane of circle / ellipse
    std::vector<double> center;      // empty means origin
    std::vector<Eigen::VectorXd> points;  // parametric: closed loop samples, no repeat

    void validate() const;
};

// Arc-length sampled closed curve with a parallel normal frame.
struct CurveData {
    int n = 2;
    int M = 0;
    double L = 0.0;
    std::vector<double> s;                  // arc-length nodes i L / M
    std::vector<Eigen::VectorXd> X;         // positions
    std::vector<Eigen::VectorXd> T;         // unit tangents
    std::vector<Eigen::MatrixXd> E;         // n x (n-1) normal frames
    std::vector<Eigen::VectorXd> H;         // curvature vectors (ambient)
    std::vector<Eigen::VectorXd> Hc;        // curvature components in the frame
    double holonomy_angle = 0.0;
    double seam_jump = 0.0;                 // frame mismatch across the seam after correction

    int rank() const { return n - 1; }
    Eigen::VectorXd position(double sbar) const;
    Eigen::MatrixXd frame(double sbar) const;
    // Components H^j(sbar) and their derivatives of the given order.
    Eigen::VectorXd curvature(double sbar, int derivative = 0) const;
    // max over nodes and j != l of |<E_j', E_l>|.
    double transport_defect() const;
    void write_csv(const std::string& path) const;

    // Interpolants, filled by build_curve.
    std::vector<TrigSeries> x_series;   // n
    std::vector<TrigSeries> e_series;   // n * (n-1), column major
    std::vector<TrigSeries> h_series;   // n-1
};

struct PotentialData {
    std::vector<double> V;
    std::vector<Eigen::VectorXd> gradN;   // components along E_j
    std::vector<Eigen::MatrixXd> hessN;   // (n-1) x (n-1), symmetric
    std::vector<Eigen::MatrixXd> d2g11;   // 2 H^j H^m
    double V_min = 0.0, V_max = 0.0;

    void write_csv(const std::string& path) const;
};

CurveData build_curve(const CurveSpec& spec, int M);
// Samples V and its normal derivatives; rejects V <= 0, and V outside
// [V1, V2] when bounds are given (V1 <= V2).
PotentialData sample_potential(const Expression& V, const CurveData& curve, double V1 = 0.0,
                               double V2 = -1.0);
// Volume of { |y| <= rho } in Fermi coordinates, by quadrature of sqrt(g).
double tube_volume(const CurveData& curve, double rho, int radial_nodes = 64);

}  // namespace nlsc
