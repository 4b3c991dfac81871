#include "nlsc/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "nlsc/curve.hpp"
#include "nlsc/errors.hpp"
#include "nlsc/expression.hpp"
#include "nlsc/model_spectrum.hpp"
#include "nlsc/resonance.hpp"
#include "nlsc/scalings.hpp"
#include "nlsc/tube.hpp"

namespace nlsc {

using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

class Csv {
public:
    explicit Csv(const std::string& header) {
        out_.precision(17);
        out_ << header << '\n';
    }
    template <class... T>
    void row(const T&... v) {
        bool first = true;
        ((out_ << (first ? "" : ",") << v, first = false), ...);
        out_ << '\n';
    }
    std::ostringstream& stream() { return out_; }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

// NaN and infinities are not valid JSON numbers.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

json config_echo(const RunConfig& c) {
    json j;
    j["n"] = c.n;
    j["p"] = c.p;
    j["A"] = c.A;
    j["A_prime"] = c.A_prime;
    j["A1_prime"] = c.A1_prime;
    j["potential"] = c.potential;
    const char* kinds[] = {"circle", "ellipse", "parametric"};
    j["curve"] = {{"kind", kinds[static_cast<int>(c.curve.kind)]},
                  {"radius", c.curve.radius},
                  {"a", c.curve.a},
                  {"b", c.curve.b},
                  {"nodes", c.curve_nodes},
                  {"find_critical_radius", c.find_critical_radius}};
    j["radial"] = {{"r_max", c.radial.r_max}, {"nodes", c.radial.m}};
    j["tube"] = {{"delta_bar", c.tube.delta_bar}, {"core", c.tube.core},
                 {"points_per_unit", c.tube.points_per_unit}, {"s_nodes", c.tube.s_nodes},
                 {"fd_order", c.tube.fd_order}, {"cutoff", c.tube.cutoff},
                 {"varsigma", c.varsigma}, {"tau", c.tau}};
    j["resonance"] = {{"delta", c.delta}, {"eps", c.eps}, {"min_nodes", c.min_nodes},
                      {"gap_eps_max", c.gap_eps_max}, {"gap_eps_min", c.gap_eps_min},
                      {"gap_count", c.gap_count}, {"gap_threshold_factor", c.gap_threshold_factor}};
    j["residual"] = {{"levels", c.levels}, {"c1", c.c1}, {"c2", c.c2}, {"c3", c.c3}};
    j["stages"] = c.stages;
    return j;
}

// Lazily computed shared inputs; each getter pulls in its prerequisites.
class Context {
public:
    explicit Context(const RunConfig& cfg) : cfg_(cfg), ex_(compute_exponents(cfg.n, cfg.p)) {}

    const Exponents& exponents() const { return ex_; }

    const Expression& potential() {
        if (!V_) V_ = Expression::parse(cfg_.potential, cfg_.n);
        return *V_;
    }

    const RadialProfile& ground_state() {
        if (!U_) U_ = solve_ground_state(cfg_.n, cfg_.p, cfg_.radial);
        return *U_;
    }

    const CurveData& curve() {
        if (!curve_) {
            CurveSpec spec = cfg_.curve;
            spec.n = cfg_.n;
            if (cfg_.find_critical_radius) {
                circle_ = critical_circle(potential(), cfg_.n, cfg_.A, ex_, cfg_.radius_lo, cfg_.radius_hi,
                                          cfg_.curve_nodes);
                spec.radius = circle_->radius;
            }
            curve_ = build_curve(spec, cfg_.curve_nodes);
        }
        return *curve_;
    }

    const std::optional<CriticalCircle>& circle() {
        curve();
        return circle_;
    }

    const PotentialData& pot() {
        if (!pot_) pot_ = sample_potential(potential(), curve(), cfg_.V_lower, cfg_.V_upper);
        return *pot_;
    }

    const ScalingFields& scalings() {
        if (!sf_) {
            ScalingFields sf = compute_scalings(curve(), pot(), cfg_.A, ex_);
            sf.A_prime = cfg_.A_prime;
            sf.A1_prime = cfg_.A1_prime;
            sf_ = sf;
        }
        return *sf_;
    }

    const AlphaField& alpha() {
        if (!af_) af_ = alpha_field(ground_state(), scalings());
        return *af_;
    }

    const QIntegrals& q() {
        if (!Q_) Q_ = q_integrals(alpha());
        return *Q_;
    }

private:
    const RunConfig& cfg_;
    Exponents ex_;
    std::optional<Expression> V_;
    std::optional<RadialProfile> U_;
    std::optional<CriticalCircle> circle_;
    std::optional<CurveData> curve_;
    std::optional<PotentialData> pot_;
    std::optional<ScalingFields> sf_;
    std::optional<AlphaField> af_;
    std::optional<QIntegrals> Q_;
};

struct Runner {
    const RunConfig& cfg;
    Context ctx;
    Report report;

    void check_max(const std::string& name, const std::optional<double>& limit, double value) {
        if (!limit) return;
        report.assertions.push_back({name, value, *limit, std::isfinite(value) && value <= *limit});
    }
    void check_min(const std::string& name, const std::optional<double>& limit, double value) {
        if (!limit) return;
        report.assertions.push_back({name, value, *limit, std::isfinite(value) && value >= *limit});
    }

    json profile() {
        const RadialProfile& U = ctx.ground_state();
        const RadialProfile dU = differentiate(U);
        const double res = ground_state_residual(U, cfg.p);
        json j = {{"U0", U.values[0]},
                  {"ode_residual", num(res)},
                  {"decay_rate", num(fit_decay_rate(U))},
                  {"nodes", U.grid.m},
                  {"r_max", U.grid.r_max}};
        Csv c("r,U,dU");
        for (int i = 0; i < U.grid.m; ++i) c.row(U.grid.r(i), U.values[i], dU.values[i]);
        report.csv["profile/ground_state.csv"] = c.str();
        check_max("ground_state_residual_max", cfg.asserts.ground_state_residual_max, res);
        return j;
    }

    json geometry() {
        const CurveData& cv = ctx.curve();
        const PotentialData& pd = ctx.pot();
        json j = {{"length", cv.L},
                  {"nodes", cv.M},
                  {"holonomy_angle", cv.holonomy_angle},
                  {"seam_jump", cv.seam_jump},
                  {"transport_defect", cv.transport_defect()},
                  {"V_min", pd.V_min},
                  {"V_max", pd.V_max}};
        if (ctx.circle()) j["critical_radius"] = ctx.circle()->radius;
        std::string header = "s";
        for (int d = 0; d < cv.n; ++d) header += ",x" + std::to_string(d + 1);
        for (int m = 0; m < cv.rank(); ++m) header += ",H" + std::to_string(m + 1);
        header += ",V";
        for (int m = 0; m < cv.rank(); ++m) header += ",dV" + std::to_string(m + 1);
        Csv c(header);
        for (int i = 0; i < cv.M; ++i) {
            auto& o = c.stream();
            o << cv.s[i];
            for (int d = 0; d < cv.n; ++d) o << ',' << cv.X[i][d];
            for (int m = 0; m < cv.rank(); ++m) o << ',' << cv.Hc[i][m];
            o << ',' << pd.V[i];
            for (int m = 0; m < cv.rank(); ++m) o << ',' << pd.gradN[i][m];
            o << '\n';
        }
        report.csv["geometry/curve.csv"] = c.str();
        return j;
    }

    json criticality() {
        const CurveData& cv = ctx.curve();
        const PotentialData& pd = ctx.pot();
        const ScalingFields& sf = ctx.scalings();
        const EulerResidual eu = euler_residual(cv, pd, sf);
        const JacobiMatrix J = assemble_jacobi(cv, pd, sf);
        const WeightedEigenbasis eb = weighted_eigenbasis(J.J, J.weight, J.rank, J.ds);
        json j = {{"sigma", sf.ex.sigma},
                  {"theta", sf.ex.theta},
                  {"small_A_ratio", small_A_ratio(sf)},
                  {"consistency", sf.consistency(pd)},
                  {"phase_budget", sf.phase_budget},
                  {"reduced_functional", reduced_functional(sf)},
                  {"euler_residual_sup", eu.sup},
                  {"jacobi_raw_asymmetry", J.raw_asymmetry},
                  {"jacobi_min_abs_eig", eb.min_abs},
                  {"jacobi_max_abs_eig", eb.max_abs},
                  {"jacobi_nondegenerate", eb.nondegenerate},
                  {"jacobi_offset_norm", J.offset.norm()}};
        if (ctx.circle()) j["critical_radius"] = ctx.circle()->radius;
        Csv c("s,h,k,fp,f,euler_norm");
        for (int i = 0; i < sf.size(); ++i) c.row(cv.s[i], sf.h[i], sf.k[i], sf.fp[i], sf.f[i], eu.values[i].norm());
        report.csv["criticality/scalings.csv"] = c.str();
        Csv e("index,eigenvalue");
        for (int i = 0; i < eb.values.size(); ++i) e.row(i, eb.values[i]);
        report.csv["criticality/jacobi_eigenvalues.csv"] = e.str();
        check_max("euler_sup_max", cfg.asserts.euler_sup_max, eu.sup);
        check_min("jacobi_min_abs_eig_min", cfg.asserts.jacobi_min_abs_eig_min, eb.min_abs);
        return j;
    }

    json branches() {
        const AlphaField& af = ctx.alpha();
        const QIntegrals& Q = ctx.q();
        const ScalingFields& sf = ctx.scalings();
        double amin = INFINITY, amax = -INFINITY, mmin = INFINITY, mmax = -INFINITY;
        Csv c("s,mu,alpha_bar,eta,q1,q2,q3");
        for (int i = 0; i < sf.size(); ++i) {
            const auto& z = af.zw[i];
            amin = std::min(amin, z.alpha_bar);
            amax = std::max(amax, z.alpha_bar);
            mmin = std::min(mmin, af.mu[i]);
            mmax = std::max(mmax, af.mu[i]);
            c.row(ctx.curve().s[i], af.mu[i], z.alpha_bar, z.eta, z.q1, z.q2, z.q3);
        }
        report.csv["branches/alpha.csv"] = c.str();
        return {{"alpha_bar_min", amin},
                {"alpha_bar_max", amax},
                {"mu_min", mmin},
                {"mu_max", mmax},
                {"alpha_max_jump", af.max_jump},
                {"q_normalization_error", Q.max_normalization_error}};
    }

    json resonance() {
        const ScalingFields& sf = ctx.scalings();
        json rows = json::array();
        double worst_C = 0.0;
        Csv spec("eps,j,nu,lambda0");
        Csv summ("eps,J,coupled_residual,C,lambda0_C,lambda0_max_deviation,gamma_ratio,kappa_ratio,weyl_constant");
        for (double eps : cfg.eps) {
            const ResonanceBasis b = resonance_eigenpairs(sf, ctx.alpha(), ctx.q(), eps, cfg.delta, cfg.min_nodes);
            const CoupledResidual cr = verify_coupled_system(b);
            const Lambda0 l0 = assemble_lambda0(b);
            const CorrectionCheck cc = correction_identities(b);
            double weyl = NAN;
            const int half = std::max(1, b.J / 2);
            if (b.J >= 1 && b.j_eps - half >= 0 && b.j_eps + half < b.M) weyl = fit_weyl_constant(b, half);
            worst_C = std::max(worst_C, cr.C);
            rows.push_back({{"eps", eps},
                            {"J", b.J},
                            {"j_eps", b.j_eps},
                            {"grid_nodes", b.M},
                            {"coupled_residual", cr.max_residual},
                            {"C", cr.C},
                            {"lambda0_C", l0.C},
                            {"lambda0_max_deviation", l0.max_deviation},
                            {"lambda0_raw_asymmetry", l0.raw_asymmetry},
                            {"gamma_ratio", cc.gamma_ratio},
                            {"kappa_ratio", cc.kappa_ratio},
                            {"weyl_constant", num(weyl)}});
            for (int j = -b.J; j <= b.J; ++j) spec.row(eps, j, b.nu[j + b.J], l0.eigenvalues[j + b.J]);
            summ.row(eps, b.J, cr.max_residual, cr.C, l0.C, l0.max_deviation, cc.gamma_ratio, cc.kappa_ratio, weyl);
        }
        report.csv["resonance/spectrum.csv"] = spec.str();
        report.csv["resonance/summary.csv"] = summ.str();
        check_max("resonance_C_max", cfg.asserts.resonance_C_max, worst_C);
        return {{"per_eps", rows}, {"max_C", worst_C}};
    }

    json gap_scan_stage() {
        const ScalingFields& sf = ctx.scalings();
        const AlphaField& af = ctx.alpha();
        double ka = 0.0;
        for (int i = 0; i < sf.size(); ++i) ka += sf.k[i] * af.zw[i].alpha_bar;
        ka /= sf.size();
        const double threshold = cfg.gap_threshold_factor * ka * kTwoPi / sf.L;
        std::vector<double> grid(static_cast<std::size_t>(cfg.gap_count));
        for (int i = 0; i < cfg.gap_count; ++i)
            grid[i] = cfg.gap_eps_max + (cfg.gap_eps_min - cfg.gap_eps_max) * i / (cfg.gap_count - 1);
        const GapScan gs = gap_scan(sf, af, ctx.q(), grid, cfg.delta, threshold, cfg.min_nodes);
        Csv c("eps,min_abs,admitted,j_eps,nu0,dnu0_deps,kato_lower");
        for (const auto& r : gs.rows)
            c.row(r.eps, r.min_abs, r.admitted ? 1 : 0, r.j_eps, r.nu0, r.dnu0_deps, r.kato_lower);
        report.csv["gap_scan/scan.csv"] = c.str();
        return {{"threshold", threshold},
                {"grid_size", cfg.gap_count},
                {"admissible_count", gs.admissible.size()},
                {"admissible", gs.admissible}};
    }

    json residual() {
        const CurveData& cv = ctx.curve();
        const PotentialData& pd = ctx.pot();
        const ScalingFields& sf = ctx.scalings();
        const CorrectorProfiles prof = corrector_profiles(cfg.n, cfg.p, cfg.radial, true);
        CorrectorSet corr = first_correctors(cv, pd, sf, prof, {});
        second_correctors(corr, cv, pd, {});
        const ResidualStudy st = residual_study(cv, ctx.potential(), corr, cfg.eps, cfg.levels, cfg.tube, cfg.varsigma);
        Csv c("eps,level,core_norm,full_norm,l2_norm,Ns,Nz");
        for (const auto& r : st.rows) c.row(r.eps, r.level, r.core, r.full, r.l2, r.Ns, r.Nz);
        report.csv["residual/residuals.csv"] = c.str();
        json fits = json::object();
        for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
            const OrderFit& f = st.fits[i];
            fits["level" + std::to_string(cfg.levels[i])] = {
                {"slope", f.slope}, {"intercept", f.intercept}, {"deviations", f.deviations}, {"monotone", f.monotone}};
            const std::optional<double>* lim = nullptr;
            if (cfg.levels[i] == 0) lim = &cfg.asserts.slope_min_level0;
            if (cfg.levels[i] == 1) lim = &cfg.asserts.slope_min_level1;
            if (cfg.levels[i] == 2) lim = &cfg.asserts.slope_min_level2;
            check_min("slope_min_level" + std::to_string(cfg.levels[i]), *lim, f.slope);
        }
        if (cfg.asserts.level2_below_level1 && *cfg.asserts.level2_below_level1)
            report.assertions.push_back(
                {"level2_below_level1", st.level2_below_level1 ? 1.0 : 0.0, 1.0, st.level2_below_level1});
        return {{"fits", fits},
                {"level2_below_level1", st.level2_below_level1},
                {"varsigma", st.varsigma},
                {"wro_removed", corr.wro_removed},
                {"wro_bound", corr.wro_bound},
                {"profile_roundtrip", prof.max_roundtrip},
                {"c_ratio", prof.c_ratio}};
    }
};

}  // namespace

bool Report::passed() const {
    return std::all_of(assertions.begin(), assertions.end(), [](const AssertionResult& a) { return a.passed; });
}

Report run_pipeline(const RunConfig& cfg) {
    validate_config(cfg);
    Runner run{cfg, Context(cfg), {}};
    json results = json::object();
    std::vector<std::string> ran;
    for (const auto& stage : known_stages()) {
        if (std::find(cfg.stages.begin(), cfg.stages.end(), stage) == cfg.stages.end()) continue;
        spdlog::info("stage {}", stage);
        try {
            if (stage == "profile") results[stage] = run.profile();
            if (stage == "geometry") results[stage] = run.geometry();
            if (stage == "criticality") results[stage] = run.criticality();
            if (stage == "branches") results[stage] = run.branches();
            if (stage == "resonance") results[stage] = run.resonance();
            if (stage == "gap_scan") results[stage] = run.gap_scan_stage();
            if (stage == "residual") results[stage] = run.residual();
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
        ran.push_back(stage);
    }
    Report& rep = run.report;
    json asserts = json::array();
    for (const auto& a : rep.assertions)
        asserts.push_back({{"name", a.name}, {"value", num(a.value)}, {"threshold", a.threshold}, {"passed", a.passed}});
    rep.summary = {{"schema", kReportSchema},
                   {"generated_at", utc_timestamp()},
                   {"config", config_echo(cfg)},
                   {"stages_run", ran},
                   {"results", results},
                   {"assertions", asserts},
                   {"all_assertions_passed", rep.passed()}};
    json files = json::array();
    for (const auto& [path, content] : rep.csv) files.push_back(path);
    rep.summary["csv_files"] = files;
    return rep;
}

std::vector<std::string> emit_report(const Report& report, const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> written;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + dir + ": " + ec.message());
    auto write = [&](const std::string& rel, const std::string& content) {
        const fs::path p = fs::path(dir) / rel;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw std::runtime_error("cannot create " + p.parent_path().string() + ": " + ec.message());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + p.string());
        out << content;
        if (!out) throw std::runtime_error("write failed for " + p.string());
        written.push_back(p.string());
    };
    write("summary.json", report.summary.dump(2) + "\n");
    for (const auto& [rel, content] : report.csv) write(rel, content);
    return written;
}

std::string resolve_output_dir(const RunConfig& cfg) {
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    std::string stem = "run";
    if (!cfg.source.empty()) stem = std::filesystem::path(cfg.source).stem().string();
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0')
        return (std::filesystem::path(root) / stem).string();
    return (std::filesystem::path("nlsc_output") / stem).string();
}

}  // namespace nlsc
