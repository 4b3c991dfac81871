// Command-line driver: parse a run file, execute the selected stages, write the report.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

#include "nlsc/config.hpp"
#include "nlsc/errors.hpp"
#include "nlsc/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Approximate concentrating solutions along closed curves: staged numerical checks"};
    std::string config_path, output_dir, stages, verbosity = "info";
    app.add_option("-c,--config", config_path, "run file (INI)")->required()->check(CLI::ExistingFile);
    app.add_option("-o,--output", output_dir, "output directory (overrides [run] output and $NLSC_OUTPUT_ROOT)");
    app.add_option("-s,--stages", stages, "comma-separated stages, replacing [run] stages");
    app.add_option("-v,--verbosity", verbosity, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
    CLI11_PARSE(app, argc, argv);

    spdlog::set_level(spdlog::level::from_str(verbosity));
    try {
        nlsc::RunConfig cfg = nlsc::parse_config(config_path);
        if (!stages.empty()) cfg.stages = nlsc::split_list(stages);
        if (!output_dir.empty()) cfg.output_dir = output_dir;
        nlsc::validate_config(cfg);
        const nlsc::Report rep = nlsc::run_pipeline(cfg);
        const std::string dir = nlsc::resolve_output_dir(cfg);
        for (const auto& f : nlsc::emit_report(rep, dir)) spdlog::info("wrote {}", f);
        for (const auto& a : rep.assertions)
            std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << " value=" << a.value
                      << " threshold=" << a.threshold << '\n';
        return rep.passed() ? 0 : 1;
    } catch (const nlsc::ValidationError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const nlsc::StageError& e) {
        std::cerr << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
}
