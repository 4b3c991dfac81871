#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlsc/config.hpp"

namespace nlsc {

inline constexpr const char* kReportSchema = "nlsc-report/1";
inline constexpr const char* kOutputRootEnv = "NLSC_OUTPUT_ROOT";

// A stage threw; carries the stage name next to the original message.
class StageError : public std::runtime_error {
public:
    StageError(const std::string& stage, const std::string& cause)
        : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct AssertionResult {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool passed = true;
};

struct Report {
    nlohmann::json summary;
    std::map<std::string, std::string> csv;  // relative path -> content
    std::vector<AssertionResult> assertions;
    bool passed() const;
};

// Runs the selected stages in dependency order; nothing is written.
Report run_pipeline(const RunConfig& cfg);

// Writes summary.json and the CSV groups under dir; returns the written paths.
std::vector<std::string> emit_report(const Report& report, const std::string& dir);

// Config output, else $NLSC_OUTPUT_ROOT/<config stem>, else ./nlsc_output.
std::string resolve_output_dir(const RunConfig& cfg);

}  // namespace nlsc
