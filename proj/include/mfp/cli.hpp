#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "mfp/config.hpp"
#include "mfp/verify.hpp"

namespace mfp {

inline constexpr int kReportSchemaVersion = 1;

struct RunOptions {
    std::string subcommand;
    std::string config_path;
    std::string out;  // overrides the config's output_dir when set
    int workers = 0;  // 0 keeps the current setting
    std::optional<std::uint64_t> seed_override;
};

// Runs one subcommand and writes its report files into `out_dir`.
VerificationReport run_checks(const std::string& subcommand, const ExperimentConfig& cfg, const std::string& out_dir,
                              std::ostream& log);

// 0: every check passed, 1: some check failed, 2: usage or configuration error.
int run(const RunOptions& opt, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

} // namespace mfp
