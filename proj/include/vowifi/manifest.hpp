#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vowifi {

constexpr int kExitOk = 0;
constexpr int kExitMissingFile = 2;
constexpr int kExitSchema = 3;
constexpr int kExitMismatch = 4;

class ManifestError : public std::runtime_error {
public:
    ManifestError(int exit_code, const std::string& what) : std::runtime_error(what), exit_code_(exit_code) {}
    int exit_code() const { return exit_code_; }

private:
    int exit_code_;
};

struct StepResult {
    std::string name;
    std::string kind;
    std::string report;                   // JSON text written to <out>/<name>.json
    std::vector<std::string> mismatches;  // empty when the step matches its fixture
};

struct ManifestRun {
    std::string name;
    std::filesystem::path output_dir;
    std::vector<StepResult> steps;
    std::string summary;  // JSON text written to <out>/summary.json
    int exit_code = kExitOk;
};

struct ManifestOptions {
    std::optional<std::filesystem::path> output_dir;  // overrides the manifest's
    std::optional<std::uint64_t> seed;                // overrides the manifest's
    unsigned parallel = 1;
    bool write_files = true;
};

// Step kinds: attack_table, attack, voice_quality, degradation, analyze.
// Relative paths resolve against the manifest's directory. Throws ManifestError
// for missing files (exit 2) and schema violations (exit 3); fixture mismatches
// are reported through ManifestRun::exit_code (4).
ManifestRun run_manifest(const std::filesystem::path& manifest, const ManifestOptions& options = {});

}  // namespace vowifi
