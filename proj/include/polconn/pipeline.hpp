#pragma once

#include "polconn/core_stats.hpp"
#include "polconn/date.hpp"
#include "polconn/ingest.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace polconn::pipeline {

inline constexpr const char* kToolName = "polconn";
inline constexpr const char* kToolVersion = "1.0.0";

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct RunConfig {
    std::filesystem::path data_dir;
    DateRange study{Date(2019, 6, 6), Date(2020, 1, 17)};
    DateRange estimation{Date(2018, 1, 1), Date(2018, 12, 31)};
    DateRange occupy_estimation{Date(2014, 1, 1), Date(2014, 6, 30)};
    DateRange occupy{Date(2014, 9, 26), Date(2014, 12, 15)};
    Date split{2019, 10, 5};
    stats::SeType se = stats::SeType::classical;
    unsigned threads = 1;
    std::uint64_t seed = 42;
    int min_obs = 60;
    int occupy_min_obs = 30;
    bool subtract_alpha = false;
    double winsorize = 0.0;
    ListingFilter listing;
    std::optional<std::filesystem::path> events_file;
    std::optional<std::filesystem::path> calendar_file;

    // Relative paths resolve against base_dir. Unknown keys are rejected.
    static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static RunConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
    void validate() const;
};

// events | panel-full | panel-pre | panel-post | sensitivity |
// robustness-shindex | all
const std::vector<std::string>& presets();

struct RunResult {
    std::vector<std::filesystem::path> outputs;  // relative to the output dir, in write order
    std::vector<std::string> warnings;
};

// Loads the dataset with the bundled calendar/events as fallbacks.
Dataset load(const RunConfig& config);

// Runs a preset and writes its outputs plus manifest.json into out_dir.
RunResult run(const RunConfig& config, const std::string& preset, const std::filesystem::path& out_dir);

// figure1_series.csv and report.md from the data plus any tables already
// present in out_dir.
RunResult write_report(const RunConfig& config, const std::filesystem::path& out_dir);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

}  // namespace polconn::pipeline
