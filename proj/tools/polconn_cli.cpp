#include "polconn/csv.hpp"
#include "polconn/pipeline.hpp"
#include "polconn/synthkit.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace polconn;

namespace {

int synth_command(const std::string& name, std::uint64_t seed, const fs::path& out) {
    synth::Scenario sc;
    try {
        sc = synth::scenario(name);
    } catch (const std::invalid_argument& e) {
        throw pipeline::ConfigError(e.what());
    }
    const fs::path bundled = POLCONN_DATA_DIR;
    const auto cal = TradingCalendar::load(bundled / "hk_calendar.csv");
    const auto events = load_events(bundled / "events.csv");
    fs::create_directories(out);
    const auto data = synth::generate(sc, seed, out, cal, events);
    std::ofstream cfg(out / "config.json", std::ios::binary | std::ios::trunc);
    cfg << "{\n  \"data_dir\": \".\",\n  \"seed\": " << seed << "\n}\n";
    if (!cfg) throw DataError("cannot write " + (out / "config.json").string());
    std::cout << "scenario " << name << ", seed " << seed << ": " << data.firms.size() << " firms written to "
              << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Political-connection event study and panel pipeline"};
    app.set_version_flag("--version", std::string(pipeline::kToolName) + " " + pipeline::kToolVersion);
    app.require_subcommand(1);

    std::string config, out, preset = "all", se_type, scenario = "fixture";
    unsigned threads = 0;
    std::uint64_t seed = 42;
    bool seed_given = false;

    auto* ingest = app.add_subcommand("ingest", "validate inputs and write canonical tables");
    ingest->add_option("--config", config, "run config (JSON)")->required();
    ingest->add_option("--out", out, "output directory")->required();

    auto* run = app.add_subcommand("run", "run an analysis preset");
    run->add_option("--config", config, "run config (JSON)")->required();
    run->add_option("--out", out, "output directory")->required();
    run->add_option("--preset", preset, "events | panel-full | panel-pre | panel-post | sensitivity | robustness-shindex | all");
    run->add_option("--se-type", se_type, "classical | robust | cluster_by_stock");
    run->add_option("--threads", threads, "worker threads");
    auto* seed_opt = run->add_option("--seed", seed, "recorded RNG seed");

    auto* synth = app.add_subcommand("synth", "write a synthetic dataset with planted effects");
    synth->add_option("--scenario", scenario, "fixture | paper-shaped | exact");
    synth->add_option("--seed", seed, "RNG seed");
    synth->add_option("--out", out, "output directory")->required();

    auto* rep = app.add_subcommand("report", "write figure series and the results report");
    rep->add_option("--config", config, "run config (JSON)")->required();
    rep->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    seed_given = seed_opt->count() > 0;

    try {
        if (*synth) return synth_command(scenario, seed, out);

        auto cfg = pipeline::RunConfig::load(config);
        if (*ingest) {
            const auto ds = pipeline::load(cfg);
            write_canonical(ds, out, cfg.study);
            std::cout << render_ingest_report(ds);
            return 0;
        }
        if (*rep) {
            const auto res = pipeline::write_report(cfg, out);
            std::cout << "wrote " << res.outputs.size() << " files to " << out << "\n";
            return 0;
        }
        if (!se_type.empty()) {
            try {
                cfg.se = stats::parse_se_type(se_type);
            } catch (const std::invalid_argument& e) {
                throw pipeline::ConfigError(e.what());
            }
        }
        if (threads != 0) cfg.threads = threads;
        if (seed_given) cfg.seed = seed;
        cfg.validate();
        const auto res = pipeline::run(cfg, preset, out);
        for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
        std::cout << "preset " << preset << ": wrote " << res.outputs.size() << " files to " << out << "\n";
        return 0;
    } catch (const pipeline::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const stats::EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaViolation& e) {
        std::cerr << "schema violation: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "filesystem error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
