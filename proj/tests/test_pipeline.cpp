#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "polconn/pipeline.hpp"
#include "polconn/synthkit.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace polconn;
using namespace polconn::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = POLCONN_CLI;

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("polconn_pipe_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

int cli(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// One synthetic fixture shared by the tests below.
const fs::path& fixture() {
    static const fs::path dir = [] {
        auto d = scratch("fixture");
        REQUIRE(cli("synth --scenario fixture --seed 42 --out " + d.string()) == 0);
        return d;
    }();
    return dir;
}

RunConfig parse(const std::string& text, const fs::path& base = "/base") {
    return RunConfig::from_json(json::parse(text), base);
}

}  // namespace

TEST_CASE("config parsing and validation") {
    const auto c = parse(R"({"data_dir":"data","se_type":"cluster_by_stock","threads":4,
                             "study_window":["2019-06-06","2020-01-17"],"split_date":"2019-10-05"})");
    CHECK(c.data_dir == fs::path("/base/data"));
    CHECK(c.se == stats::SeType::cluster);
    CHECK(c.threads == 4);
    CHECK(c.min_obs == 60);

    const auto back = RunConfig::from_json(c.to_json(), "/elsewhere");
    CHECK(back.to_json() == c.to_json());

    CHECK_THROWS_AS(parse(R"({"data_dir":"d","colour":"red"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"threads":2})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","split_date":"2019-13-01"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","split_date":"2021-01-04"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","estimation_window":["2019-01-01","2019-07-01"]})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","study_window":["2020-01-17","2019-06-06"]})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","threads":0})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","min_obs":2})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","winsorize":0.5})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","se_type":"sandwich"})"), ConfigError);
    CHECK_THROWS_AS(parse(R"({"data_dir":"d","subtract_alpha":1})"), ConfigError);
    CHECK_THROWS_AS(parse(R"(["d"])"), ConfigError);

    const auto dir = scratch("cfg");
    fs::create_directories(dir);
    spit(dir / "bad.json", "{ not json");
    CHECK_THROWS_AS(RunConfig::load(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(RunConfig::load(dir / "missing.json"), ConfigError);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("cli exit codes") {
    const auto cfg = (fixture() / "config.json").string();
    const auto out = scratch("codes");
    CHECK(cli("") == 1);
    CHECK(cli("run --config " + cfg) == 1);
    CHECK(cli("run --config " + cfg + " --out " + out.string() + " --preset nonsense") == 1);
    CHECK(cli("run --config " + cfg + " --out " + out.string() + " --se-type sandwich") == 1);
    CHECK(cli("synth --scenario nonsense --out " + out.string()) == 1);
    CHECK(cli("--version") == 0);

    const auto dir = scratch("codes_cfg");
    fs::create_directories(dir);
    spit(dir / "nodata.json", R"({"data_dir":"does-not-exist"})");
    CHECK(cli("run --config " + (dir / "nodata.json").string() + " --out " + out.string()) == 2);

    // a broken input table is a data error
    const auto broken = scratch("broken");
    fs::copy(fixture(), broken, fs::copy_options::recursive);
    spit(broken / "returns.csv", "ticker,date\n");
    CHECK(cli("run --config " + (broken / "config.json").string() + " --out " + out.string()) == 2);

    // nothing can be estimated when no stock reaches min_obs
    const auto starved = scratch("starved");
    fs::copy(fixture(), starved, fs::copy_options::recursive);
    spit(starved / "config.json", R"({"data_dir":".","min_obs":100000})");
    CHECK(cli("run --config " + (starved / "config.json").string() + " --out " + out.string() +
              " --preset panel-full") == 3);
}

TEST_CASE("synth is reproducible byte for byte") {
    const auto a = scratch("synth_a"), b = scratch("synth_b");
    REQUIRE(cli("synth --seed 42 --out " + a.string()) == 0);
    REQUIRE(cli("synth --seed 42 --out " + b.string()) == 0);
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
        ++n;
    }
    CHECK(n >= 12);
    const auto c = scratch("synth_c");
    REQUIRE(cli("synth --seed 43 --out " + c.string()) == 0);
    CHECK(slurp(a / "returns.csv") != slurp(c / "returns.csv"));
}

TEST_CASE("leverage above one drops exactly that row") {
    const auto dir = scratch("leverage");
    fs::copy(fixture(), dir, fs::copy_options::recursive);
    auto text = slurp(dir / "controls.csv");
    // second line is the first data row: ticker,date,size,leverage,...
    const auto l1 = text.find('\n') + 1;
    std::size_t comma = l1;
    for (int i = 0; i < 3; ++i) comma = text.find(',', comma) + 1;
    const auto end = text.find(',', comma);
    text.replace(comma, end - comma, "1.5");
    spit(dir / "controls.csv", text);

    const auto cfg = RunConfig::load(dir / "config.json");
    const auto ds = load(cfg);
    CHECK(ds.panel.drops.count("controls: leverage > 1 rows") == 1);
    CHECK(ds.panel.tickers.size() == 120);

    const auto out = scratch("leverage_out");
    run(cfg, "events", out);
    const auto m = json::parse(slurp(out / "manifest.json"));
    bool found = false;
    for (const auto& d : m["drops"])
        if (d["reason"] == "controls: leverage > 1 rows") found = d["count"] == 1;
    CHECK(found);
}

TEST_CASE("run all on the fixture: outputs, manifest and determinism") {
    auto cfg = RunConfig::load(fixture() / "config.json");
    const auto a = scratch("all_a"), b = scratch("all_b");
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const auto ra = run(cfg, "all", a);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60.0);
    cfg.threads = 8;
    const auto rb = run(cfg, "all", b);

    for (const char* f : {"betas.csv", "worldbetas.csv", "ar_panel.csv", "protest_series.csv", "event_results.csv",
                          "events.md", "panel.csv", "model_results.csv", "panel_full.md", "panel_pre.md",
                          "panel_post.md", "robustness_shindex_full.md", "sensitivity.csv", "sensitivity.md",
                          "figure1_series.csv", "report.md", "manifest.json"})
        CHECK_MESSAGE(fs::exists(a / f), f);
    REQUIRE(ra.outputs.size() == rb.outputs.size());
    for (const auto& f : ra.outputs) {
        if (f == "manifest.json") continue;  // records the thread count
        CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f.string());
    }

    const auto m = json::parse(slurp(a / "manifest.json"));
    CHECK(m["tool"] == kToolName);
    CHECK(m["version"] == kToolVersion);
    CHECK(m["preset"] == "all");
    CHECK(m["rng"]["seed"] == 42);
    CHECK(m["config_sha256"] == sha256_hex(m["config"].dump()));
    for (const auto& o : m["outputs"]) {
        const auto p = a / o["file"].get<std::string>();
        CHECK(o["sha256"] == sha256_file(p));
        CHECK(o["bytes"] == fs::file_size(p));
    }
    CHECK(m["inputs"].size() >= 12);
    // (1)..(7) for each of 6 panel tables, 2 + 2 + 8 sensitivity columns; events on top
    std::size_t panel_models = 0;
    for (const auto& x : m["models"])
        if (x.contains("fixed_effects") && x.contains("rows_missing")) ++panel_models;
    CHECK(panel_models == 6 * 7 + 2 + 2 + 7);
    CHECK(slurp(a / "manifest.json").find(a.string()) == std::string::npos);

    // the planted H level effect is large enough to show up in the full table
    const auto md = slurp(a / "panel_full.md");
    CHECK(md.find("| H |") != std::string::npos);
    CHECK(slurp(a / "report.md").find("no dynamic-panel correction") != std::string::npos);
}

TEST_CASE("single presets and the report command") {
    const auto cfg = RunConfig::load(fixture() / "config.json");
    const auto out = scratch("single");
    run(cfg, "panel-pre", out);
    CHECK(fs::exists(out / "panel_pre.md"));
    CHECK_FALSE(fs::exists(out / "panel_full.md"));
    CHECK_FALSE(fs::exists(out / "events.md"));
    write_report(cfg, out);
    CHECK(fs::exists(out / "report_manifest.json"));
    CHECK(slurp(out / "report.md").find("Stock-day panel, before the split") != std::string::npos);
    CHECK_THROWS_AS(run(cfg, "everything", out), ConfigError);

    const auto cli_out = scratch("cli_run");
    CHECK(cli("run --config " + (fixture() / "config.json").string() + " --out " + cli_out.string() +
              " --preset events --threads 2 --se-type robust") == 0);
    const auto m = json::parse(slurp(cli_out / "manifest.json"));
    CHECK(m["config"]["threads"] == 2);
    CHECK(m["config"]["se_type"] == "robust");

    const auto ing = scratch("cli_ingest");
    CHECK(cli("ingest --config " + (fixture() / "config.json").string() + " --out " + ing.string()) == 0);
    CHECK(fs::exists(ing / "returns.csv"));
}
