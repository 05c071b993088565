#include "polconn/pipeline.hpp"

#include "polconn/csv.hpp"
#include "polconn/event_study.hpp"
#include "polconn/market_model.hpp"
#include "polconn/panel.hpp"
#include "polconn/parallel.hpp"
#include "polconn/report.hpp"
#include "polconn/synthkit.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace polconn::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

namespace {

Date json_date(const json& j, const std::string& key) {
    if (!j.is_string()) throw ConfigError("config '" + key + "': expected an ISO date string");
    Date d;
    if (!Date::try_parse(j.get<std::string>(), d))
        throw ConfigError("config '" + key + "': not an ISO-8601 date: '" + j.get<std::string>() + "'");
    return d;
}

DateRange json_range(const json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2) throw ConfigError("config '" + key + "': expected [first, last] dates");
    return {json_date(j[0], key), json_date(j[1], key)};
}

json range_json(DateRange r) { return json::array({r.first.iso(), r.last.iso()}); }

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() ? p : (base / p).lexically_normal(); }

template <class T>
T json_number(const json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError("config '" + key + "': expected a number");
    return j.get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    for (const auto& [key, v] : j.items()) {
        if (key == "data_dir") {
            if (!v.is_string()) throw ConfigError("config 'data_dir': expected a path string");
            c.data_dir = resolve(v.get<std::string>(), base);
        } else if (key == "study_window") {
            c.study = json_range(v, key);
        } else if (key == "estimation_window") {
            c.estimation = json_range(v, key);
        } else if (key == "occupy_estimation_window") {
            c.occupy_estimation = json_range(v, key);
        } else if (key == "occupy_window") {
            c.occupy = json_range(v, key);
        } else if (key == "split_date") {
            c.split = json_date(v, key);
        } else if (key == "se_type") {
            if (!v.is_string()) throw ConfigError("config 'se_type': expected a string");
            try {
                c.se = stats::parse_se_type(v.get<std::string>());
            } catch (const std::invalid_argument& e) {
                throw ConfigError(e.what());
            }
        } else if (key == "threads") {
            c.threads = json_number<unsigned>(v, key);
        } else if (key == "seed") {
            c.seed = json_number<std::uint64_t>(v, key);
        } else if (key == "min_obs") {
            c.min_obs = json_number<int>(v, key);
        } else if (key == "occupy_min_obs") {
            c.occupy_min_obs = json_number<int>(v, key);
        } else if (key == "subtract_alpha") {
            if (!v.is_boolean()) throw ConfigError("config 'subtract_alpha': expected true or false");
            c.subtract_alpha = v.get<bool>();
        } else if (key == "winsorize") {
            c.winsorize = json_number<double>(v, key);
        } else if (key == "listed_before") {
            c.listing.listed_before = json_date(v, key);
        } else if (key == "alive_through") {
            c.listing.alive_through = json_date(v, key);
        } else if (key == "events_file" || key == "calendar_file") {
            if (!v.is_string()) throw ConfigError("config '" + key + "': expected a path string");
            (key == "events_file" ? c.events_file : c.calendar_file) = resolve(v.get<std::string>(), base);
        } else {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    if (c.data_dir.empty()) throw ConfigError("config: 'data_dir' is required");
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
    json j;
    j["data_dir"] = data_dir.string();
    j["study_window"] = range_json(study);
    j["estimation_window"] = range_json(estimation);
    j["occupy_estimation_window"] = range_json(occupy_estimation);
    j["occupy_window"] = range_json(occupy);
    j["split_date"] = split.iso();
    j["se_type"] = std::string(stats::to_string(se));
    j["threads"] = threads;
    j["seed"] = seed;
    j["min_obs"] = min_obs;
    j["occupy_min_obs"] = occupy_min_obs;
    j["subtract_alpha"] = subtract_alpha;
    j["winsorize"] = winsorize;
    j["listed_before"] = listing.listed_before.iso();
    j["alive_through"] = listing.alive_through.iso();
    if (events_file) j["events_file"] = events_file->string();
    if (calendar_file) j["calendar_file"] = calendar_file->string();
    return j;
}

void RunConfig::validate() const {
    for (const auto& [name, r] : {std::pair{"study_window", study}, std::pair{"estimation_window", estimation},
                                  std::pair{"occupy_estimation_window", occupy_estimation},
                                  std::pair{"occupy_window", occupy}})
        if (r.last < r.first) throw ConfigError(std::string(name) + ": last date precedes first date");
    if (!(estimation.last < study.first)) throw ConfigError("estimation window must end before the study window starts");
    if (!(occupy_estimation.last < occupy.first))
        throw ConfigError("occupy estimation window must end before the occupy window starts");
    if (!study.contains(split)) throw ConfigError("split_date must lie inside the study window");
    if (threads < 1 || threads > 256) throw ConfigError("threads must be between 1 and 256");
    if (min_obs < 3 || occupy_min_obs < 3) throw ConfigError("minimum observation counts must be at least 3");
    if (!(winsorize >= 0.0 && winsorize < 0.5)) throw ConfigError("winsorize must lie in [0, 0.5)");
}

const std::vector<std::string>& presets() {
    static const std::vector<std::string> p{"events",      "panel-full",         "panel-pre", "panel-post",
                                            "sensitivity", "robustness-shindex", "all"};
    return p;
}

// ---------------------------------------------------------------- hashing

std::string sha256_hex(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 15]);
    }
    return out;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    std::ostringstream s;
    s << in.rdbuf();
    return sha256_hex(s.str());
}

// ---------------------------------------------------------------- running

namespace {

const fs::path kBundled = POLCONN_DATA_DIR;

// Serialized, ordered file writes; every output is recorded for the manifest.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

    void write(const std::string& name, const std::string& content) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + (dir_ / name).string());
        out << content;
        out.close();
        if (!out) throw DataError("failed writing " + (dir_ / name).string());
        if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
    }
    const fs::path& dir() const { return dir_; }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::vector<std::string> files_;
};

struct TableRun {
    std::string id;
    std::string title;
    std::vector<panel::PanelModelResult> results;
};

json spec_json(const std::string& table, const panel::PanelModelResult& r) {
    const auto& s = r.spec;
    json j;
    j["table"] = table;
    j["column"] = s.name;
    j["flags"] = s.flags;
    j["interactions"] = s.interactions;
    j["covariates"] = s.covariates;
    j["covariate_interactions"] = s.covariate_interactions;
    j["stdprotests"] = s.stdprotests;
    j["market"] = std::string(panel::to_string(s.market));
    j["controls"] = s.controls;
    j["period"] = std::string(panel::to_string(s.period));
    j["split_day"] = s.split_day;
    j["fixed_effects"] = std::string(panel::to_string(s.fe));
    j["se_type"] = std::string(stats::to_string(s.se));
    j["firm_mask_size"] = std::count(s.firm_mask.begin(), s.firm_mask.end(), true);
    j["n_obs"] = r.fit.n_obs;
    j["n_firms"] = r.n_firms;
    j["rows_in_period"] = r.rows_in_period;
    j["rows_missing"] = r.rows_missing;
    j["dropped_terms"] = r.dropped_terms;
    return j;
}

report::RegressionTable to_table(const TableRun& t) {
    report::RegressionTable tab;
    tab.title = t.title;
    tab.dependent = "AR (%)";
    for (const auto& r : t.results)
        tab.columns.push_back({r.spec.name, r.fit, r.n_firms,
                               r.spec.fe == panel::FixedEffects::industry ? "YES"
                               : r.spec.fe == panel::FixedEffects::entity ? "firm"
                                                                          : "NO"});
    tab.notes.push_back("p-values in parentheses. *** p<0.01, ** p<0.05, * p<0.1. Standard errors: " +
                        std::string(stats::to_string(t.results.front().spec.se)) + ".");
    return tab;
}

class Runner {
public:
    Runner(const RunConfig& config, Outputs& out) : config_(config), out_(out) {}

    void base() {
        if (loaded_) return;
        ds_ = load(config_);
        study_ = StudyDays(ds_.calendar, config_.study);
        split_day_ = study_.anchor(config_.split);
        mm::MarketModelOptions o;
        o.min_obs = config_.min_obs;
        o.subtract_alpha = config_.subtract_alpha;
        o.winsorize = config_.winsorize;
        o.threads = config_.threads;
        ar_ = mm::build_abnormal_panel(ds_.panel, study_, config_.estimation, IndexSeries::MSCI_HK, o);
        std::vector<bool> wfit;
        worldfits_ = mm::estimate_betas(ds_.panel, config_.estimation, IndexSeries::MSCI_WORLD, config_.min_obs,
                                        config_.threads, &wfit);
        worldfitted_ = wfit;
        protests_ = protest_series_for_window(ds_.protests, ds_.calendar, config_.study);

        std::ostringstream s;
        mm::write_betas_csv(s, ar_.fits, ar_.fitted);
        out_.write("betas.csv", s.str());
        s.str("");
        mm::write_betas_csv(s, worldfits_, worldfitted_);
        out_.write("worldbetas.csv", s.str());
        s.str("");
        mm::write_ar_panel_csv(s, ar_);
        out_.write("ar_panel.csv", s.str());
        s.str("");
        write_csv_row(s, {"date", "day", "protests", "stdprotests"});
        for (std::size_t i = 0; i < protests_.dates.size(); ++i)
            write_csv_row(s, {protests_.dates[i].iso(), std::to_string(i + 1), std::to_string(protests_.protests[i]),
                              format_double(protests_.stdprotests[i])});
        out_.write("protest_series.csv", s.str());
        for (const auto& [reason, n] : ar_.drops.entries()) warnings_.push_back(reason + ": " + std::to_string(n));
        loaded_ = true;
    }

    void events() {
        base();
        if (ds_.events.empty()) throw DataError("no events declared (events.csv missing and no fallback)");
        std::vector<double> wb;
        for (std::size_t f = 0; f < worldfits_.size(); ++f) wb.push_back(worldfitted_[f] ? worldfits_[f].beta : kMissing);
        const auto cs = es::build_cross_section(ds_, study_, wb);
        es::EventOptions eo;
        eo.se = config_.se;
        const auto sets = es::default_flag_sets();
        es::EventSuite suite, period;
        try {
            suite = es::run_event_suite(ds_.events, ar_, cs, sets, study_, eo, config_.threads);
            period = es::run_period_suite(ar_, cs, sets, split_day_, eo, config_.threads);
        } catch (const stats::EstimationError& e) {
            throw stats::EstimationError(std::string("event regressions: ") + e.what());
        }
        for (const auto& w : suite.warnings) warnings_.push_back(w);

        es::EventSuite all = suite;
        all.results.insert(all.results.end(), period.results.begin(), period.results.end());
        std::ostringstream csv;
        es::write_event_results_csv(csv, all);
        out_.write("event_results.csv", csv.str());

        std::ostringstream md;
        md << "## Event-window regressions\n\n";
        auto emit = [&](const es::EventSuite& s, const std::string& heading, bool by_event) {
            for (std::size_t k = 0; k < sets.size(); ++k) {
                report::RegressionTable t;
                std::string set;
                for (const auto& f : sets[k]) set += (set.empty() ? "" : ", ") + f;
                t.title = heading + ": " + set;
                t.dependent = "CAR (%)";
                for (const auto& r : s.results) {
                    if (r.flag_set != sets[k]) continue;
                    const std::string name = by_event ? r.date.iso() + " " + r.window.label() : r.window.label();
                    t.columns.push_back({name, r.fit, -1, "YES"});
                }
                if (t.columns.empty()) continue;
                t.notes.push_back("p-values in parentheses. *** p<0.01, ** p<0.05, * p<0.1.");
                md << report::render_markdown(t);
                report::write_results_rows(results_, by_event ? "events" : "periods", t);
            }
        };
        emit(suite, "Events", true);
        emit(period, "Whole window and sub-periods (split day " + std::to_string(split_day_) + ")", false);
        for (const auto& r : all.results) {
            json j;
            j["table"] = r.halfwidth ? "events" : "periods";
            j["column"] = r.halfwidth ? r.date.iso() + " " + r.window.label() : r.window.label();
            j["event"] = r.event;
            j["anchor"] = r.anchor;
            j["window"] = {r.window.a, r.window.b};
            j["flags"] = r.flag_set;
            j["controls"] = {"worldbeta", "size", "leverage"};
            j["fixed_effects"] = "industry";
            j["se_type"] = std::string(stats::to_string(r.fit.se_type));
            j["n_obs"] = r.fit.n_obs;
            j["n_dropped"] = r.n_dropped;
            models_.push_back(j);
        }
        out_.write("events.md", md.str());
        markdown_.push_back("events.md");
    }

    void panel_table(const std::string& id, const std::string& title, panel::Period period, panel::MarketControl market) {
        ensure_panel();
        run_table(id, title, panel::table_presets(period, market, config_.se, split_day_));
    }

    void sensitivity() {
        ensure_panel();
        const StudyDays occ(ds_.calendar, config_.occupy);
        mm::MarketModelOptions o;
        o.min_obs = config_.min_obs;
        o.subtract_alpha = config_.subtract_alpha;
        o.threads = config_.threads;
        const auto occ_ar = mm::build_abnormal_panel(ds_.panel, occ, config_.occupy_estimation, IndexSeries::MSCI_HK, o);
        const auto counts = window_counts(ds_.protests, ds_.calendar, config_.occupy);
        const auto sens = panel::occupy_sensitivity(occ_ar, counts, config_.occupy_min_obs, config_.threads);
        std::ostringstream s;
        panel::write_sensitivity_csv(s, sens);
        out_.write("sensitivity.csv", s.str());

        const auto fitted = std::count_if(sens.begin(), sens.end(), [](const auto& b) { return b.fitted; });
        using V = panel::SensitivityVariant;
        if (fitted > 0)
            run_table("sensitivity-fitted", "Occupy-period sensitivity, fitted stocks only",
                      panel::sensitivity_specs(panel_, sens, V::fitted_only, config_.se));
        else
            warnings_.push_back("sensitivity: no stock has an occupy-period sensitivity; fitted-only table skipped");
        run_table("sensitivity-zero", "Occupy-period sensitivity, unfitted stocks set to zero",
                  panel::sensitivity_specs(panel_, sens, V::zero_filled, config_.se));
        run_table("sensitivity-control", "Panel columns with occupybeta' as a control",
                  panel::sensitivity_specs(panel_, sens, V::as_control, config_.se));
    }

    void finish_tables() {
        std::ostringstream csv;
        report::write_results_header(csv);
        csv << results_.str();
        for (const auto& t : tables_) report::write_results_rows(csv, t.id, to_table(t));
        if (!tables_.empty() || !results_.str().empty()) out_.write("model_results.csv", csv.str());

        // one markdown file per table family
        std::vector<std::pair<std::string, std::string>> files;
        for (const auto& t : tables_) {
            std::string file = t.id.rfind("sensitivity", 0) == 0 ? "sensitivity.md" : t.id + ".md";
            std::replace(file.begin(), file.end(), '-', '_');
            auto it = std::find_if(files.begin(), files.end(), [&](const auto& p) { return p.first == file; });
            if (it == files.end()) {
                files.emplace_back(file, "");
                it = files.end() - 1;
            }
            it->second += report::render_markdown(to_table(t));
        }
        for (const auto& [f, content] : files) {
            out_.write(f, content);
            markdown_.push_back(f);
        }
    }

    Dataset& dataset() {
        base();
        return ds_;
    }
    const StudyDays& study() const { return study_; }
    const ProtestSeries& protests() const { return protests_; }
    std::vector<json>& models() { return models_; }
    std::vector<std::string>& warnings() { return warnings_; }

private:
    void ensure_panel() {
        base();
        if (have_panel_) return;
        panel_ = panel::build_panel(ar_, protests_, ds_, study_);
        std::ostringstream s;
        panel::write_panel_csv(s, panel_);
        out_.write("panel.csv", s.str());
        have_panel_ = true;
    }

    void run_table(const std::string& id, const std::string& title, const std::vector<panel::PanelModelSpec>& specs) {
        std::vector<panel::PanelModelResult> results(specs.size());
        parallel_for(specs.size(), config_.threads, [&](std::size_t i) {
            try {
                results[i] = panel::run_panel_model(panel_, specs[i]);
            } catch (const stats::EstimationError& e) {
                throw stats::EstimationError("model " + id + " " + specs[i].name + ": " + e.what());
            }
        });
        for (const auto& r : results) models_.push_back(spec_json(id, r));
        tables_.push_back({id, title, std::move(results)});
    }

    const RunConfig& config_;
    Outputs& out_;
    bool loaded_ = false;
    bool have_panel_ = false;
    Dataset ds_;
    StudyDays study_;
    int split_day_ = 0;
    mm::AbnormalPanel ar_;
    std::vector<mm::MarketModelFit> worldfits_;
    std::vector<bool> worldfitted_;
    ProtestSeries protests_;
    panel::Panel panel_;
    std::vector<TableRun> tables_;
    std::ostringstream results_;
    std::vector<json> models_;
    std::vector<std::string> warnings_;

public:
    std::vector<std::string> markdown_;
};

std::vector<json> input_hashes(const RunConfig& config) {
    std::vector<json> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(config.data_dir))
        if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    bool have_cal = false, have_events = false;
    for (const auto& f : files) {
        const auto name = f.filename().string();
        if (name == "calendar.csv") have_cal = true;
        if (name == "events.csv") have_events = true;
        out.push_back({{"file", name}, {"sha256", sha256_file(f)}});
    }
    if (!have_cal) {
        const auto p = config.calendar_file.value_or(kBundled / "hk_calendar.csv");
        out.push_back({{"file", "fallback:" + p.filename().string()}, {"sha256", sha256_file(p)}});
    }
    if (!have_events) {
        const auto p = config.events_file.value_or(kBundled / "events.csv");
        out.push_back({{"file", "fallback:" + p.filename().string()}, {"sha256", sha256_file(p)}});
    }
    return out;
}

std::string describe(const std::string& name, std::span<const double> v) {
    std::vector<double> x;
    for (double d : v)
        if (!is_missing(d)) x.push_back(d);
    if (x.empty()) return "| " + name + " | 0 | | | | |\n";
    const double mean = stats::stable_sum(x) / static_cast<double>(x.size());
    double ss = 0;
    for (double d : x) ss += (d - mean) * (d - mean);
    const double sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    return "| " + name + " | " + std::to_string(x.size()) + " | " + report::fmt_coef(mean) + " | " +
           report::fmt_coef(sd) + " | " + report::fmt_coef(*lo) + " | " + report::fmt_coef(*hi) + " |\n";
}

void report_from(Runner& r, const RunConfig& config, Outputs& out) {
    const Dataset& ds = r.dataset();
    const auto& ps = r.protests();
    const auto& st = r.study();
    const auto& hk = ds.panel.index_series(IndexSeries::MSCI_HK);

    std::ostringstream fig;
    write_csv_row(fig, {"date", "day", "protests", "stdprotests", "msci_hk_return", "msci_hk_level"});
    double level = 100.0;
    for (int d = 1; d <= st.size(); ++d) {
        const auto i = static_cast<std::size_t>(d - 1);
        const double ret = hk[st.first_position() + i];
        if (!is_missing(ret)) level *= 1.0 + ret / 100.0;
        write_csv_row(fig, {ps.dates[i].iso(), std::to_string(d), std::to_string(ps.protests[i]),
                            format_double(ps.stdprotests[i]), is_missing(ret) ? "" : format_double(ret),
                            format_double(level)});
    }
    out.write("figure1_series.csv", fig.str());

    std::ostringstream md;
    md << "# Results report\n\n";
    md << "Study window " << config.study.first.iso() << " to " << config.study.last.iso() << ": " << st.size()
       << " trading days; split at day " << st.anchor(config.split) << " (" << st.date(st.anchor(config.split)).iso()
       << ").\n\n";
    md << "## Descriptive statistics\n\n| variable | N | mean | sd | min | max |\n|---|---|---|---|---|---|\n";
    std::vector<double> p(ps.protests.begin(), ps.protests.end());
    md << describe("protests", p);
    md << describe("stdprotests", ps.stdprotests);
    for (auto f : kFlagNames) {
        std::vector<double> x;
        for (const auto& c : ds.flags) x.push_back(c.flag(f));
        md << describe(std::string(f), x);
    }
    md << "\nFirms in the sample: " << ds.panel.tickers.size() << ".\n\n";
    md << "## Sample construction\n\n| reason | count |\n|---|---|\n";
    std::size_t dropped = 0;
    for (const auto* rep : {&ds.panel.drops, &ds.report})
        for (const auto& [reason, n] : rep->entries()) {
            md << "| " << reason << " | " << n << " |\n";
            dropped += n;
        }
    if (dropped == 0) md << "| (none) | 0 |\n";
    md << "\nAR lags enter the pooled regressions directly; no dynamic-panel correction is applied.\n\n";

    const char* order[] = {"events.md",      "panel_full.md",  "panel_pre.md", "panel_post.md", "robustness_shindex_full.md",
                           "robustness_shindex_pre.md", "robustness_shindex_post.md", "sensitivity.md"};
    for (const char* f : order) {
        const auto path = out.dir() / f;
        if (!fs::exists(path)) continue;
        std::ifstream in(path, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        md << s.str();
    }
    if (!r.warnings().empty()) {
        md << "## Warnings\n\n";
        for (const auto& w : r.warnings()) md << "- " << w << "\n";
    }
    out.write("report.md", md.str());
}

void write_manifest(const RunConfig& config, const std::string& command, const std::string& preset, Runner& r,
                    Outputs& out, const std::string& name) {
    json m;
    m["tool"] = kToolName;
    m["version"] = kToolVersion;
    m["command"] = command;
    m["preset"] = preset;
    const json cfg = config.to_json();
    m["config"] = cfg;
    m["config_sha256"] = sha256_hex(cfg.dump());
    m["rng"] = {{"algorithm", synth::Rng::kAlgorithm}, {"seed", config.seed}};
    m["inputs"] = input_hashes(config);
    json outs = json::array();
    for (const auto& f : out.files()) {
        const auto p = out.dir() / f;
        outs.push_back({{"file", f}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
    }
    m["outputs"] = outs;
    m["models"] = r.models();
    m["warnings"] = r.warnings();
    json drops = json::array();
    const Dataset& ds = r.dataset();
    for (const auto* rep : {&ds.panel.drops, &ds.report})
        for (const auto& [reason, n] : rep->entries()) drops.push_back({{"reason", reason}, {"count", n}});
    m["drops"] = drops;
    std::ofstream f(out.dir() / name, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + (out.dir() / name).string());
    f << m.dump(2) << '\n';
}

RunResult result_of(const Outputs& out, Runner& r, const std::string& manifest) {
    RunResult res;
    for (const auto& f : out.files()) res.outputs.emplace_back(f);
    res.outputs.emplace_back(manifest);
    res.warnings = r.warnings();
    return res;
}

}  // namespace

Dataset load(const RunConfig& config) {
    config.validate();
    if (!fs::is_directory(config.data_dir)) throw DataError("data directory " + config.data_dir.string() + " not found");
    DatasetOptions o;
    o.listing = config.listing;
    o.default_calendar = config.calendar_file.value_or(kBundled / "hk_calendar.csv");
    o.default_events = config.events_file.value_or(kBundled / "events.csv");
    return load_dataset(config.data_dir, o);
}

RunResult run(const RunConfig& config, const std::string& preset, const fs::path& out_dir) {
    const auto& p = presets();
    if (std::find(p.begin(), p.end(), preset) == p.end()) throw ConfigError("unknown preset '" + preset + "'");
    config.validate();
    Outputs out(out_dir);
    Runner r(config, out);
    using panel::MarketControl;
    using panel::Period;
    const bool all = preset == "all";
    r.base();
    if (all || preset == "events") r.events();
    if (all || preset == "panel-full") r.panel_table("panel-full", "Stock-day panel, full window", Period::full, MarketControl::worldchange);
    if (all || preset == "panel-pre") r.panel_table("panel-pre", "Stock-day panel, before the split", Period::pre, MarketControl::worldchange);
    if (all || preset == "panel-post") r.panel_table("panel-post", "Stock-day panel, after the split", Period::post, MarketControl::worldchange);
    if (all || preset == "robustness-shindex") {
        r.panel_table("robustness-shindex-full", "Shanghai composite as market control, full window", Period::full, MarketControl::shindex);
        r.panel_table("robustness-shindex-pre", "Shanghai composite as market control, before the split", Period::pre, MarketControl::shindex);
        r.panel_table("robustness-shindex-post", "Shanghai composite as market control, after the split", Period::post, MarketControl::shindex);
    }
    if (all || preset == "sensitivity") r.sensitivity();
    r.finish_tables();
    if (all) report_from(r, config, out);
    write_manifest(config, "run", preset, r, out, "manifest.json");
    return result_of(out, r, "manifest.json");
}

RunResult write_report(const RunConfig& config, const fs::path& out_dir) {
    Outputs out(out_dir);
    Runner r(config, out);
    r.base();
    report_from(r, config, out);
    write_manifest(config, "report", "", r, out, "report_manifest.json");
    return result_of(out, r, "report_manifest.json");
}

}  // namespace polconn::pipeline
