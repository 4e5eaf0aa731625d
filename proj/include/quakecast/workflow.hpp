// SPDX-License-Identifier: Apache-2.0
#pragma once

// File-level workflow behind the command-line tool: ingest a catalog, prepare
// per-region monthly datasets, train and evaluate models, export plot data.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "quakecast/catalog.hpp"
#include "quakecast/csv.hpp"
#include "quakecast/error.hpp"
#include "quakecast/metrics.hpp"
#include "quakecast/model.hpp"
#include "quakecast/series.hpp"
#include "quakecast/train.hpp"

namespace quakecast {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------- file helpers

inline std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 unavailable");
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest;
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline std::string utc_now() {
    return format_time(std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()));
}

// ---------------------------------------------------------------- manifest

/// Record of one command invocation: configuration, hashed inputs, outputs,
/// tool version and wall-clock timestamps.
struct RunManifest {
    std::string command;
    json config = json::object();
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    std::string started = utc_now();

    explicit RunManifest(std::string cmd) : command(std::move(cmd)) {}

    json to_json() const {
        json j;
        j["tool"] = "quakecast";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["config"] = config;
        j["inputs"] = json::array();
        for (const auto& p : inputs) j["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
        j["outputs"] = json::array();
        for (const auto& p : outputs) j["outputs"].push_back(p.string());
        j["started"] = started;
        j["finished"] = utc_now();
        return j;
    }

    void write(const fs::path& path) const { write_json(path, to_json()); }
};

// ---------------------------------------------------------------- ingest

/// Parses "lat_min,lat_max,lon_min,lon_max" into the grid bounds.
inline RegionGrid parse_bbox(std::string_view text) {
    std::vector<double> v;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const auto value = csv::parse_double(text.substr(pos, comma - pos));
        if (!value) throw ConfigError("invalid bounding box '" + std::string(text) + "'");
        v.push_back(*value);
        pos = comma + 1;
    }
    if (v.size() != 4) throw ConfigError("bounding box needs 4 values lat_min,lat_max,lon_min,lon_max");
    RegionGrid g;
    g.lat_min = v[0];
    g.lat_max = v[1];
    g.lon_min = v[2];
    g.lon_max = v[3];
    g.validate();
    return g;
}

struct IngestOptions {
    fs::path catalog;
    fs::path out;
    double min_magnitude = 3.5;
    RegionGrid grid;
    TimeRange range = default_time_range();
    CatalogColumns columns;
};

struct IngestSummary {
    std::size_t rows = 0;
    std::size_t rejected = 0;
    std::size_t duplicates = 0;
    std::size_t filtered_out = 0;
    std::size_t kept = 0;
    std::array<std::size_t, 9> per_region{};
};

inline json grid_to_json(const RegionGrid& g) {
    return {{"lat_min", g.lat_min}, {"lat_max", g.lat_max}, {"lon_min", g.lon_min},
            {"lon_max", g.lon_max}, {"labels", g.labels}};
}

inline RegionGrid grid_from_json(const json& j) {
    RegionGrid g;
    g.lat_min = j.at("lat_min").get<double>();
    g.lat_max = j.at("lat_max").get<double>();
    g.lon_min = j.at("lon_min").get<double>();
    g.lon_max = j.at("lon_max").get<double>();
    g.labels = j.at("labels").get<std::vector<int>>();
    g.validate();
    return g;
}

inline TimePoint parse_time_or_throw(const std::string& text, const std::string& what) {
    const auto t = parse_time(text);
    if (!t) throw ConfigError("invalid " + what + " '" + text + "'");
    return *t;
}

/// Writes events.csv, rejects.csv, ingest.json and manifest.json into `out`.
inline IngestSummary cmd_ingest(const IngestOptions& opt) {
    opt.grid.validate();
    RunManifest manifest{"ingest"};
    std::ifstream in(opt.catalog);
    if (!in) throw IoError("cannot read catalog " + opt.catalog.string());
    manifest.inputs.push_back(opt.catalog);

    ParsedCatalog parsed = parse_catalog(in, opt.columns);
    IngestSummary s;
    s.rejected = parsed.rejects.size();
    s.rows = parsed.events.size() + s.rejected;
    const auto unique = deduplicate(parsed.events);
    s.duplicates = parsed.events.size() - unique.size();
    auto kept = filter_events(unique, opt.min_magnitude, opt.range, opt.grid);
    s.filtered_out = unique.size() - kept.size();
    s.kept = kept.size();
    if (kept.empty()) throw DomainError("no events survive filtering of " + opt.catalog.string());
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.time < b.time; });

    std::vector<int> regions;
    regions.reserve(kept.size());
    for (const auto& e : kept) {
        regions.push_back(assign_region(e, opt.grid).index);
        ++s.per_region[static_cast<std::size_t>(regions.back() - 1)];
    }

    ensure_dir(opt.out);
    const auto events_path = opt.out / "events.csv";
    {
        auto out = open_output(events_path);
        serialize_catalog(out, kept, &regions);
    }
    const auto rejects_path = opt.out / "rejects.csv";
    {
        auto out = open_output(rejects_path);
        write_rejects(out, parsed.rejects);
    }
    json info;
    info["catalog"] = opt.catalog.string();
    info["min_magnitude"] = opt.min_magnitude;
    info["grid"] = grid_to_json(opt.grid);
    info["start"] = format_time(opt.range.start);
    info["end"] = format_time(opt.range.end);
    info["counts"] = {{"rows", s.rows},         {"rejected", s.rejected}, {"duplicates", s.duplicates},
                      {"filtered_out", s.filtered_out}, {"kept", s.kept}};
    info["per_region"] = s.per_region;
    const auto info_path = opt.out / "ingest.json";
    write_json(info_path, info);

    manifest.config = {{"min_magnitude", opt.min_magnitude}, {"grid", grid_to_json(opt.grid)},
                       {"start", format_time(opt.range.start)}, {"end", format_time(opt.range.end)}};
    manifest.outputs = {events_path, rejects_path, info_path};
    manifest.write(opt.out / "manifest.json");
    return s;
}

// ---------------------------------------------------------------- prepare

struct PrepareOptions {
    fs::path events_dir;
    fs::path out;  // defaults to events_dir
    SeriesCase kind = SeriesCase::Count;
    std::size_t window = 12;
    double split = 0.8;
};

inline std::string dataset_stem(int region, SeriesCase kind) {
    return "region_" + std::to_string(region) + "_" + std::string(to_string(kind));
}

inline void write_prepared(const fs::path& dir, const PreparedSeries& p) {
    const auto stem = dataset_stem(p.region.index, p.kind);
    {
        auto out = open_output(dir / (stem + ".csv"));
        csv::write_row(out, {"month", "raw", "imputed", "scaled", "split"});
        for (std::size_t i = 0; i < p.months(); ++i) {
            csv::write_row(out, {p.month_at(i).str(), csv::format_double(p.raw[i]), csv::format_double(p.imputed[i]),
                                 csv::format_double(p.scaled[i]), i < p.train_months ? "train" : "test"});
        }
    }
    json side;
    side["region"] = p.region.index;
    side["case"] = to_string(p.kind);
    side["window"] = p.window;
    side["split"] = p.split_ratio;
    side["start"] = p.start.str();
    side["months"] = p.months();
    side["train_months"] = p.train_months;
    side["scaler"] = {{"min", p.scaler.min}, {"max", p.scaler.max}};
    write_json(dir / (stem + ".json"), side);
}

/// Reads back a dataset written by cmd_prepare.
inline PreparedSeries load_prepared(const fs::path& dir, int region, SeriesCase kind) {
    const auto stem = dataset_stem(region, kind);
    const auto side_path = dir / (stem + ".json");
    const auto csv_path = dir / (stem + ".csv");
    if (!fs::exists(side_path)) throw IoError("missing prepared dataset sidecar " + side_path.string());
    const json side = read_json(side_path);
    PreparedSeries p;
    p.region = RegionId{region};
    p.kind = kind;
    const auto start = YearMonth::parse(side.at("start").get<std::string>());
    if (!start) throw IoError("bad start month in " + side_path.string());
    p.start = *start;
    p.window = side.at("window").get<std::size_t>();
    p.split_ratio = side.at("split").get<double>();
    p.train_months = side.at("train_months").get<std::size_t>();
    p.scaler = {side.at("scaler").at("min").get<double>(), side.at("scaler").at("max").get<double>()};

    std::ifstream in(csv_path);
    if (!in) throw IoError("missing prepared dataset " + csv_path.string());
    csv::Reader reader(in);
    std::vector<std::string> row;
    if (!reader.next(row) || row != std::vector<std::string>{"month", "raw", "imputed", "scaled", "split"}) {
        throw IoError("unexpected header in " + csv_path.string());
    }
    while (reader.next(row)) {
        if (row.size() != 5) throw IoError(csv_path.string() + ":" + std::to_string(reader.line()) + ": expected 5 fields");
        const auto raw = csv::parse_double(row[1]), imp = csv::parse_double(row[2]), sc = csv::parse_double(row[3]);
        if (!raw || !imp || !sc) throw IoError(csv_path.string() + ":" + std::to_string(reader.line()) + ": bad number");
        p.raw.push_back(*raw);
        p.imputed.push_back(*imp);
        p.scaled.push_back(*sc);
    }
    if (p.raw.size() != side.at("months").get<std::size_t>() || p.train_months + p.window >= p.raw.size() ||
        p.train_months <= p.window) {
        throw IoError("prepared dataset " + csv_path.string() + " disagrees with its sidecar");
    }
    return p;
}

/// Writes region_<N>_<case>.csv/.json for all nine regions plus
/// prepared_<case>.json and a manifest. Returns the prepared series.
inline std::vector<PreparedSeries> cmd_prepare(const PrepareOptions& opt) {
    RunManifest manifest{"prepare"};
    const auto info_path = opt.events_dir / "ingest.json";
    const auto events_path = opt.events_dir / "events.csv";
    if (!fs::exists(info_path)) throw IoError("missing ingest output " + info_path.string());
    const json info = read_json(info_path);
    const RegionGrid grid = grid_from_json(info.at("grid"));
    const TimePoint start = parse_time_or_throw(info.at("start").get<std::string>(), "start time");
    const TimePoint end = parse_time_or_throw(info.at("end").get<std::string>(), "end time");
    std::ifstream in(events_path);
    if (!in) throw IoError("missing ingest output " + events_path.string());
    manifest.inputs = {info_path, events_path};
    const ParsedCatalog parsed = parse_catalog(in);
    if (!parsed.rejects.empty()) {
        throw IoError(events_path.string() + ":" + std::to_string(parsed.rejects.front().line) + ": " +
                      parsed.rejects.front().reason);
    }

    std::array<std::vector<CatalogEvent>, 9> by_region;
    for (const auto& e : parsed.events) by_region[static_cast<std::size_t>(assign_region(e, grid).index - 1)].push_back(e);

    const fs::path out = opt.out.empty() ? opt.events_dir : opt.out;
    ensure_dir(out);
    std::vector<PreparedSeries> prepared;
    const YearMonth first = YearMonth::of(start), last = YearMonth::of(end);
    json listing = json::array();
    for (int r = 1; r <= 9; ++r) {
        const auto series = aggregate_monthly(by_region[static_cast<std::size_t>(r - 1)], RegionId{r}, opt.kind, first, last);
        prepared.push_back(prepare_series(series, opt.window, opt.split));
        write_prepared(out, prepared.back());
        const auto stem = dataset_stem(r, opt.kind);
        manifest.outputs.push_back(out / (stem + ".csv"));
        manifest.outputs.push_back(out / (stem + ".json"));
        listing.push_back(stem);
    }
    json summary = {{"case", to_string(opt.kind)}, {"window", opt.window}, {"split", opt.split},
                    {"start", first.str()},        {"end", last.str()},     {"months", months_between(first, last)},
                    {"datasets", listing}};
    const auto summary_path = out / ("prepared_" + std::string(to_string(opt.kind)) + ".json");
    write_json(summary_path, summary);
    manifest.outputs.push_back(summary_path);
    manifest.config = {{"case", to_string(opt.kind)}, {"window", opt.window}, {"split", opt.split}};
    manifest.write(out / ("manifest_prepare_" + std::string(to_string(opt.kind)) + ".json"));
    return prepared;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    fs::path data;
    fs::path out = "reports";
    nn::Architecture arch = nn::Architecture::CnnBilstmAm;
    std::vector<int> regions{1, 2, 3, 4, 5, 6, 7, 8, 9};
    SeriesCase kind = SeriesCase::Count;
    TrainConfig config;
    nn::ModelSpec spec;  // window is taken from the prepared data
    std::size_t jobs = 1;
};

inline json config_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},       {"batch_size", c.batch_size}, {"lr_start", c.lr_start},
            {"lr_end", c.lr_end},       {"repeats", c.repeats},       {"seed", c.seed},
            {"beta1", c.beta1},         {"beta2", c.beta2},           {"adam_epsilon", c.adam_epsilon}};
}

/// Applies the keys present in a config file on top of `opt`. Unknown keys are
/// rejected so that typos do not silently fall back to defaults.
inline void apply_config_file(const json& cfg, TrainOptions& opt) {
    if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
    static const std::vector<std::string> known{"epochs", "batch_size", "lr_start", "lr_end", "repeats", "seed",
                                                "beta1", "beta2", "adam_epsilon", "arch", "dropout", "combine",
                                                "pool_stride", "layers", "jobs", "case"};
    for (const auto& [key, value] : cfg.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        auto& c = opt.config;
        c.epochs = cfg.value("epochs", c.epochs);
        c.batch_size = cfg.value("batch_size", c.batch_size);
        c.lr_start = cfg.value("lr_start", c.lr_start);
        c.lr_end = cfg.value("lr_end", c.lr_end);
        c.repeats = cfg.value("repeats", c.repeats);
        c.seed = cfg.value("seed", c.seed);
        c.beta1 = cfg.value("beta1", c.beta1);
        c.beta2 = cfg.value("beta2", c.beta2);
        c.adam_epsilon = cfg.value("adam_epsilon", c.adam_epsilon);
        if (cfg.contains("arch")) opt.arch = nn::parse_architecture(cfg["arch"].get<std::string>());
        if (cfg.contains("case")) opt.kind = parse_series_case(cfg["case"].get<std::string>());
        opt.spec.dropout = cfg.value("dropout", opt.spec.dropout);
        if (cfg.contains("combine")) opt.spec.combine = nn::parse_combine(cfg["combine"].get<std::string>());
        opt.spec.pool_stride = cfg.value("pool_stride", opt.spec.pool_stride);
        if (cfg.contains("layers")) opt.spec.layers = cfg["layers"].get<nn::LayerTable>();
        opt.jobs = cfg.value("jobs", opt.jobs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

/// Defaults, then the config file, then QUAKECAST_SEED when the file sets no
/// seed. Command-line flags are applied by the caller afterwards.
inline TrainOptions resolve_train_options(const std::optional<fs::path>& config_file, const char* env_seed) {
    TrainOptions opt;
    json cfg = json::object();
    if (config_file) cfg = read_json(*config_file);
    apply_config_file(cfg, opt);
    if (!cfg.contains("seed") && env_seed && *env_seed) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env_seed, &end, 10);
        if (*end != '\0' || env_seed[0] == '-') throw ConfigError(std::string("invalid QUAKECAST_SEED '") + env_seed + "'");
        opt.config.seed = v;
    }
    return opt;
}

struct RegionReport {
    int region = 0;
    fs::path dir;
    ProtocolReport report;
};

inline std::string region_dir_name(int region, SeriesCase kind) { return dataset_stem(region, kind); }

inline json metric_summary_json(const MetricSummary& m) { return {{"mean", m.mean}, {"std", m.stddev}}; }

/// Trains one region and writes its report directory.
inline RegionReport train_region(const TrainOptions& opt, int region) {
    const PreparedSeries data = load_prepared(opt.data, region, opt.kind);
    nn::ModelSpec spec = opt.spec;
    spec.architecture = opt.arch;
    spec.window = data.window;
    spec.validate();
    const auto train_ds = data.train_windows();
    const auto test_ds = data.test_windows();

    const fs::path dir = opt.out / std::string(nn::to_string(opt.arch)) / region_dir_name(region, opt.kind);
    ensure_dir(dir);
    const std::string case_name(to_string(opt.kind));

    json runs = json::array();
    auto on_run = [&](const RunResult& r, nn::Model& model) {
        const std::string prefix = "run_" + std::to_string(r.run);
        {
            auto out = open_output(dir / (prefix + "_log.csv"));
            csv::write_row(out, {"epoch", "lr", "train_loss"});
            for (const auto& e : r.log) {
                csv::write_row(out, {std::to_string(e.epoch), csv::format_double(e.lr), csv::format_double(e.train_loss)});
            }
        }
        {
            auto out = open_output(dir / (prefix + "_predictions.csv"));
            csv::write_row(out, {"month", "actual", "predicted"});
            for (std::size_t i = 0; i < r.predictions.size(); ++i) {
                csv::write_row(out, {data.month_at(data.train_months + i).str(), csv::format_double(r.targets[i]),
                                     csv::format_double(r.predictions[i])});
            }
        }
        model.save_checkpoint(dir / (prefix + "_checkpoint.json"));
        const auto raw = evaluate(invert_scaler(r.targets, data.scaler), invert_scaler(r.predictions, data.scaler),
                                  MetricSpace::Raw);
        runs.push_back({{"run", r.run},
                        {"seed", r.seed},
                        {"final_train_loss", r.final_train_loss},
                        {"rmse", r.test.rmse},
                        {"mae", r.test.mae},
                        {"r2", r.test.r2},
                        {"raw", {{"rmse", raw.rmse}, {"mae", raw.mae}, {"r2", raw.r2}}}});
    };
    ProtocolReport report = train_protocol(spec, train_ds, test_ds, opt.config, on_run);

    {
        auto out = open_output(dir / "runs.csv");
        csv::write_row(out, {"region", "case", "run", "rmse", "mae", "r2"});
        for (const auto& r : report.runs) {
            csv::write_row(out, {std::to_string(region), case_name, std::to_string(r.run), csv::format_double(r.test.rmse),
                                 csv::format_double(r.test.mae), csv::format_double(r.test.r2)});
        }
    }
    write_json(dir / "spec.json", json(spec));
    json j;
    j["arch"] = nn::to_string(opt.arch);
    j["region"] = region;
    j["case"] = case_name;
    j["data"] = opt.data.string();
    j["space"] = to_string(MetricSpace::Scaled);
    j["window"] = spec.window;
    j["dropout"] = spec.dropout;
    j["combine"] = nn::to_string(spec.combine);
    j["spec"] = spec;
    j["config"] = config_json(opt.config);
    j["train_months"] = data.train_months;
    j["test_months"] = data.test_months();
    j["test_start"] = data.month_at(data.train_months).str();
    j["scaler"] = {{"min", data.scaler.min}, {"max", data.scaler.max}};
    j["parameters"] = nn::Model::build(spec, 0).count_parameters();
    j["metrics"] = {{"rmse", metric_summary_json(report.rmse)},
                    {"mae", metric_summary_json(report.mae)},
                    {"r2", metric_summary_json(report.r2)}};
    j["runs"] = runs;
    write_json(dir / "report.json", j);
    return {region, dir, std::move(report)};
}

/// Trains every requested region, fanning out over `jobs` worker threads.
/// Each region owns its model, RNG and dataset, so outputs do not depend on
/// the number of workers.
inline std::vector<RegionReport> cmd_train(const TrainOptions& opt) {
    opt.config.validate();
    if (opt.regions.empty()) throw ConfigError("no regions selected");
    for (int r : opt.regions) {
        if (r < 1 || r > 9) throw ConfigError("region must be 1..9 or all, got " + std::to_string(r));
    }
    RunManifest manifest{"train"};
    for (int r : opt.regions) {
        const auto stem = dataset_stem(r, opt.kind);
        for (const char* ext : {".json", ".csv"}) {
            const auto path = opt.data / (stem + ext);
            if (!fs::exists(path)) throw IoError("missing prepared dataset " + path.string());
            manifest.inputs.push_back(path);
        }
    }

    std::vector<std::optional<RegionReport>> results(opt.regions.size());
    std::vector<std::exception_ptr> errors(opt.regions.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < opt.regions.size(); k = next++) {
            try {
                results[k] = train_region(opt, opt.regions[k]);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(opt.jobs, 1, opt.regions.size());
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<RegionReport> out;
    json walls = json::object();
    for (auto& r : results) {
        for (const char* f : {"report.json", "runs.csv", "spec.json"}) manifest.outputs.push_back(r->dir / f);
        json w = json::array();
        for (const auto& run : r->report.runs) w.push_back(run.wall_seconds);
        walls[std::to_string(r->region)] = w;
        out.push_back(std::move(*r));
    }
    manifest.config = {{"arch", nn::to_string(opt.arch)}, {"case", to_string(opt.kind)}, {"regions", opt.regions},
                       {"train", config_json(opt.config)},     {"spec", opt.spec},            {"jobs", opt.jobs},
                       {"wall_seconds", walls}};
    const fs::path arch_dir = opt.out / std::string(nn::to_string(opt.arch));
    manifest.write(arch_dir / ("manifest_" + std::string(to_string(opt.kind)) + ".json"));
    return out;
}

// ---------------------------------------------------------------- evaluate / export

/// Report directories (those holding report.json) below `root`, sorted.
inline std::vector<fs::path> find_reports(const fs::path& root) {
    if (!fs::is_directory(root)) throw IoError("report directory " + root.string() + " does not exist");
    std::vector<fs::path> dirs;
    if (fs::exists(root / "report.json")) dirs.push_back(root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_directory() && fs::exists(entry.path() / "report.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
    if (dirs.empty()) throw IoError("no reports found under " + root.string());
    return dirs;
}

struct RunEvaluation {
    fs::path dir;
    std::size_t run = 0;
    EvalReport metrics;
    std::vector<double> predictions;
    bool matches_report = false;
};

inline PreparedSeries data_for_report(const json& report, const std::optional<fs::path>& data_override) {
    const fs::path data = data_override ? *data_override : fs::path(report.at("data").get<std::string>());
    return load_prepared(data, report.at("region").get<int>(), parse_series_case(report.at("case").get<std::string>()));
}

/// Re-runs every saved checkpoint on its test split and compares the metrics
/// with those recorded at training time. Writes evaluation.json per report.
inline std::vector<RunEvaluation> cmd_evaluate(const fs::path& reports,
                                               const std::optional<fs::path>& data_override = std::nullopt) {
    std::vector<RunEvaluation> out;
    for (const auto& dir : find_reports(reports)) {
        const json report = read_json(dir / "report.json");
        const auto data = data_for_report(report, data_override);
        const auto test = data.test_windows();
        json runs = json::array();
        for (const auto& recorded : report.at("runs")) {
            RunEvaluation ev;
            ev.dir = dir;
            ev.run = recorded.at("run").get<std::size_t>();
            auto model = nn::Model::from_checkpoint(dir / ("run_" + std::to_string(ev.run) + "_checkpoint.json"));
            ev.predictions = predict(model, test);
            ev.metrics = evaluate(test.targets, ev.predictions);
            auto same = [](const json& v, double x) { return v.is_null() ? std::isnan(x) : v.get<double>() == x; };
            ev.matches_report = same(recorded.at("rmse"), ev.metrics.rmse) && same(recorded.at("mae"), ev.metrics.mae) &&
                                same(recorded.at("r2"), ev.metrics.r2);
            runs.push_back({{"run", ev.run},
                            {"rmse", ev.metrics.rmse},
                            {"mae", ev.metrics.mae},
                            {"r2", ev.metrics.r2},
                            {"matches_report", ev.matches_report}});
            out.push_back(std::move(ev));
        }
        write_json(dir / "evaluation.json", {{"runs", runs}, {"space", to_string(MetricSpace::Scaled)}});
    }
    return out;
}

struct ExportSummary {
    std::vector<fs::path> files;
    std::size_t rows = 0;  // prediction rows per region/case
};

/// Writes plots/region_<N>_<case>/pred_vs_actual.csv with one predicted column
/// per architecture (mean over runs) and, when an attention model is present,
/// attention.csv with the first run's weights per test sample.
inline ExportSummary cmd_export_plot(const fs::path& reports, const fs::path& out,
                                     const std::optional<fs::path>& data_override = std::nullopt) {
    struct Column {
        nn::Architecture arch;
        fs::path dir;
        json report;
    };
    std::map<std::string, std::vector<Column>> groups;
    for (const auto& dir : find_reports(reports)) {
        json report = read_json(dir / "report.json");
        const std::string key = region_dir_name(report.at("region").get<int>(),
                                                parse_series_case(report.at("case").get<std::string>()));
        groups[key].push_back({nn::parse_architecture(report.at("arch").get<std::string>()), dir, std::move(report)});
    }
    ExportSummary summary;
    for (auto& [key, cols] : groups) {
        std::sort(cols.begin(), cols.end(), [](const Column& a, const Column& b) { return a.arch < b.arch; });
        for (std::size_t i = 1; i < cols.size(); ++i) {
            if (cols[i].arch == cols[i - 1].arch) {
                throw UsageError("two " + std::string(nn::to_string(cols[i].arch)) + " reports for " + key + ": " +
                                 cols[i - 1].dir.string() + ", " + cols[i].dir.string());
            }
        }
        const auto data = data_for_report(cols.front().report, data_override);
        const auto test = data.test_windows();
        std::vector<std::vector<double>> predicted;
        for (const auto& c : cols) {
            std::vector<double> mean(test.size(), 0.0);
            const auto& runs = c.report.at("runs");
            for (const auto& run : runs) {
                std::ifstream in(c.dir / ("run_" + std::to_string(run.at("run").get<std::size_t>()) + "_predictions.csv"));
                if (!in) throw IoError("missing predictions in " + c.dir.string());
                csv::Reader reader(in);
                std::vector<std::string> row;
                reader.next(row);
                std::size_t i = 0;
                while (reader.next(row)) {
                    const auto v = row.size() == 3 ? csv::parse_double(row[2]) : std::nullopt;
                    if (!v || i >= mean.size()) throw IoError("malformed predictions in " + c.dir.string());
                    mean[i++] += *v / static_cast<double>(runs.size());
                }
                if (i != mean.size()) throw IoError("prediction count mismatch in " + c.dir.string());
            }
            predicted.push_back(std::move(mean));
        }

        const fs::path dir = out / key;
        ensure_dir(dir);
        {
            const auto path = dir / "pred_vs_actual.csv";
            auto f = open_output(path);
            std::vector<std::string> header{"month", "actual"};
            for (const auto& c : cols) header.emplace_back(nn::to_string(c.arch));
            csv::write_row(f, header);
            for (std::size_t i = 0; i < test.size(); ++i) {
                std::vector<std::string> row{data.month_at(data.train_months + i).str(), csv::format_double(test.targets[i])};
                for (const auto& p : predicted) row.push_back(csv::format_double(p[i]));
                csv::write_row(f, row);
            }
            summary.files.push_back(path);
            summary.rows = test.size();
        }
        for (const auto& c : cols) {
            if (c.arch != nn::Architecture::CnnBilstmAm) continue;
            auto model = nn::Model::from_checkpoint(c.dir / "run_0_checkpoint.json");
            const auto path = dir / "attention.csv";
            auto f = open_output(path);
            csv::write_row(f, {"sample", "month", "timestep", "weight"});
            std::vector<std::size_t> idx(test.size());
            std::iota(idx.begin(), idx.end(), 0);
            const auto o = model.forward_full(gather_inputs(test, idx));
            const std::size_t steps = o.attention.extent(1);
            for (std::size_t s = 0; s < test.size(); ++s) {
                for (std::size_t t = 0; t < steps; ++t) {
                    csv::write_row(f, {std::to_string(s), data.month_at(data.train_months + s).str(), std::to_string(t),
                                       csv::format_double(o.attention.data()[s * steps + t])});
                }
            }
            summary.files.push_back(path);
        }
    }
    return summary;
}

}  // namespace quakecast
