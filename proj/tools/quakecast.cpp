// SPDX-License-Identifier: Apache-2.0
// Command-line front end: ingest, prepare, train, evaluate, export-plot.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "quakecast/workflow.hpp"

namespace qc = quakecast;

namespace {

std::vector<int> parse_regions(const std::string& text) {
    if (text == "all") return {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t comma = std::min(text.find(',', pos), text.size());
        const std::string part = text.substr(pos, comma - pos);
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::logic_error&) {
            throw qc::ConfigError("invalid region '" + part + "' (expected 1..9, a comma list, or all)");
        }
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regional monthly earthquake forecasting with CNN-BiLSTM-attention models"};
    app.set_version_flag("--version", qc::kToolVersion);
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Clean, filter and region-tag an earthquake catalog CSV");
    std::string catalog, ingest_out, bbox = "23,45,75,119", start, end;
    double min_mag = 3.5;
    ingest->add_option("--catalog", catalog, "Catalog CSV (time, latitude, longitude, depth, mag)")->required();
    ingest->add_option("--out", ingest_out, "Output directory")->required();
    ingest->add_option("--min-mag", min_mag, "Minimum magnitude kept")->capture_default_str();
    ingest->add_option("--bbox", bbox, "lat_min,lat_max,lon_min,lon_max")->capture_default_str();
    ingest->add_option("--start", start, "First instant kept (default 1966-01-15T00:00:00Z)");
    ingest->add_option("--end", end, "Last instant kept (default 2021-05-22T23:59:59Z)");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Build per-region monthly datasets");
    qc::PrepareOptions prep;
    std::string events_dir, prep_out, prep_case = "count";
    prepare->add_option("--events", events_dir, "Directory written by ingest")->required();
    prepare->add_option("--case", prep_case, "count or maxmag")->capture_default_str();
    prepare->add_option("--window", prep.window, "Input window in months")->capture_default_str();
    prepare->add_option("--split", prep.split, "Training fraction")->capture_default_str();
    prepare->add_option("--out", prep_out, "Output directory (default: the events directory)");

    // train
    auto* train = app.add_subcommand("train", "Train models on prepared datasets");
    std::string data_dir, train_out, config_file;
    std::optional<std::string> arch, region, train_case, combine;
    std::optional<std::size_t> repeats, epochs, jobs, batch;
    std::optional<std::uint64_t> seed;
    std::optional<double> dropout;
    train->add_option("--data", data_dir, "Directory written by prepare")->required();
    train->add_option("--out", train_out, "Report root directory (default: reports)");
    train->add_option("--config", config_file, "JSON config file");
    train->add_option("--arch", arch, "cnn-bilstm-am, cnn-bilstm, cnn, lstm or mlp");
    train->add_option("--region", region, "1..9, a comma list, or all");
    train->add_option("--case", train_case, "count or maxmag");
    train->add_option("--repeats", repeats, "Independent runs per region");
    train->add_option("--seed", seed, "Base seed; run i uses seed + i");
    train->add_option("--epochs", epochs, "Training epochs");
    train->add_option("--batch-size", batch, "Mini-batch size");
    train->add_option("--dropout", dropout, "Dropout rate after recurrent layers");
    train->add_option("--combine", combine, "BiLSTM direction merge: sum or concat");
    train->add_option("--jobs", jobs, "Regions trained in parallel");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Re-score saved checkpoints against their reports");
    std::string eval_reports, eval_data;
    evaluate->add_option("--report", eval_reports, "Report directory")->required();
    evaluate->add_option("--data", eval_data, "Prepared data directory (default: the one recorded in the report)");

    // export-plot
    auto* plot = app.add_subcommand("export-plot", "Write prediction and attention CSVs for plotting");
    std::string plot_reports, plot_out = "plots", plot_data;
    plot->add_option("--report", plot_reports, "Report directory")->required();
    plot->add_option("--out", plot_out, "Output directory")->capture_default_str();
    plot->add_option("--data", plot_data, "Prepared data directory (default: the one recorded in the report)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            qc::IngestOptions opt;
            opt.catalog = catalog;
            opt.out = ingest_out;
            opt.min_magnitude = min_mag;
            opt.grid = qc::parse_bbox(bbox);
            if (!start.empty()) opt.range.start = qc::parse_time_or_throw(start, "--start");
            if (!end.empty()) opt.range.end = qc::parse_time_or_throw(end, "--end");
            const auto s = qc::cmd_ingest(opt);
            std::cout << "rows " << s.rows << ", rejected " << s.rejected << ", duplicates " << s.duplicates
                      << ", filtered " << s.filtered_out << ", kept " << s.kept << '\n';
        } else if (*prepare) {
            prep.events_dir = events_dir;
            prep.out = prep_out;
            prep.kind = qc::parse_series_case(prep_case);
            const auto series = qc::cmd_prepare(prep);
            for (const auto& p : series) {
                std::cout << "region " << p.region.index << ": " << p.train_months << " train / " << p.test_months()
                          << " test months\n";
            }
        } else if (*train) {
            std::optional<qc::fs::path> cfg;
            if (!config_file.empty()) cfg = config_file;
            qc::TrainOptions opt = qc::resolve_train_options(cfg, std::getenv("QUAKECAST_SEED"));
            opt.data = data_dir;
            if (!train_out.empty()) opt.out = train_out;
            if (arch) opt.arch = qc::nn::parse_architecture(*arch);
            if (region) opt.regions = parse_regions(*region);
            if (train_case) opt.kind = qc::parse_series_case(*train_case);
            if (repeats) opt.config.repeats = *repeats;
            if (seed) opt.config.seed = *seed;
            if (epochs) opt.config.epochs = *epochs;
            if (batch) opt.config.batch_size = *batch;
            if (dropout) opt.spec.dropout = *dropout;
            if (combine) opt.spec.combine = qc::nn::parse_combine(*combine);
            if (jobs) opt.jobs = *jobs;
            for (const auto& r : qc::cmd_train(opt)) {
                std::cout << "region " << r.region << ": rmse " << r.report.rmse.mean << " mae " << r.report.mae.mean
                          << " r2 " << r.report.r2.mean << "  -> " << r.dir.string() << '\n';
            }
        } else if (*evaluate) {
            std::optional<qc::fs::path> data;
            if (!eval_data.empty()) data = eval_data;
            bool all_match = true;
            for (const auto& e : qc::cmd_evaluate(eval_reports, data)) {
                std::cout << e.dir.string() << " run " << e.run << ": rmse " << e.metrics.rmse << " mae "
                          << e.metrics.mae << " r2 " << e.metrics.r2 << (e.matches_report ? "" : "  (differs from report)")
                          << '\n';
                all_match = all_match && e.matches_report;
            }
            if (!all_match) {
                std::cerr << "error: re-evaluated metrics differ from the recorded reports\n";
                return 1;
            }
        } else if (*plot) {
            std::optional<qc::fs::path> data;
            if (!plot_data.empty()) data = plot_data;
            const auto s = qc::cmd_export_plot(plot_reports, plot_out, data);
            for (const auto& f : s.files) std::cout << f.string() << '\n';
        }
    } catch (const qc::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const qc::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
