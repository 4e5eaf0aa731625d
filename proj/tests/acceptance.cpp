// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed here and not configurable.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "cli_support.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"
#include "quakecast/metrics.hpp"
#include "quakecast/series.hpp"
#include "quakecast/train.hpp"

using namespace quakecast;
using ad::Tensor;
using nn::Architecture;
using qtest::random_tensor;

namespace {

constexpr double kLayerGradTol = 1e-4;
constexpr double kModelGradTol = 1e-3;
constexpr int kGradSeeds = 100;
constexpr double kGradSeconds = 120.0;
constexpr double kOracleTol = 1e-12;
constexpr int kOracleTrials = 1000;
constexpr double kBnMeanTol = 1e-8;
constexpr double kBnVarTol = 1e-6;
constexpr double kBnFixtureTol = 1e-4;
constexpr double kAttnSumTol = 1e-12;
constexpr double kMetricTol = 1e-12;
constexpr double kOverfitMse = 1e-3;
constexpr std::size_t kOverfitEpochs = 500;
constexpr double kOverfitSeconds = 300.0;
constexpr double kTrendSlack = 0.05;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ------------------------------------------------------------------ criteria

void gradients(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::pair<const char*, double (*)(std::uint64_t)>> layers{
        {"conv1d", qtest::conv_gradient_error},           {"maxpool", qtest::maxpool_gradient_error},
        {"batchnorm", qtest::batchnorm_gradient_error},   {"dense", qtest::dense_gradient_error},
        {"dropout-eval", qtest::dropout_eval_gradient_error}, {"lstm-cell", qtest::lstm_cell_gradient_error},
        {"bilstm", qtest::bilstm_gradient_error},         {"attention", qtest::attention_gradient_error}};
    for (const auto& [name, fn] : layers) {
        double worst = 0.0;
        for (int s = 0; s < kGradSeeds; ++s) worst = std::max(worst, fn(static_cast<std::uint64_t>(s)));
        o.check(worst <= kLayerGradTol, name);
        o.detail << name << " " << worst << ", ";
    }
    double worst = 0.0;
    for (int s = 0; s < kGradSeeds; ++s) worst = std::max(worst, qtest::model_gradient_error(static_cast<std::uint64_t>(s)));
    o.check(worst <= kModelGradTol, "model");
    const double secs = seconds_since(t0);
    o.check(secs < kGradSeconds, "runtime");
    o.detail << "model " << worst << " over " << kGradSeeds << " seeds in " << secs << " s";
}

void transcription_oracles(Outcome& o) {
    qtest::Rng rng(2024);
    double lstm_err = 0.0, attn_err = 0.0;
    for (int trial = 0; trial < kOracleTrials; ++trial) {
        const std::size_t in = 1 + trial % 4, hid = 1 + (trial / 4) % 5;
        nn::LSTMCell cell(in, hid, rng);
        cell.b_input = random_tensor({hid}, rng);
        cell.b_candidate = random_tensor({hid}, rng);
        cell.b_output = random_tensor({hid}, rng);
        const auto x = qtest::random_vector(in, rng, -2, 2);
        const auto h = qtest::random_vector(hid, rng);
        const auto c = qtest::random_vector(hid, rng, -2, 2);
        const auto [h1, c1] = nn::lstm_cell_step(Tensor({1, in}, x), Tensor({1, hid}, h), Tensor({1, hid}, c), cell);
        const auto want = qtest::lstm_step_oracle(cell, x, h, c);
        for (std::size_t k = 0; k < hid; ++k) {
            lstm_err = std::max({lstm_err, std::abs(h1[k] - want.h[k]), std::abs(c1[k] - want.c[k])});
        }

        const std::size_t time = 1 + trial % 7, width = 1 + (trial / 7) % 6;
        nn::AdditiveAttention att(width, rng);
        att.bias = random_tensor({1}, rng);
        const auto hs_t = random_tensor({1, time, width}, rng, -3, 3);
        std::vector<qtest::Vec> hs(time, qtest::Vec(width));
        for (std::size_t t = 0; t < time; ++t)
            for (std::size_t j = 0; j < width; ++j) hs[t][j] = hs_t[t * width + j];
        const auto got = nn::attention_forward(hs_t, att);
        const auto ref = qtest::attention_oracle(att, hs);
        for (std::size_t t = 0; t < time; ++t) attn_err = std::max(attn_err, std::abs(got.weights[t] - ref.weights[t]));
        for (std::size_t j = 0; j < width; ++j) attn_err = std::max(attn_err, std::abs(got.context[j] - ref.context[j]));
    }
    o.check(lstm_err <= kOracleTol, "lstm");
    o.check(attn_err <= kOracleTol, "attention");
    o.detail << "lstm max |diff| " << lstm_err << ", attention max |diff| " << attn_err << " over " << kOracleTrials
             << " inputs";
}

void batchnorm_statistics(Outcome& o) {
    qtest::Rng rng(7);
    double worst_mean = 0.0, worst_var = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t b = 4 + trial % 13, c = 1 + trial % 5, l = 1 + trial % 9;
        nn::BatchNorm bn(c);
        const auto x = random_tensor({b, c, l}, rng, -20, 20, false);
        const auto y = bn.forward(x, nn::Mode::Train);
        const double n = static_cast<double>(b * l);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double mean = 0.0, var = 0.0;
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t t = 0; t < l; ++t) mean += y[(i * c + ch) * l + t];
            mean /= n;
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t t = 0; t < l; ++t) var += std::pow(y[(i * c + ch) * l + t] - mean, 2);
            var /= n;
            worst_mean = std::max(worst_mean, std::abs(mean));
            worst_var = std::max(worst_var, std::abs(var - 1.0));
        }
    }
    nn::BatchNorm bn(1);
    const auto y = bn.forward(Tensor({3, 1}, {1, 2, 3}), nn::Mode::Train);
    const double fixture = std::max({std::abs(y[0] + 1.2247), std::abs(y[1]), std::abs(y[2] - 1.2247)});
    o.check(worst_mean <= kBnMeanTol, "mean");
    o.check(worst_var <= kBnVarTol, "variance");
    o.check(fixture <= kBnFixtureTol, "fixture");
    o.detail << "max |mean| " << worst_mean << ", max |var-1| " << worst_var << ", fixture error " << fixture;
}

void attention_invariants(Outcome& o) {
    qtest::Rng rng(11);
    double sum_err = 0.0, hull_excess = 0.0, singleton_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t b = 1 + trial % 3, time = 1 + trial % 9, hid = 1 + trial % 5;
        nn::AdditiveAttention att(hid, rng);
        att.weight = random_tensor({1, hid}, rng, -4, 4);
        att.bias = random_tensor({1}, rng, -2, 2);
        const auto h = random_tensor({b, time, hid}, rng, -10, 10);
        const auto out = nn::attention_forward(h, att);
        for (std::size_t n = 0; n < b; ++n) {
            double sum = 0.0;
            for (std::size_t t = 0; t < time; ++t) {
                sum += out.weights[n * time + t];
                if (!(out.weights[n * time + t] > 0.0)) hull_excess = INFINITY;
            }
            sum_err = std::max(sum_err, std::abs(sum - 1.0));
            for (std::size_t j = 0; j < hid; ++j) {
                double lo = INFINITY, hi = -INFINITY;
                for (std::size_t t = 0; t < time; ++t) {
                    lo = std::min(lo, h[(n * time + t) * hid + j]);
                    hi = std::max(hi, h[(n * time + t) * hid + j]);
                }
                const double c = out.context[n * hid + j];
                hull_excess = std::max({hull_excess, lo - c, c - hi});
            }
        }
        const auto one = random_tensor({b, 1, hid}, rng, -10, 10);
        const auto single = nn::attention_forward(one, att);
        for (std::size_t i = 0; i < b * hid; ++i) singleton_err = std::max(singleton_err, std::abs(single.context[i] - one[i]));
        for (std::size_t n = 0; n < b; ++n) singleton_err = std::max(singleton_err, std::abs(single.weights[n] - 1.0));
    }
    o.check(sum_err <= kAttnSumTol, "sum");
    o.check(hull_excess <= kAttnSumTol, "hull");
    o.check(singleton_err == 0.0, "singleton");
    o.detail << "max |sum-1| " << sum_err << ", hull excess " << std::max(hull_excess, 0.0) << ", singleton error "
             << singleton_err << " over 1000 cases";
}

void zoh_and_pipeline(Outcome& o) {
    o.check(zoh_impute(std::vector<double>{2, 0, 0, 5}) == std::vector<double>{2, 2, 2, 5}, "example");
    qtest::Rng rng(13);
    std::uniform_int_distribution<int> v(0, 3);
    bool idempotent = true;
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> s(1 + trial % 50);
        for (auto& x : s) x = v(rng) == 0 ? 0.0 : v(rng);
        const auto once = zoh_impute(s);
        idempotent = idempotent && zoh_impute(once) == once;
    }
    o.check(idempotent, "idempotence");

    MonthlySeries s{RegionId{1}, SeriesCase::Count, {2000, 1}, std::vector<double>(80, 0.0)};
    std::uniform_real_distribution<double> u(0, 9);
    for (std::size_t i = 0; i < s.values.size(); ++i) s.values[i] = i % 3 == 0 ? 0.0 : std::round(u(rng));
    const auto p = prepare_series(s, 12, 0.8);
    const std::vector<double> train(s.values.begin(), s.values.begin() + 64);
    const bool train_only = std::equal(p.imputed.begin(), p.imputed.begin() + 64, zoh_impute(train).begin()) &&
                            std::equal(p.imputed.begin() + 64, p.imputed.end(), s.values.begin() + 64);
    o.check(train_only, "zoh on train only");

    auto leaked = s;
    for (std::size_t i = 64; i < 80; ++i) leaked.values[i] = 1000.0 + static_cast<double>(i);
    const auto q = prepare_series(leaked, 12, 0.8);
    const bool no_leak = q.scaler == p.scaler &&
                         std::equal(p.scaled.begin(), p.scaled.begin() + 64, q.scaled.begin()) &&
                         p.scaler == fit_scaler(zoh_impute(train));
    o.check(no_leak, "scaler leakage");
    o.detail << "example, idempotence (1000 series), train-only imputation and scaler isolation checked";
}

void region_partition(Outcome& o) {
    const RegionGrid g;
    std::array<int, 9> hits{};
    int total = 0, outside_cell = 0;
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) {
            const double lat = 23.0 + 22.0 * i / 99.0, lon = 75.0 + 44.0 * j / 99.0;
            const int r = assign_region(lat, lon, g).index;
            if (r < 1 || r > 9) continue;
            ++hits[static_cast<std::size_t>(r - 1)];
            ++total;
            const auto [row, col] = g.cell_of(RegionId{r});
            if (lat < g.lat_edge(g.rows - 1 - row) || lat > g.lat_edge(g.rows - row) || lon < g.lon_edge(col) ||
                lon > g.lon_edge(col + 1))
                ++outside_cell;
        }
    const bool all_used = std::all_of(hits.begin(), hits.end(), [](int h) { return h > 0; });
    const auto range = default_time_range();
    const std::size_t months = months_between(YearMonth::of(range.start), YearMonth::of(range.end));
    o.check(total == 10000 && outside_cell == 0 && all_used, "lattice");
    o.check(months == 665, "month count");
    o.detail << total << "/10000 lattice points assigned, " << outside_cell << " outside their cell, T = " << months;
}

void metric_oracles(Outcome& o) {
    using V = std::vector<double>;
    const double e = std::abs(rmse(V{1, 2, 3}, V{1, 2, 4}) - std::sqrt(1.0 / 3.0));
    const double perfect = r_squared(V{1, 2, 4, 7}, V{1, 2, 4, 7});
    const double mean_pred = r_squared(V{1, 2, 4, 7}, V{3.5, 3.5, 3.5, 3.5});
    qtest::Rng rng(17);
    std::uniform_real_distribution<double> u(-5, 5);
    int violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + trial % 25;
        V y(n), p(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = u(rng);
            p[i] = u(rng);
        }
        if (rmse(y, p) < mae(y, p)) ++violations;
    }
    o.check(e <= kMetricTol, "rmse example");
    o.check(perfect == 1.0, "r2 perfect");
    o.check(std::abs(mean_pred) <= kMetricTol, "r2 mean predictor");
    o.check(violations == 0, "rmse >= mae");
    o.detail << "rmse error " << e << ", r2 perfect " << perfect << ", r2 mean " << mean_pred << ", " << violations
             << " rmse<mae violations in 10000 pairs";
}

void schedule_endpoints(Outcome& o) {
    const TrainConfig c;
    const double first = lr_schedule(0, c), last = lr_schedule(149, c);
    o.check(first == 0.001, "epoch 0");
    o.check(last == 0.0001, "epoch 149");
    char buf[96];
    std::snprintf(buf, sizeof buf, "lr(0) = %.17g, lr(149) = %.17g", first, last);
    o.detail << buf;
}

void overfit(Outcome& o) {
    std::vector<double> s(28);
    qtest::Rng rng(19);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 0.5 + 0.35 * std::sin(2.0 * M_PI * static_cast<double>(i) / 12.0) + noise(rng);
    const auto ds = make_windows(s, 12);
    TrainConfig cfg;
    cfg.epochs = kOverfitEpochs;
    cfg.repeats = 1;
    nn::Model model = nn::Model::build(nn::ModelSpec{}, 1);
    const auto t0 = std::chrono::steady_clock::now();
    double best = INFINITY;
    std::size_t reached = 0;
    const auto r = train_once(model, ds, WindowedDataset{}, cfg, 1, [&](const EpochLog& e, nn::Model& m) {
        const auto p = predict(m, ds);
        double mse = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) mse += (p[i] - ds.targets[i]) * (p[i] - ds.targets[i]);
        mse /= static_cast<double>(p.size());
        best = std::min(best, mse);
        if (mse <= kOverfitMse) {
            reached = e.epoch + 1;
            return false;
        }
        return true;
    });
    const double secs = seconds_since(t0);
    o.check(ds.size() == 16, "dataset size");
    o.check(reached > 0, "mse threshold");
    o.check(secs < kOverfitSeconds, "runtime");
    o.detail << ds.size() << " samples, train MSE " << best << (reached ? " at epoch " + std::to_string(reached) : " (not reached)")
             << ", last train-mode loss " << r.final_train_loss << ", " << secs << " s";
}

void determinism(Outcome& o) {
    namespace fs = std::filesystem;
    using qtest::quoted;
    const auto root = qtest::scratch_dir("acceptance_determinism");
    const fs::path data = root / "data";
    auto ok = [&](const qtest::CliResult& r, const std::string& step) {
        o.check(r.status == 0, step + ": " + r.output);
        return r.status == 0;
    };
    if (!ok(qtest::run_cli("ingest --catalog " + quoted(QC_FIXTURES "/synthetic_catalog.csv") + " --out " + quoted(data) +
                           " --start 2015-01-01T00:00:00Z --end 2020-12-31T23:59:59Z"),
            "ingest") ||
        !ok(qtest::run_cli("prepare --events " + quoted(data) + " --case count"), "prepare")) {
        return;
    }
    // default model and schedule on one region, plus a short pass over all nine
    const std::vector<std::string> invocations{"--region 1 --repeats 2 --seed 7",
                                               "--region all --repeats 2 --seed 7 --epochs 5"};
    std::size_t compared = 0, differing = 0;
    for (std::size_t k = 0; k < invocations.size(); ++k) {
        const fs::path a = root / ("a" + std::to_string(k)), b = root / ("b" + std::to_string(k));
        for (const auto& out : {a, b}) {
            if (!ok(qtest::run_cli("train --data " + quoted(data) + " --out " + quoted(out) + " " + invocations[k]), "train"))
                return;
        }
        for (const auto& entry : fs::recursive_directory_iterator(a)) {
            if (!entry.is_regular_file() || entry.path().filename().string().rfind("manifest", 0) == 0) continue;
            const auto rel = fs::relative(entry.path(), a);
            ++compared;
            if (qtest::slurp(entry.path()) != qtest::slurp(b / rel)) {
                ++differing;
                o.detail << "differs: " << rel.string() << "; ";
            }
        }
    }
    o.check(compared > 0 && differing == 0, "byte equality");
    o.detail << compared << " files compared across 2 x " << invocations.size() << " invocations, " << differing
             << " differ";
    fs::remove_all(root);
}

nn::LayerTable trend_layers() {
    nn::LayerTable t;
    t.convs = {{8, 5, 1}, {8, 3, 1}, {16, 3, 1}, {16, 3, 1}};
    t.recurrent = {16, 8};
    t.head = {16, 8, 1};
    return t;
}

void comparative_trend(Outcome& o) {
    constexpr std::size_t kPoints = 665, kRepeats = 10, kEpochs = 60;
    std::vector<double> s(kPoints);
    qtest::Rng rng(23);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (std::size_t i = 0; i < kPoints; ++i) {
        const double t = static_cast<double>(i);
        s[i] = std::sin(2.0 * M_PI * t / 12.0) + 0.5 * std::sin(2.0 * M_PI * t / 40.0) + noise(rng);
    }
    const std::size_t n_train = train_length(kPoints, 0.8);
    const auto scaler = fit_scaler(std::span<const double>(s).first(n_train));
    const auto scaled = apply_scaler(s, scaler);
    const auto train = make_windows(std::span<const double>(scaled).first(n_train), 12);
    const auto test = make_windows(std::span<const double>(scaled).subspan(n_train - 12), 12);

    TrainConfig cfg;
    cfg.epochs = kEpochs;
    cfg.repeats = kRepeats;
    cfg.seed = 100;
    std::map<Architecture, double> r2;
    for (auto arch : {Architecture::CnnBilstmAm, Architecture::CnnBilstm, Architecture::CnnOnly, Architecture::LstmOnly}) {
        nn::ModelSpec spec;
        spec.architecture = arch;
        spec.layers = trend_layers();
        r2[arch] = train_protocol(spec, train, test, cfg).r2.mean;
    }
    const double am = r2[Architecture::CnnBilstmAm], cb = r2[Architecture::CnnBilstm];
    const double single = std::max(r2[Architecture::CnnOnly], r2[Architecture::LstmOnly]);
    o.check(am >= cb - kTrendSlack, "am >= cnn-bilstm - slack");
    o.check(cb >= single - kTrendSlack, "cnn-bilstm >= max(cnn, lstm) - slack");
    o.detail << "mean test R2 over " << kRepeats << " repeats: am " << am << ", cnn-bilstm " << cb << ", cnn "
             << r2[Architecture::CnnOnly] << ", lstm " << r2[Architecture::LstmOnly] << " (slack " << kTrendSlack << ")";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"gradient-correctness", gradients},
        {"transcription-oracles", transcription_oracles},
        {"batchnorm-statistics", batchnorm_statistics},
        {"attention-invariants", attention_invariants},
        {"zoh-and-pipeline", zoh_and_pipeline},
        {"region-partition", region_partition},
        {"metric-oracles", metric_oracles},
        {"schedule-endpoints", schedule_endpoints},
        {"overfit-sanity", overfit},
        {"determinism", determinism},
        {"comparative-trend", comparative_trend},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Outcome o;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail.str() << " (" << seconds_since(t0)
                  << " s)" << std::endl;
        failed += o.pass ? 0 : 1;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
