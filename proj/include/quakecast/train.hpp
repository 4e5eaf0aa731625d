// SPDX-License-Identifier: Apache-2.0
#pragma once

// Training: MSE loss, Adam with a per-epoch linear learning-rate decay,
// shuffled mini-batches and the repeated-run protocol.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "quakecast/autodiff.hpp"
#include "quakecast/error.hpp"
#include "quakecast/metrics.hpp"
#include "quakecast/model.hpp"
#include "quakecast/series.hpp"

namespace quakecast {

using ad::Tensor;

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 32;
    double lr_start = 0.001;
    double lr_end = 0.0001;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const {
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("batch size must be >= 2");
        if (!(lr_start >= lr_end && lr_end > 0.0)) throw ConfigError("learning rates need lr_start >= lr_end > 0");
        if (repeats < 1) throw ConfigError("repeats must be >= 1");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_epsilon > 0.0)) {
            throw ConfigError("invalid Adam constants");
        }
    }
};

/// Linear decay from lr_start at epoch 0 to lr_end at the final epoch.
inline double lr_schedule(std::size_t epoch, const TrainConfig& config) {
    if (config.epochs <= 1) return config.lr_start;
    const double frac = static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
    return config.lr_start * (1.0 - frac) + config.lr_end * frac;  // exact at both ends
}

inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.numel() != target.numel()) {
        throw DomainError("mse_loss: prediction " + ad::shape_str(pred.shape()) + " vs target " +
                          ad::shape_str(target.shape()));
    }
    if (pred.numel() == 0) throw DomainError("mse_loss on empty input");
    const Tensor t = target.shape() == pred.shape() ? target : ad::reshape(target, pred.shape());
    return ad::reduce_mean(ad::square(ad::sub(pred, t)));
}

// ---------------------------------------------------------------- Adam

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    std::uint64_t step = 0;
};

/// One Adam update over `params` using their accumulated gradients. A
/// parameter that received no gradient is treated as having a zero gradient.
inline void adam_step(const nn::ParameterList& params, AdamState& state, double lr, const TrainConfig& config) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.tensor.numel(), 0.0);
            state.v.emplace_back(p.tensor.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw UsageError("Adam state does not match the parameter list");
    for (const auto& p : params) {
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + p.name);
        }
    }
    ++state.step;
    const double b1 = config.beta1, b2 = config.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor theta = params[k].tensor;
        auto g = theta.grad();
        if (g.empty()) continue;
        auto w = theta.data_mut();
        auto& m = state.m[k];
        auto& v = state.v[k];
        if (m.size() != w.size()) throw UsageError("Adam state shape mismatch for " + params[k].name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            const double m_hat = m[i] / c1;
            const double v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

// ---------------------------------------------------------------- batching

inline Tensor gather_inputs(const WindowedDataset& ds, std::span<const std::size_t> idx) {
    std::vector<double> x;
    x.reserve(idx.size() * ds.window);
    for (auto i : idx) {
        auto row = ds.input(i);
        x.insert(x.end(), row.begin(), row.end());
    }
    return Tensor({idx.size(), ds.window}, std::move(x));
}

inline Tensor gather_targets(const WindowedDataset& ds, std::span<const std::size_t> idx) {
    std::vector<double> y;
    y.reserve(idx.size());
    for (auto i : idx) y.push_back(ds.targets[i]);
    return Tensor({idx.size(), 1}, std::move(y));
}

/// Batch boundaries over n samples. A trailing batch smaller than 2 is folded
/// into the previous one.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size) out.emplace_back(b, std::min(n, b + batch_size));
    if (out.size() > 1 && out.back().second - out.back().first < 2) {
        const auto tail = out.back();
        out.pop_back();
        out.back().second = tail.second;
    }
    return out;
}

/// Eval-mode predictions, processed in chunks of `chunk` samples.
inline std::vector<double> predict(nn::Model& model, const WindowedDataset& ds, std::size_t chunk = 64) {
    const nn::Mode saved = model.mode();
    model.set_mode(nn::Mode::Eval);
    std::vector<double> out;
    out.reserve(ds.size());
    std::vector<std::size_t> idx;
    for (std::size_t b = 0; b < ds.size(); b += chunk) {
        idx.resize(std::min(ds.size(), b + chunk) - b);
        std::iota(idx.begin(), idx.end(), b);
        const Tensor y = model.forward(gather_inputs(ds, idx));
        out.insert(out.end(), y.data().begin(), y.data().end());
    }
    model.set_mode(saved);
    return out;
}

// ---------------------------------------------------------------- runs

struct EpochLog {
    std::size_t epoch;
    double lr;
    double train_loss;
};

struct RunResult {
    std::size_t run = 0;
    std::uint64_t seed = 0;
    double final_train_loss = 0.0;
    EvalReport test;
    std::vector<double> predictions;
    std::vector<double> targets;
    std::vector<EpochLog> log;
    double wall_seconds = 0.0;
};

/// Called after every epoch; returning false ends training early.
using EpochObserver = std::function<bool(const EpochLog&, nn::Model&)>;

inline RunResult train_once(nn::Model& model, const WindowedDataset& train, const WindowedDataset& test,
                            const TrainConfig& config, std::uint64_t run_seed,
                            const EpochObserver& observer = {}) {
    config.validate();
    if (train.window != model.spec().window || (test.size() && test.window != model.spec().window)) {
        throw ConfigError("dataset window " + std::to_string(train.window) + " does not match model window " +
                          std::to_string(model.spec().window));
    }
    if (train.size() < 2) throw ConfigError("training needs at least 2 samples");
    const auto t0 = std::chrono::steady_clock::now();

    std::seed_seq shuffle_seq{run_seed, std::uint64_t{0x5f}};
    nn::Rng shuffle_rng(shuffle_seq);
    const auto params = model.parameters();
    AdamState adam;
    RunResult result;
    result.seed = run_seed;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        model.set_mode(nn::Mode::Train);
        const double lr = lr_schedule(epoch, config);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t batch_no = 0;
        for (const auto& [b, e] : batch_ranges(order.size(), config.batch_size)) {
            const std::span<const std::size_t> idx(order.data() + b, e - b);
            model.zero_grad();
            const Tensor loss = mse_loss(model.forward(gather_inputs(train, idx)), gather_targets(train, idx));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_no));
            }
            loss.backward();
            adam_step(params, adam, lr, config);
            loss_sum += value * static_cast<double>(e - b);
            ++batch_no;
        }
        const EpochLog entry{epoch, lr, loss_sum / static_cast<double>(train.size())};
        result.log.push_back(entry);
        if (observer && !observer(entry, model)) break;
    }

    model.set_mode(nn::Mode::Eval);
    result.final_train_loss = result.log.back().train_loss;
    if (test.size() > 0) {
        result.predictions = predict(model, test);
        result.targets = test.targets;
        result.test = evaluate(result.targets, result.predictions);
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single run
};

inline MetricSummary summarize(std::span<const double> xs) {
    MetricSummary s;
    if (xs.empty()) return s;
    s.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

struct ProtocolReport {
    nn::ModelSpec spec;
    TrainConfig config;
    std::vector<RunResult> runs;
    MetricSummary rmse;
    MetricSummary mae;
    MetricSummary r2;
};

/// Receives each finished run together with its trained model.
using RunObserver = std::function<void(const RunResult&, nn::Model&)>;

/// Trains `config.repeats` fresh models with seeds config.seed + i and
/// aggregates their test metrics.
inline ProtocolReport train_protocol(const nn::ModelSpec& spec, const WindowedDataset& train,
                                     const WindowedDataset& test, const TrainConfig& config,
                                     const RunObserver& on_run = {}) {
    config.validate();
    ProtocolReport report{spec, config, {}, {}, {}, {}};
    std::vector<double> rmses, maes, r2s;
    for (std::size_t i = 0; i < config.repeats; ++i) {
        const std::uint64_t seed = config.seed + i;
        nn::Model model = nn::Model::build(spec, seed);
        RunResult r = train_once(model, train, test, config, seed);
        r.run = i;
        if (on_run) on_run(r, model);
        rmses.push_back(r.test.rmse);
        maes.push_back(r.test.mae);
        r2s.push_back(r.test.r2);
        report.runs.push_back(std::move(r));
    }
    report.rmse = summarize(rmses);
    report.mae = summarize(maes);
    report.r2 = summarize(r2s);
    return report;
}

}  // namespace quakecast
