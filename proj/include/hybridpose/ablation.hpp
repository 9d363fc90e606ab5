#pragma once

// Loss-weight ablation: train one network per (weight row, seed), report the
// median final validation mean-MAE per row and flag the lowest.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "hybridpose/errors.hpp"
#include "hybridpose/loss.hpp"
#include "hybridpose/synth.hpp"
#include "hybridpose/text_io.hpp"
#include "hybridpose/tinynet.hpp"

namespace hybridpose {

/// Classification-weight rows (alpha fixed at 2), then the regression-weight
/// rows not already present (beta fixed at 7,5,3,1,1).
inline std::vector<LossWeights> default_ablation_grid() {
    std::vector<LossWeights> grid{
        {2, {1, 0, 0, 0, 0}}, {2, {3, 1, 1, 1, 1}}, {2, {5, 3, 1, 1, 1}},
        {2, {7, 5, 3, 1, 1}}, {2, {9, 7, 5, 3, 1}},
    };
    for (double alpha : {0.1, 1.0, 2.0, 4.0}) {
        LossWeights w{alpha, {7, 5, 3, 1, 1}};
        if (std::find(grid.begin(), grid.end(), w) == grid.end()) grid.push_back(w);
    }
    return grid;
}

struct AblationSettings {
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    std::vector<std::size_t> hidden_dims{64, 64};
    BinHierarchy hierarchy = make_hierarchy();
    TrainOptions train;
    SynthConfig synth; // used when no fixed dataset is supplied; its seed is replaced per run
    std::size_t jobs = 1;
};

struct AblationRowResult {
    LossWeights weights;
    std::vector<double> seed_mae; // final validation mean-MAE per seed
    double median_mae = 0.0;
    bool best = false;
};

struct AblationReport {
    std::vector<AblationRowResult> rows;
    std::size_t best_index = 0;
};

inline double median(std::vector<double> values) {
    if (values.empty()) throw UsageError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

/// Seed k (0-based) uses base_seed + k for the network and, without `fixed_data`,
/// for the synthetic dataset as well. Results do not depend on `jobs`.
inline AblationReport run_ablation(const std::vector<LossWeights>& grid, const AblationSettings& settings,
                                   const std::optional<DatasetSplit>& fixed_data = std::nullopt) {
    if (grid.empty()) throw UsageError("ablation grid is empty");
    if (settings.seeds == 0) throw UsageError("ablation needs at least one seed");
    for (const auto& w : grid) {
        validate_weights(w, settings.hierarchy.size());
        if (!w.any_positive()) throw ConfigError("ablation row with all-zero weights");
    }

    std::vector<DatasetSplit> datasets;
    if (fixed_data) {
        datasets.push_back(*fixed_data);
    } else {
        for (std::size_t k = 0; k < settings.seeds; ++k) {
            SynthConfig cfg = settings.synth;
            cfg.seed = settings.base_seed + k;
            datasets.push_back(make_dataset(cfg));
        }
    }

    const std::size_t n_tasks = grid.size() * settings.seeds;
    std::vector<double> results(n_tasks, 0.0);
    std::vector<std::exception_ptr> errors(n_tasks);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < n_tasks; task = next++) {
            const std::size_t row = task / settings.seeds;
            const std::size_t k = task % settings.seeds;
            try {
                const DatasetSplit& data = datasets[fixed_data ? 0 : k];
                NetConfig cfg;
                cfg.input_dim = data.train.front().features.size();
                cfg.hidden_dims = settings.hidden_dims;
                cfg.hierarchy = settings.hierarchy;
                cfg.seed = settings.base_seed + k;
                const TrainResult r = train(cfg, data, grid[row], settings.train);
                results[task] = r.report.epochs.empty() ? evaluate(r.net, data.val, settings.train.loss.decode).mean_mae
                                                        : r.report.epochs.back().val.mean_mae;
            } catch (...) {
                errors[task] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(settings.jobs, 1, n_tasks);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    AblationReport report;
    for (std::size_t row = 0; row < grid.size(); ++row) {
        AblationRowResult r;
        r.weights = grid[row];
        r.seed_mae.assign(results.begin() + static_cast<std::ptrdiff_t>(row * settings.seeds),
                          results.begin() + static_cast<std::ptrdiff_t>((row + 1) * settings.seeds));
        r.median_mae = median(r.seed_mae);
        report.rows.push_back(std::move(r));
    }
    for (std::size_t row = 1; row < report.rows.size(); ++row) {
        if (report.rows[row].median_mae < report.rows[report.best_index].median_mae) report.best_index = row;
    }
    report.rows[report.best_index].best = true;
    return report;
}

inline std::string format_ablation_csv(const AblationReport& report) {
    if (report.rows.empty()) return {};
    const std::size_t n_betas = report.rows.front().weights.betas.size();
    const std::size_t n_seeds = report.rows.front().seed_mae.size();
    std::string out = "alpha";
    for (std::size_t i = 1; i <= n_betas; ++i) out += ",beta_" + std::to_string(i);
    out += ",median_mae";
    for (std::size_t k = 1; k <= n_seeds; ++k) out += ",mae_seed_" + std::to_string(k);
    out += ",best\n";
    for (const auto& r : report.rows) {
        out += format_double(r.weights.alpha);
        for (double b : r.weights.betas) out += ',' + format_double(b);
        out += ',' + format_double(r.median_mae);
        for (double m : r.seed_mae) out += ',' + format_double(m);
        out += r.best ? ",1\n" : ",0\n";
    }
    return out;
}

/// Human-readable grid: one row per weighting, best row marked with '*'.
inline std::string format_ablation_table(const AblationReport& report, int precision = 4) {
    if (report.rows.empty()) return {};
    const std::size_t n_betas = report.rows.front().weights.betas.size();
    std::vector<std::vector<std::string>> cells;
    std::vector<std::string> header{"alpha"};
    for (std::size_t i = 1; i <= n_betas; ++i) header.push_back("beta" + std::to_string(i));
    header.push_back("MAE");
    header.push_back("");
    cells.push_back(header);
    for (const auto& r : report.rows) {
        std::vector<std::string> line{format_double(r.weights.alpha)};
        for (double b : r.weights.betas) line.push_back(format_double(b));
        line.push_back(format_fixed(r.median_mae, precision));
        line.push_back(r.best ? "*" : "");
        cells.push_back(std::move(line));
    }
    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& line : cells) {
        for (std::size_t c = 0; c < line.size(); ++c) widths[c] = std::max(widths[c], line[c].size());
    }
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        std::string text;
        for (std::size_t c = 0; c < cells[i].size(); ++c) {
            text += cells[i][c];
            if (c + 1 < cells[i].size()) text += std::string(widths[c] - cells[i][c].size() + 2, ' ');
        }
        while (!text.empty() && text.back() == ' ') text.pop_back();
        out += text + '\n';
        if (i == 0) out += std::string(text.size(), '-') + '\n';
    }
    return out;
}

} // namespace hybridpose
