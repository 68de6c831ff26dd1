#ifndef HVMGP_CAMPAIGN_HPP
#define HVMGP_CAMPAIGN_HPP

// Model training per method and Monte Carlo tracking campaigns over
// trajectories x noise levels x runs x methods.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "filter.hpp"
#include "hyperopt.hpp"
#include "simulator.hpp"

namespace hvmgp {

/// A trained measurement model for one method.
struct MethodModel {
    Method method = Method::HvM;
    ModelSpec spec;                          // GP methods only
    std::optional<Theta> theta;              // GP methods only
    std::optional<OptResult> report;         // GP methods only, when optimized
    std::shared_ptr<const TrainedGp> gp;     // GP methods only
    std::shared_ptr<const MeasurementModel> model;
};

inline ModelSpec range_model_spec(Method m, std::size_t references) {
    ModelSpec s;
    s.kernel = kernel_for(m);
    s.circles = references;
    s.outputs = references;
    s.multi_output = true;
    return s;
}

inline TrainingData to_training_data(const TrainingSet &ts) { return {ts.inputs, ts.obs}; }

/// Fits a GP method at given hyperparameters (no optimization).
inline MethodModel make_gp_model(Method m, const TrainingSet &ts, const std::vector<Vec2> &refs, const Theta &theta,
                                 const JitterPolicy &policy = {}) {
    MethodModel mm;
    mm.method = m;
    mm.spec = range_model_spec(m, refs.size());
    mm.theta = theta;
    mm.gp = std::make_shared<const TrainedGp>(fit_model(to_training_data(ts), mm.spec, theta, policy));
    mm.model = std::make_shared<GpMeasurementModel>(mm.gp, refs);
    return mm;
}

/// Trains one method on a training set: maximum marginal likelihood for GP
/// methods, residual Gaussian fit for the parametric baseline.
inline MethodModel train_method(Method m, const TrainingSet &ts, const std::vector<Vec2> &refs,
                                const OptimizeOptions &opt) {
    if (m == Method::Parametric) {
        MethodModel mm;
        mm.method = m;
        mm.model = std::make_shared<ParametricModel>(ParametricModel::fit(ts.positions, ts.obs, refs));
        return mm;
    }
    const ModelSpec spec = range_model_spec(m, refs.size());
    OptResult r = optimize(to_training_data(ts), spec, opt);
    MethodModel mm = make_gp_model(m, ts, refs, r.theta, opt.jitter);
    mm.report = std::move(r);
    return mm;
}

struct CampaignSpec {
    std::vector<TrajectoryKind> trajectories{TrajectoryKind::T1, TrajectoryKind::T2, TrajectoryKind::T3};
    std::vector<double> noise_levels{0.01, 0.03, 0.05};
    std::size_t runs = 100;
    std::vector<Method> methods = all_methods();
    std::uint64_t seed = 1;
    FilterOptions filter;
    std::size_t jobs = 1;
};

struct CampaignRow {
    std::string method;
    std::string trajectory;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    double rmse = 0.0;
    bool diverged = false;
};

/// Seeds of run `run` in cell (trajectory index, noise index). The
/// measurement seed is shared by all methods of the run.
inline std::uint64_t measurement_seed(std::uint64_t base, std::size_t traj, std::size_t noise, std::size_t run) {
    return derive_seed(base, {traj, noise, run, 0});
}
inline std::uint64_t filter_seed(std::uint64_t base, std::size_t traj, std::size_t noise, std::size_t run) {
    return derive_seed(base, {traj, noise, run, 1});
}

/// Looks up the model for (method, noise index).
using ModelLookup = std::function<const MeasurementModel &(Method, std::size_t noise_index)>;

/// Rows ordered by trajectory, noise level, run, then method. Runs may be
/// spread over `jobs` threads; output is identical for any job count.
inline std::vector<CampaignRow> campaign(const ScenarioConfig &base, const CampaignSpec &spec,
                                         const ModelLookup &models) {
    if (spec.runs < 1) throw std::invalid_argument("campaign needs at least one run");
    struct Task {
        std::size_t t, k, r, m;
    };
    std::vector<Task> tasks;
    for (std::size_t t = 0; t < spec.trajectories.size(); ++t)
        for (std::size_t k = 0; k < spec.noise_levels.size(); ++k)
            for (std::size_t r = 0; r < spec.runs; ++r)
                for (std::size_t m = 0; m < spec.methods.size(); ++m) tasks.push_back({t, k, r, m});

    std::vector<CampaignRow> rows(tasks.size());
    const auto run_task = [&](std::size_t i) {
        const Task &task = tasks[i];
        ScenarioConfig cfg = base;
        cfg.trajectory = spec.trajectories[task.t];
        cfg.noise_xi = spec.noise_levels[task.k];
        const Method method = spec.methods[task.m];
        const std::uint64_t ms = measurement_seed(spec.seed, task.t, task.k, task.r);
        CampaignRow &row = rows[i];
        row.method = to_string(method);
        row.trajectory = to_string(cfg.trajectory);
        row.noise_level = cfg.noise_xi;
        row.seed = ms;
        try {
            const TrackingResult tr = run_tracking(cfg, row.method, models(method, task.k), ms,
                                                   filter_seed(spec.seed, task.t, task.k, task.r), spec.filter);
            row.rmse = tr.rmse;
            row.diverged = tr.diverged;
        } catch (const std::exception &) {
            row.rmse = std::numeric_limits<double>::quiet_NaN();
            row.diverged = true;
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, spec.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_task(i);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t j = 0; j < jobs; ++j) {
            pool.emplace_back([&, j] {
                for (std::size_t i = j; i < tasks.size(); i += jobs) run_task(i);
            });
        }
        for (auto &th : pool) th.join();
    }
    return rows;
}

struct CellSummary {
    std::string method;
    std::string trajectory;
    double noise_level = 0.0;
    double median_rmse = 0.0;
    double divergence_fraction = 0.0;
    std::size_t runs = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Per-(method, trajectory, noise) medians and divergence fractions.
/// NaN RMSEs (failed runs) sort as +infinity.
inline std::vector<CellSummary> summarize(const std::vector<CampaignRow> &rows) {
    std::map<std::tuple<std::string, std::string, double>, std::pair<std::vector<double>, std::size_t>> cells;
    std::vector<std::tuple<std::string, std::string, double>> order;
    for (const auto &r : rows) {
        const auto key = std::make_tuple(r.trajectory, r.method, r.noise_level);
        auto [it, inserted] = cells.try_emplace(key);
        if (inserted) order.push_back(key);
        it->second.first.push_back(std::isnan(r.rmse) ? std::numeric_limits<double>::infinity() : r.rmse);
        it->second.second += r.diverged ? 1 : 0;
    }
    std::vector<CellSummary> out;
    for (const auto &key : order) {
        const auto &[v, div] = cells[key];
        CellSummary s;
        s.trajectory = std::get<0>(key);
        s.method = std::get<1>(key);
        s.noise_level = std::get<2>(key);
        s.runs = v.size();
        s.median_rmse = median(v);
        s.divergence_fraction = static_cast<double>(div) / static_cast<double>(v.size());
        out.push_back(s);
    }
    return out;
}

}  // namespace hvmgp

#endif
