// hvmgp: command-line driver for the case studies and the tracking pipeline.
//
//   hvmgp case1    --config run.yaml --out results/
//   hvmgp case2    --out results/
//   hvmgp simulate --config run.yaml --out results/
//   hvmgp train    --config run.yaml --out results/ [--method HvM]
//   hvmgp track    --config run.yaml --out results/ --method HvM --trajectory T1 [--noise-index 0] [--run 0]
//   hvmgp campaign --config run.yaml --out results/ [--jobs 4]
//
// Each stage reads its inputs from and writes its outputs to --out, plus a
// manifest_<stage>.json with the resolved config, seeds, files and timings.
// Exit codes: 0 ok, 1 other failure, 2 bad config or arguments,
// 3 missing/malformed upstream artifact, 4 numerical failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hvmgp/campaign.hpp"
#include "hvmgp/case_studies.hpp"
#include "hvmgp/config.hpp"
#include "hvmgp/io.hpp"

namespace fs = std::filesystem;
using namespace hvmgp;

namespace {

constexpr const char *kVersion = "1.0.0";

enum Exit { kOk = 0, kOther = 1, kConfig = 2, kArtifact = 3, kNumerical = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    std::vector<std::string> methods;
    std::string trajectory = "T1";
    std::size_t noise_index = 0;
    std::size_t run = 0;
    std::size_t jobs = 0;
};

std::string xi_tag(double xi) { return "xi" + fmt_double(xi); }
std::string training_file(double xi) { return "training_" + xi_tag(xi) + ".csv"; }
std::string trajectory_file(TrajectoryKind t) { return "trajectory_" + to_string(t) + ".csv"; }
std::string model_file(Method m, double xi) { return "model_" + to_string(m) + "_" + xi_tag(xi) + ".json"; }
std::string report_file(Method m, double xi) { return "report_" + to_string(m) + "_" + xi_tag(xi) + ".json"; }

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

/// Collects what a stage produced and writes it as the stage manifest.
class Manifest {
public:
    Manifest(std::string stage, const Config &cfg, fs::path dir)
        : stage_(std::move(stage)), dir_(std::move(dir)), started_(utc_now()), t0_(std::chrono::steady_clock::now()) {
        j_["stage"] = stage_;
        j_["version"] = kVersion;
        j_["config"] = config_to_json(cfg);
        j_["seeds"] = {{"base", cfg.seed}, {"optimizer", cfg.optimizer_options().seed}};
        j_["inputs"] = json::array();
        j_["outputs"] = json::array();
    }

    void input(const std::string &f) { j_["inputs"].push_back(f); }
    void output(const std::string &f) { j_["outputs"].push_back(f); }
    json &extra() { return j_; }

    void write() {
        j_["started"] = started_;
        j_["finished"] = utc_now();
        j_["elapsed_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
        write_json((dir_ / ("manifest_" + stage_ + ".json")).string(), j_);
    }

private:
    std::string stage_;
    fs::path dir_;
    std::string started_;
    std::chrono::steady_clock::time_point t0_;
    json j_;
};

Config resolve_config(const Options &o) {
    Config c = o.config.empty() ? Config{} : load_config_file(o.config);
    if (o.seed) c.seed = *o.seed;
    return c;
}

std::vector<Method> selected_methods(const Options &o, const Config &c) {
    if (o.methods.empty()) return c.methods;
    std::vector<Method> out;
    for (const auto &m : o.methods) out.push_back(method_from_string(m));
    return out;
}

MethodModel load_model(const fs::path &dir, Method m, double xi, Manifest &man) {
    const std::string f = model_file(m, xi);
    man.input(f);
    const fs::path p = dir / f;
    if (!fs::exists(p)) {
        throw ArtifactError("missing upstream artifact '" + p.string() + "'; run `hvmgp train` first");
    }
    try {
        return method_model_from_json(read_json(p.string()));
    } catch (const json::exception &e) {
        throw ArtifactError(p.string() + ": " + e.what());
    }
}

int cmd_case1(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("case1", c, dir);
    OptimizeOptions opt = c.optimizer_options();
    const Case1Result r = run_case1(c.case1_train_points, c.case1_test_points, c.seed, opt);

    {
        std::ofstream f = detail::open_out((dir / "case1_training.csv").string());
        f << "theta_rad,z\n";
        for (std::size_t i = 0; i < r.train_theta.size(); ++i) {
            f << fmt_double(r.train_theta[i]) << ',' << fmt_double(r.train_z[i]) << '\n';
        }
    }
    {
        std::ofstream f = detail::open_out((dir / "case1_posterior.csv").string());
        f << "theta_rad,se_mean,se_var,vm_mean,vm_var\n";
        for (std::size_t k = 0; k < r.theta_grid.size(); ++k) {
            f << fmt_double(r.theta_grid[k]) << ',' << fmt_double(r.se.mean[k]) << ',' << fmt_double(r.se.variance[k])
              << ',' << fmt_double(r.vm.mean[k]) << ',' << fmt_double(r.vm.variance[k]) << '\n';
        }
    }
    const ModelSpec spec1{KernelKind::pse, 1, 1, false}, spec2{KernelKind::pvm, 1, 1, false};
    const json summary{{"se", {{"boundary_gap", r.se.boundary_gap}, {"report", report_to_json(r.se.report, spec1)}}},
                       {"vm", {{"boundary_gap", r.vm.boundary_gap}, {"report", report_to_json(r.vm.report, spec2)}}}};
    write_json((dir / "case1_summary.json").string(), summary);
    for (const char *f : {"case1_training.csv", "case1_posterior.csv", "case1_summary.json"}) man.output(f);
    man.write();
    std::cout << "case1: SE boundary gap " << r.se.boundary_gap << ", vM boundary gap " << r.vm.boundary_gap << '\n';
    return kOk;
}

int cmd_case2(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("case2", c, dir);
    const auto sets = case_study_2_parameter_sets();
    json summary = json::array();
    for (std::size_t k = 0; k < sets.size(); ++k) {
        const KernelSweep sw = case_study_2_sweep(sets[k], c.case2_resolution);
        const std::string name = "case2_set" + std::to_string(k + 1) + ".csv";
        std::ofstream f = detail::open_out((dir / name).string());
        f << "alpha_rad,beta_rad,value,normalized\n";
        for (std::size_t i = 0; i < sw.alpha.size(); ++i) {
            for (std::size_t j = 0; j < sw.beta.size(); ++j) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                f << fmt_double(sw.alpha[i]) << ',' << fmt_double(sw.beta[j]) << ',' << fmt_double(sw.values(ii, jj))
                  << ',' << fmt_double(sw.normalized(ii, jj)) << '\n';
            }
        }
        man.output(name);
        Eigen::Index r, col;
        sw.values.maxCoeff(&r, &col);
        const Eigen::VectorXd sv = singular_values(sw.values);
        summary.push_back({{"set", k + 1},
                           {"lambda", sets[k].lambda},
                           {"corr", sets[k].corr},
                           {"argmax", {sw.alpha[static_cast<std::size_t>(r)], sw.beta[static_cast<std::size_t>(col)]}},
                           {"relative_sigma2", sv[1] / sv[0]}});
    }
    write_json((dir / "case2_summary.json").string(), summary);
    man.output("case2_summary.json");
    man.write();
    std::cout << "case2: wrote " << sets.size() << " sweeps at resolution " << c.case2_resolution << '\n';
    return kOk;
}

int cmd_simulate(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("simulate", c, dir);
    for (double xi : c.noise_levels) {
        const TrainingSet ts = build_training_set(c.scenario_for(xi));
        write_training_set((dir / training_file(xi)).string(), ts);
        man.output(training_file(xi));
    }
    for (auto t : c.trajectories) {
        write_trajectory((dir / trajectory_file(t)).string(), trajectory(t, c.scenario.steps));
        man.output(trajectory_file(t));
    }
    man.write();
    std::cout << "simulate: " << c.noise_levels.size() << " training sets, " << c.trajectories.size()
              << " trajectories\n";
    return kOk;
}

int cmd_train(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("train", c, dir);
    const auto methods = selected_methods(o, c);
    const std::size_t m = c.scenario.references.size();
    json summary = json::array();
    for (double xi : c.noise_levels) {
        const fs::path tp = dir / training_file(xi);
        man.input(training_file(xi));
        if (!fs::exists(tp)) {
            throw ArtifactError("missing upstream artifact '" + tp.string() + "'; run `hvmgp simulate` first");
        }
        const TrainingSet ts = read_training_set(tp.string(), m);
        for (Method meth : methods) {
            const MethodModel mm = train_method(meth, ts, c.scenario.references, c.optimizer_options());
            write_json((dir / model_file(meth, xi)).string(), method_model_to_json(mm, c.scenario.references));
            man.output(model_file(meth, xi));
            json entry{{"method", to_string(meth)}, {"noise_level", xi}};
            if (mm.report) {
                write_json((dir / report_file(meth, xi)).string(), report_to_json(*mm.report, mm.spec));
                man.output(report_file(meth, xi));
                entry["objective"] = mm.report->value;
                entry["converged"] = mm.report->converged;
                entry["jitter_used"] = mm.gp->jitter_used();
            }
            summary.push_back(entry);
            std::cout << "train: " << to_string(meth) << " at xi=" << xi
                      << (mm.report ? ", objective " + fmt_double(mm.report->value) : std::string()) << '\n';
        }
    }
    man.extra()["models"] = summary;
    man.write();
    return kOk;
}

int cmd_track(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("track", c, dir);
    if (o.noise_index >= c.noise_levels.size()) {
        throw ConfigError(o.config.empty() ? "<defaults>" : o.config, 0,
                          "--noise-index " + std::to_string(o.noise_index) + " is out of range");
    }
    const auto methods = selected_methods(o, c);
    const TrajectoryKind traj = trajectory_from_string(o.trajectory);
    std::size_t ti = 0;
    while (ti < c.trajectories.size() && c.trajectories[ti] != traj) ++ti;
    const double xi = c.noise_levels[o.noise_index];
    ScenarioConfig sc = c.scenario_for(xi);
    sc.trajectory = traj;
    const std::uint64_t ms = measurement_seed(c.seed, ti, o.noise_index, o.run);
    const std::uint64_t fs_ = filter_seed(c.seed, ti, o.noise_index, o.run);
    man.extra()["seeds"]["measurement"] = ms;
    man.extra()["seeds"]["filter"] = fs_;
    json results = json::array();
    for (Method meth : methods) {
        const MethodModel mm = load_model(dir, meth, xi, man);
        const TrackingResult r = run_tracking(sc, to_string(meth), *mm.model, ms, fs_, c.filter_options());
        const std::string name = "tracking_" + to_string(meth) + "_" + to_string(traj) + "_" + xi_tag(xi) + "_run" +
                                 std::to_string(o.run) + ".csv";
        write_tracking((dir / name).string(), r);
        man.output(name);
        results.push_back({{"method", to_string(meth)}, {"rmse", r.rmse}, {"diverged", r.diverged}});
        std::cout << "track: " << to_string(meth) << " RMSE " << r.rmse << (r.diverged ? " (diverged)" : "") << '\n';
    }
    man.extra()["results"] = results;
    man.write();
    return kOk;
}

int cmd_campaign(const Options &o) {
    const Config c = resolve_config(o);
    const fs::path dir(o.out);
    Manifest man("campaign", c, dir);
    Config cc = c;
    cc.methods = selected_methods(o, c);
    std::map<std::pair<Method, std::size_t>, MethodModel> models;
    for (std::size_t k = 0; k < cc.noise_levels.size(); ++k) {
        for (Method m : cc.methods) models.emplace(std::make_pair(m, k), load_model(dir, m, cc.noise_levels[k], man));
    }
    const std::size_t jobs = o.jobs ? o.jobs : std::max(1u, std::thread::hardware_concurrency());
    const auto rows = campaign(cc.scenario, cc.campaign_spec(jobs), [&](Method m, std::size_t k) -> const MeasurementModel & {
        return *models.at({m, k}).model;
    });
    write_campaign((dir / "campaign.csv").string(), rows);
    man.output("campaign.csv");
    json cells = json::array();
    for (const auto &s : summarize(rows)) {
        cells.push_back({{"method", s.method},
                         {"trajectory", s.trajectory},
                         {"noise_level", s.noise_level},
                         {"median_rmse", s.median_rmse},
                         {"divergence_fraction", s.divergence_fraction},
                         {"runs", s.runs}});
        std::cout << s.trajectory << " xi=" << s.noise_level << ' ' << s.method << ": median RMSE " << s.median_rmse
                  << ", diverged " << s.divergence_fraction << '\n';
    }
    write_json((dir / "campaign_summary.json").string(), cells);
    man.output("campaign_summary.json");
    man.extra()["jobs"] = jobs;
    man.write();
    return kOk;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Hypertoroidal von Mises Gaussian processes: case studies and range-based tracking"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App *sub) {
        sub->add_option("--config", o.config, "YAML config file or a previous stage manifest")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_option("--out", o.out, "artifact directory (read and written)");
    };
    auto *case1 = app.add_subcommand("case1", "SE vs vM regression on the circle");
    auto *case2 = app.add_subcommand("case2", "HvM kernel sweeps on the 2-torus");
    auto *simulate = app.add_subcommand("simulate", "training sets and trajectories");
    auto *train = app.add_subcommand("train", "fit measurement models");
    auto *track = app.add_subcommand("track", "single particle-filter run");
    auto *camp = app.add_subcommand("campaign", "Monte Carlo tracking campaign");
    for (auto *s : {case1, case2, simulate, train, track, camp}) common(s);
    for (auto *s : {train, track, camp}) s->add_option("--method", o.methods, "HvM, PvM, PPRD, PSE or Parametric");
    track->add_option("--trajectory", o.trajectory, "T1, T2 or T3");
    track->add_option("--noise-index", o.noise_index, "index into scenario.noise_levels");
    track->add_option("--run", o.run, "run index (selects the seeds)");
    camp->add_option("--jobs", o.jobs, "worker threads (default: hardware concurrency)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        fs::create_directories(o.out);
        if (*case1) return cmd_case1(o);
        if (*case2) return cmd_case2(o);
        if (*simulate) return cmd_simulate(o);
        if (*train) return cmd_train(o);
        if (*track) return cmd_track(o);
        if (*camp) return cmd_campaign(o);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const ArtifactError &e) {
        std::cerr << "artifact error: " << e.what() << '\n';
        return kArtifact;
    } catch (const NotPositiveDefinite &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const ObjectiveError &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const SingularCovariance &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const SingularityError &e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::invalid_argument &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kOther;
    }
    return kOther;
}
