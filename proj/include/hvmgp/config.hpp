#ifndef HVMGP_CONFIG_HPP
#define HVMGP_CONFIG_HPP

// Run configuration, read from YAML. Every key is optional; defaults are
// the full-scale evaluation settings.
//
//   seed: 1
//   scenario:
//     arena: [30, 30]                        # m
//     references: [[5, 5], [25, 5], [15, 25]]
//     process_cov: [0.16, 0.16]              # diagonal of Q, m^2
//     offset_ratio: 0.05
//     grid: [24, 10]                         # training grid, x by y
//     steps: 1000
//     noise_levels: [0.01, 0.03, 0.05]       # xi, m
//     trajectories: [T1, T2, T3]
//   optimizer: {max_iterations: 200, restarts: 4}
//   filter: {particles: 100, initial_spread: 1.0}
//   campaign: {runs: 100, methods: [HvM, PvM, PPRD, PSE, Parametric]}
//   case1: {train_points: 40, test_points: 601}
//   case2: {resolution: 181}
//
// A run manifest (JSON) is also accepted: its "config" member is used.

#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "campaign.hpp"
#include "filter.hpp"
#include "hyperopt.hpp"
#include "simulator.hpp"

namespace hvmgp {

/// Schema violation or parse failure, anchored at a 1-based line.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string &file, int line, const std::string &msg)
        : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

struct Config {
    std::uint64_t seed = 1;
    ScenarioConfig scenario;
    std::vector<double> noise_levels{0.01, 0.03, 0.05};
    std::vector<TrajectoryKind> trajectories{TrajectoryKind::T1, TrajectoryKind::T2, TrajectoryKind::T3};
    std::size_t max_iterations = 200;
    std::size_t restarts = 4;
    std::size_t particles = 100;
    double initial_spread = 1.0;
    std::size_t runs = 100;
    std::vector<Method> methods = all_methods();
    std::size_t case1_train_points = 40;
    std::size_t case1_test_points = 601;
    std::size_t case2_resolution = 181;

    OptimizeOptions optimizer_options() const {
        OptimizeOptions o;
        o.max_iterations = max_iterations;
        o.restarts = restarts;
        o.seed = derive_seed(seed, {0x6f7074ULL});
        return o;
    }
    FilterOptions filter_options() const { return {particles, initial_spread}; }

    CampaignSpec campaign_spec(std::size_t jobs) const {
        CampaignSpec c;
        c.trajectories = trajectories;
        c.noise_levels = noise_levels;
        c.runs = runs;
        c.methods = methods;
        c.seed = seed;
        c.filter = filter_options();
        c.jobs = jobs;
        return c;
    }

    /// Scenario with the given noise level, seeded from the top-level seed.
    ScenarioConfig scenario_for(double xi) const {
        ScenarioConfig s = scenario;
        s.noise_xi = xi;
        s.seed = seed;
        return s;
    }
};

namespace detail {

class ConfigReader {
public:
    explicit ConfigReader(std::string file) : file_(std::move(file)) {}

    [[noreturn]] void fail(const YAML::Node &n, const std::string &msg) const {
        throw ConfigError(file_, n.Mark().line + 1, msg);
    }

    template <class T>
    T scalar(const YAML::Node &n, const std::string &key) const {
        if (!n.IsScalar()) fail(n, "'" + key + "' must be a scalar");
        try {
            return n.as<T>();
        } catch (const YAML::Exception &) {
            fail(n, "'" + key + "' has the wrong type");
        }
    }

    std::size_t count(const YAML::Node &n, const std::string &key, std::size_t min = 1) const {
        const auto v = scalar<long long>(n, key);
        if (v < static_cast<long long>(min)) fail(n, "'" + key + "' must be at least " + std::to_string(min));
        return static_cast<std::size_t>(v);
    }

    double positive(const YAML::Node &n, const std::string &key) const {
        const double v = scalar<double>(n, key);
        if (!(v > 0.0)) fail(n, "'" + key + "' must be positive");
        return v;
    }

    std::vector<double> numbers(const YAML::Node &n, const std::string &key, std::size_t len = 0) const {
        if (!n.IsSequence()) fail(n, "'" + key + "' must be a list");
        if (len && n.size() != len) fail(n, "'" + key + "' must have " + std::to_string(len) + " entries");
        std::vector<double> v;
        for (const auto &e : n) v.push_back(scalar<double>(e, key));
        return v;
    }

    void check_keys(const YAML::Node &map, const std::string &section, std::initializer_list<const char *> allowed) const {
        if (!map.IsMap()) fail(map, "'" + section + "' must be a mapping");
        for (const auto &kv : map) {
            const auto key = kv.first.as<std::string>();
            bool ok = false;
            for (const char *a : allowed) ok = ok || key == a;
            if (!ok) fail(kv.first, "unknown key '" + key + "' in " + section);
        }
    }

private:
    std::string file_;
};

}  // namespace detail

inline Config parse_config(const YAML::Node &rootIn, const std::string &file) {
    const detail::ConfigReader rd(file);
    YAML::Node root = rootIn;
    Config c;
    if (!root || root.IsNull()) return c;
    if (root.IsMap() && root["config"]) root = root["config"];
    rd.check_keys(root, "top level", {"seed", "scenario", "optimizer", "filter", "campaign", "case1", "case2"});

    if (const auto n = root["seed"]) c.seed = rd.scalar<std::uint64_t>(n, "seed");

    if (const auto s = root["scenario"]) {
        rd.check_keys(s, "scenario", {"arena", "references", "process_cov", "offset_ratio", "grid", "steps",
                                      "noise_levels", "trajectories"});
        if (const auto n = s["arena"]) {
            const auto v = rd.numbers(n, "arena", 2);
            if (!(v[0] > 0.0 && v[1] > 0.0)) rd.fail(n, "'arena' must be positive");
            c.scenario.width = v[0];
            c.scenario.height = v[1];
        }
        if (const auto n = s["references"]) {
            if (!n.IsSequence() || n.size() == 0) rd.fail(n, "'references' must be a nonempty list of [x, y]");
            c.scenario.references.clear();
            for (const auto &r : n) {
                const auto v = rd.numbers(r, "references", 2);
                c.scenario.references.emplace_back(v[0], v[1]);
            }
        }
        if (const auto n = s["process_cov"]) {
            const auto v = rd.numbers(n, "process_cov", 2);
            if (v[0] < 0.0 || v[1] < 0.0) rd.fail(n, "'process_cov' must be nonnegative");
            c.scenario.process_cov = Eigen::Vector2d(v[0], v[1]).asDiagonal();
        }
        if (const auto n = s["offset_ratio"]) c.scenario.offset_ratio = rd.scalar<double>(n, "offset_ratio");
        if (const auto n = s["grid"]) {
            if (!n.IsSequence() || n.size() != 2) rd.fail(n, "'grid' must be [nx, ny]");
            c.scenario.grid_x = rd.count(n[0], "grid");
            c.scenario.grid_y = rd.count(n[1], "grid");
        }
        if (const auto n = s["steps"]) c.scenario.steps = rd.count(n, "steps");
        if (const auto n = s["noise_levels"]) {
            c.noise_levels = rd.numbers(n, "noise_levels");
            if (c.noise_levels.empty()) rd.fail(n, "'noise_levels' must not be empty");
            for (double x : c.noise_levels) {
                if (!(x > 0.0)) rd.fail(n, "'noise_levels' must be positive");
            }
        }
        if (const auto n = s["trajectories"]) {
            if (!n.IsSequence() || n.size() == 0) rd.fail(n, "'trajectories' must be a nonempty list");
            c.trajectories.clear();
            for (const auto &t : n) {
                try {
                    c.trajectories.push_back(trajectory_from_string(rd.scalar<std::string>(t, "trajectories")));
                } catch (const std::invalid_argument &e) {
                    rd.fail(t, e.what());
                }
            }
        }
        try {
            c.scenario.validate();
        } catch (const std::invalid_argument &e) {
            rd.fail(s, e.what());
        }
    }
    if (const auto o = root["optimizer"]) {
        rd.check_keys(o, "optimizer", {"max_iterations", "restarts"});
        if (const auto n = o["max_iterations"]) c.max_iterations = rd.count(n, "max_iterations");
        if (const auto n = o["restarts"]) c.restarts = rd.count(n, "restarts");
    }
    if (const auto f = root["filter"]) {
        rd.check_keys(f, "filter", {"particles", "initial_spread"});
        if (const auto n = f["particles"]) c.particles = rd.count(n, "particles");
        if (const auto n = f["initial_spread"]) c.initial_spread = rd.positive(n, "initial_spread");
    }
    if (const auto k = root["campaign"]) {
        rd.check_keys(k, "campaign", {"runs", "methods"});
        if (const auto n = k["runs"]) c.runs = rd.count(n, "runs");
        if (const auto n = k["methods"]) {
            if (!n.IsSequence() || n.size() == 0) rd.fail(n, "'methods' must be a nonempty list");
            c.methods.clear();
            for (const auto &m : n) {
                try {
                    c.methods.push_back(method_from_string(rd.scalar<std::string>(m, "methods")));
                } catch (const std::invalid_argument &e) {
                    rd.fail(m, e.what());
                }
            }
        }
    }
    if (const auto k = root["case1"]) {
        rd.check_keys(k, "case1", {"train_points", "test_points"});
        if (const auto n = k["train_points"]) c.case1_train_points = rd.count(n, "train_points", 2);
        if (const auto n = k["test_points"]) c.case1_test_points = rd.count(n, "test_points", 2);
    }
    if (const auto k = root["case2"]) {
        rd.check_keys(k, "case2", {"resolution"});
        if (const auto n = k["resolution"]) c.case2_resolution = rd.count(n, "resolution", 2);
    }
    return c;
}

inline Config load_config_string(const std::string &text, const std::string &name = "<config>") {
    try {
        return parse_config(YAML::Load(text), name);
    } catch (const YAML::ParserException &e) {
        throw ConfigError(name, e.mark.line + 1, e.msg);
    }
}

inline Config load_config_file(const std::string &path) {
    try {
        return parse_config(YAML::LoadFile(path), path);
    } catch (const YAML::BadFile &) {
        throw ConfigError(path, 0, "cannot read config file");
    } catch (const YAML::ParserException &e) {
        throw ConfigError(path, e.mark.line + 1, e.msg);
    }
}

/// Fully resolved configuration, in the same schema the loader accepts.
inline nlohmann::json config_to_json(const Config &c) {
    using nlohmann::json;
    json refs = json::array();
    for (const auto &r : c.scenario.references) refs.push_back({r.x(), r.y()});
    std::vector<std::string> trajs, methods;
    for (auto t : c.trajectories) trajs.push_back(to_string(t));
    for (auto m : c.methods) methods.push_back(to_string(m));
    return json{
        {"seed", c.seed},
        {"scenario",
         {{"arena", {c.scenario.width, c.scenario.height}},
          {"references", refs},
          {"process_cov", {c.scenario.process_cov(0, 0), c.scenario.process_cov(1, 1)}},
          {"offset_ratio", c.scenario.offset_ratio},
          {"grid", {c.scenario.grid_x, c.scenario.grid_y}},
          {"steps", c.scenario.steps},
          {"noise_levels", c.noise_levels},
          {"trajectories", trajs}}},
        {"optimizer", {{"max_iterations", c.max_iterations}, {"restarts", c.restarts}}},
        {"filter", {{"particles", c.particles}, {"initial_spread", c.initial_spread}}},
        {"campaign", {{"runs", c.runs}, {"methods", methods}}},
        {"case1", {{"train_points", c.case1_train_points}, {"test_points", c.case1_test_points}}},
        {"case2", {{"resolution", c.case2_resolution}}},
    };
}

}  // namespace hvmgp

#endif
