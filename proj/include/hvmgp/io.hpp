#ifndef HVMGP_IO_HPP
#define HVMGP_IO_HPP

// File formats.
//
// Delimited text (comma separated, one header line, SI units, doubles printed
// in shortest round-trip form):
//   training set : x_m,y_m,aoa1_e1,aoa1_e2,...,aoaM_e1,aoaM_e2,range1_m,...,rangeM_m
//   trajectory   : step,x_m,y_m
//   tracking run : step,truth_x_m,truth_y_m,estimate_x_m,estimate_y_m,ape_m
//   campaign     : method,trajectory,noise_level,seed,rmse,diverged   (diverged is 0/1)
//
// Model file (JSON, "format": "hvmgp.model", "version": 1):
//   method            HvM | PvM | PPRD | PSE | Parametric
//   references        [[x, y], ...]
//   GP methods:
//     kernel          {"name": "hvm", "omega", "lambda": [...], "corr": [...]}
//                     {"name": "pvm"|"pprd"|"pse", "omega": [...], "scale": [...]}
//     multi_output    bool
//     coregionalization  d x d, row-major nested arrays
//     noise_variance  [s_1^2, ..., s_d^2]
//     inputs          [[e1, e2, e1, e2, ...], ...] one row per training point
//     observations    [[z_1, ..., z_d], ...] one row per training point
//     jitter_used     informational
//   Parametric:
//     bias, cov       residual mean and covariance
//
// Optimization report (JSON): iterations, converged, stop_reason, objective,
// gradient_norm, trace, restart_values, theta {name: value}.

#include <charconv>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "campaign.hpp"
#include "filter.hpp"
#include "gp.hpp"
#include "hyperopt.hpp"
#include "simulator.hpp"

namespace hvmgp {

using json = nlohmann::json;

/// Missing or malformed upstream artifact.
class ArtifactError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string fmt_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(const std::string &s, const std::string &where) {
    double v = 0.0;
    const char *b = s.data();
    const char *e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) {
        if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
        throw ArtifactError(where + ": cannot parse number '" + s + "'");
    }
    return v;
}

namespace detail {

inline std::ofstream open_out(const std::string &path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    return f;
}

inline std::ifstream open_in(const std::string &path) {
    std::ifstream f(path);
    if (!f) throw ArtifactError("missing upstream artifact: expected file '" + path + "'");
    return f;
}

inline std::vector<std::string> split(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(cur);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::string &path, const std::vector<std::string> &expect) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line)) throw ArtifactError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!expect.empty() && split(line) != expect) throw ArtifactError(path + ": unexpected header '" + line + "'");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split(line));
        if (!expect.empty() && rows.back().size() != expect.size()) {
            throw ArtifactError(path + ": row " + std::to_string(rows.size() + 1) + " has the wrong column count");
        }
    }
    return rows;
}

inline std::string join(const std::vector<std::string> &v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
    return s;
}

}  // namespace detail

inline std::vector<std::string> training_set_header(std::size_t m) {
    std::vector<std::string> h{"x_m", "y_m"};
    for (std::size_t s = 1; s <= m; ++s) {
        h.push_back("aoa" + std::to_string(s) + "_e1");
        h.push_back("aoa" + std::to_string(s) + "_e2");
    }
    for (std::size_t s = 1; s <= m; ++s) h.push_back("range" + std::to_string(s) + "_m");
    return h;
}

inline void write_training_set(const std::string &path, const TrainingSet &ts) {
    auto f = detail::open_out(path);
    const std::size_t m = static_cast<std::size_t>(ts.obs.cols());
    f << detail::join(training_set_header(m)) << '\n';
    for (std::size_t i = 0; i < ts.size(); ++i) {
        f << fmt_double(ts.positions[i].x()) << ',' << fmt_double(ts.positions[i].y());
        for (std::size_t s = 0; s < m; ++s) f << ',' << fmt_double(ts.inputs[i][s].e1()) << ',' << fmt_double(ts.inputs[i][s].e2());
        for (std::size_t s = 0; s < m; ++s) f << ',' << fmt_double(ts.obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)));
        f << '\n';
    }
}

inline TrainingSet read_training_set(const std::string &path, std::size_t m) {
    const auto rows = detail::read_csv(path, training_set_header(m));
    TrainingSet ts;
    ts.obs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto &r = rows[i];
        const std::string where = path + ":" + std::to_string(i + 2);
        ts.positions.emplace_back(parse_double(r[0], where), parse_double(r[1], where));
        std::vector<CirclePoint> c;
        for (std::size_t s = 0; s < m; ++s) {
            c.push_back(CirclePoint::from_vector(parse_double(r[2 + 2 * s], where), parse_double(r[3 + 2 * s], where)));
        }
        ts.inputs.emplace_back(std::move(c));
        for (std::size_t s = 0; s < m; ++s) {
            ts.obs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = parse_double(r[2 + 2 * m + s], where);
        }
    }
    return ts;
}

inline void write_trajectory(const std::string &path, const Trajectory &tr) {
    auto f = detail::open_out(path);
    f << "step,x_m,y_m\n";
    for (std::size_t k = 0; k < tr.positions.size(); ++k) {
        f << k << ',' << fmt_double(tr.positions[k].x()) << ',' << fmt_double(tr.positions[k].y()) << '\n';
    }
}

inline std::vector<Vec2> read_trajectory(const std::string &path) {
    const auto rows = detail::read_csv(path, {"step", "x_m", "y_m"});
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string where = path + ":" + std::to_string(i + 2);
        out.emplace_back(parse_double(rows[i][1], where), parse_double(rows[i][2], where));
    }
    return out;
}

inline void write_tracking(const std::string &path, const TrackingResult &r) {
    auto f = detail::open_out(path);
    f << "step,truth_x_m,truth_y_m,estimate_x_m,estimate_y_m,ape_m\n";
    for (std::size_t k = 0; k < r.ape.size(); ++k) {
        f << k << ',' << fmt_double(r.truth[k].x()) << ',' << fmt_double(r.truth[k].y()) << ','
          << fmt_double(r.estimates[k].x()) << ',' << fmt_double(r.estimates[k].y()) << ',' << fmt_double(r.ape[k])
          << '\n';
    }
}

inline const std::vector<std::string> &campaign_header() {
    static const std::vector<std::string> h{"method", "trajectory", "noise_level", "seed", "rmse", "diverged"};
    return h;
}

inline void write_campaign(const std::string &path, const std::vector<CampaignRow> &rows) {
    auto f = detail::open_out(path);
    f << detail::join(campaign_header()) << '\n';
    for (const auto &r : rows) {
        f << r.method << ',' << r.trajectory << ',' << fmt_double(r.noise_level) << ',' << r.seed << ','
          << fmt_double(r.rmse) << ',' << (r.diverged ? 1 : 0) << '\n';
    }
}

inline std::vector<CampaignRow> read_campaign(const std::string &path) {
    const auto rows = detail::read_csv(path, campaign_header());
    std::vector<CampaignRow> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto &r = rows[i];
        const std::string where = path + ":" + std::to_string(i + 2);
        CampaignRow c;
        c.method = r[0];
        c.trajectory = r[1];
        c.noise_level = parse_double(r[2], where);
        c.seed = std::stoull(r[3]);
        c.rmse = parse_double(r[4], where);
        c.diverged = r[5] == "1";
        out.push_back(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON model files.

inline json matrix_to_json(const Eigen::MatrixXd &M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(row);
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json &j) {
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = r ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        if (static_cast<Eigen::Index>(j.at(static_cast<std::size_t>(i)).size()) != c) {
            throw ArtifactError("ragged matrix in model file");
        }
        for (Eigen::Index k = 0; k < c; ++k) M(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
    }
    return M;
}

inline json kernel_to_json(const Kernel &k) {
    json j;
    j["name"] = k.name();
    if (k.kind() == KernelKind::hvm) {
        j["omega"] = k.hvm_params().omega;
        j["lambda"] = k.hvm_params().lambda;
        j["corr"] = k.hvm_params().corr;
    } else {
        j["omega"] = k.baseline_params().omega;
        j["scale"] = k.baseline_params().scale;
    }
    return j;
}

inline Kernel kernel_from_json(const json &j) {
    const KernelKind kind = kernel_kind_from_string(j.at("name").get<std::string>());
    if (kind == KernelKind::hvm) {
        HvmHyperparams p;
        p.omega = j.at("omega").get<double>();
        p.lambda = j.at("lambda").get<std::vector<double>>();
        p.corr = j.at("corr").get<std::vector<double>>();
        return Kernel::hvm(std::move(p));
    }
    BaselineKernelParams p;
    p.omega = j.at("omega").get<std::vector<double>>();
    p.scale = j.at("scale").get<std::vector<double>>();
    return Kernel::baseline(kind, std::move(p));
}

inline json gp_to_json(const TrainedGp &gp) {
    json j;
    j["kernel"] = kernel_to_json(gp.kernel());
    j["multi_output"] = gp.multi_output();
    j["coregionalization"] = matrix_to_json(gp.coregionalization());
    j["noise_variance"] = std::vector<double>(gp.noise_variances().data(),
                                              gp.noise_variances().data() + gp.noise_variances().size());
    json inputs = json::array();
    for (const auto &x : gp.inputs()) {
        json row = json::array();
        for (const auto &c : x.components()) {
            row.push_back(c.e1());
            row.push_back(c.e2());
        }
        inputs.push_back(row);
    }
    j["inputs"] = inputs;
    j["observations"] = matrix_to_json(gp.obs_matrix());
    j["jitter_used"] = gp.jitter_used();
    return j;
}

inline TrainedGp gp_from_json(const json &j) {
    Kernel kernel = kernel_from_json(j.at("kernel"));
    std::vector<TorusPoint> inputs;
    for (const auto &row : j.at("inputs")) {
        const auto v = row.get<std::vector<double>>();
        if (v.size() % 2 != 0) throw ArtifactError("model inputs need an even number of components");
        std::vector<CirclePoint> c;
        for (std::size_t s = 0; s < v.size(); s += 2) c.push_back(CirclePoint::from_vector(v[s], v[s + 1]));
        inputs.emplace_back(std::move(c));
    }
    const Eigen::MatrixXd obs = matrix_from_json(j.at("observations"));
    const auto nv = j.at("noise_variance").get<std::vector<double>>();
    Eigen::VectorXd noise = Eigen::Map<const Eigen::VectorXd>(nv.data(), static_cast<Eigen::Index>(nv.size()));
    if (j.at("multi_output").get<bool>()) {
        return fit(std::move(inputs), obs, std::move(kernel), std::move(noise),
                   matrix_from_json(j.at("coregionalization")));
    }
    return fit(std::move(inputs), Eigen::VectorXd(obs.col(0)), std::move(kernel), noise[0]);
}

inline json report_to_json(const OptResult &r, const ModelSpec &spec) {
    json j;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["stop_reason"] = r.stop_reason;
    j["objective"] = r.value;
    j["gradient_norm"] = r.gradient_norm;
    j["trace"] = r.trace;
    j["best_restart"] = r.best_restart;
    j["restart_values"] = r.restart_values;
    const auto names = theta_names(spec);
    const Eigen::VectorXd flat = r.theta.flat(spec);
    json th = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) th[names[i]] = flat[static_cast<Eigen::Index>(i)];
    j["theta"] = th;
    return j;
}

inline json refs_to_json(const std::vector<Vec2> &refs) {
    json a = json::array();
    for (const auto &r : refs) a.push_back({r.x(), r.y()});
    return a;
}

inline std::vector<Vec2> refs_from_json(const json &j) {
    std::vector<Vec2> out;
    for (const auto &r : j) out.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    return out;
}

inline void write_json(const std::string &path, const json &j) {
    auto f = detail::open_out(path);
    f << j.dump(2) << '\n';
}

inline json read_json(const std::string &path) {
    auto f = detail::open_in(path);
    try {
        return json::parse(f);
    } catch (const json::exception &e) {
        throw ArtifactError(path + ": " + e.what());
    }
}

inline json method_model_to_json(const MethodModel &mm, const std::vector<Vec2> &refs) {
    json j;
    j["format"] = "hvmgp.model";
    j["version"] = 1;
    j["method"] = to_string(mm.method);
    j["references"] = refs_to_json(refs);
    if (mm.method == Method::Parametric) {
        const auto &pm = dynamic_cast<const ParametricModel &>(*mm.model);
        j["bias"] = std::vector<double>(pm.bias().data(), pm.bias().data() + pm.bias().size());
        j["cov"] = matrix_to_json(pm.cov());
        return j;
    }
    j.update(gp_to_json(*mm.gp));
    return j;
}

inline MethodModel method_model_from_json(const json &j) {
    if (j.value("format", "") != "hvmgp.model") throw ArtifactError("not an hvmgp model file");
    MethodModel mm;
    mm.method = method_from_string(j.at("method").get<std::string>());
    const auto refs = refs_from_json(j.at("references"));
    if (mm.method == Method::Parametric) {
        const auto b = j.at("bias").get<std::vector<double>>();
        mm.model = std::make_shared<ParametricModel>(
            Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())),
            matrix_from_json(j.at("cov")), refs);
        return mm;
    }
    mm.gp = std::make_shared<const TrainedGp>(gp_from_json(j));
    mm.spec = range_model_spec(mm.method, refs.size());
    mm.model = std::make_shared<GpMeasurementModel>(mm.gp, refs);
    return mm;
}

}  // namespace hvmgp

#endif
