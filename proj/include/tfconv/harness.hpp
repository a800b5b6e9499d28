#pragma once

// Data generation and ingestion, experiment orchestration (beta sweep,
// residual ablation, rank-collapse demo, gradient-check campaign) and the
// plain-text outputs they produce.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "tfconv/grad.hpp"
#include "tfconv/model.hpp"
#include "tfconv/optimizer.hpp"
#include "tfconv/random.hpp"
#include "tfconv/theory.hpp"
#include "tfconv/trace.hpp"

namespace tfconv {

// Stream tags for Rng::fork, so data, teacher and init never share draws.
inline constexpr std::uint64_t kDataStream = 1;
inline constexpr std::uint64_t kTeacherStream = 2;
inline constexpr std::uint64_t kNoiseStream = 3;

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    bool realizable = false;  ///< Y = F_teacher(X) + noise E, otherwise Y ~ N(0, y_std^2)
    double noise = 0.0;
    double x_std = 1.0;
    double y_std = 1.0;
};

/// Hidden parameters used for realizable targets (LeCun-scaled draw).
inline Params<double> teacher_params(std::uint64_t seed, const ModelConfig& cfg) {
    Rng rng = Rng(seed).fork(kTeacherStream);
    return init_params<double>(InitScheme::lecun(), cfg, rng);
}

inline Dataset<double> gen_synthetic(std::uint64_t seed, const ModelConfig& cfg, const SyntheticSpec& s) {
    cfg.validate();
    if (!(s.noise >= 0.0) || !(s.x_std > 0.0) || !(s.y_std > 0.0))
        throw std::invalid_argument("gen_synthetic: noise must be >= 0 and the scales > 0");
    Rng rng = Rng(seed).fork(kDataStream);
    Dataset<double> data;
    for (std::size_t p = 0; p < cfg.p; ++p) data.xs.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.d, s.x_std));
    if (s.realizable) {
        const Params<double> teacher = teacher_params(seed, cfg);
        Rng noise = Rng(seed).fork(kNoiseStream);
        for (const auto& x : data.xs) {
            Matrix<double> y = forward(x, teacher, cfg).output;
            if (s.noise > 0.0) y += gaussian_matrix<double>(noise, cfg.m, cfg.n, s.noise);
            data.ys.push_back(std::move(y));
        }
    } else {
        for (std::size_t p = 0; p < cfg.p; ++p)
            data.ys.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.n, s.y_std));
    }
    return data;
}

inline Dataset<double> gen_synthetic(std::uint64_t seed, const ModelConfig& cfg, double noise, bool realizable) {
    SyntheticSpec s;
    s.noise = noise;
    s.realizable = realizable;
    return gen_synthetic(seed, cfg, s);
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Structured ingestion failure. row and col are 1-based file coordinates
/// (row 1 is the header); 0 means "not tied to a cell".
class ParseError : public std::runtime_error {
public:
    ParseError(std::string path, std::size_t row, std::size_t col, const std::string& msg)
        : std::runtime_error(format(path, row, col, msg)), path_(std::move(path)), row_(row), col_(col) {}
    const std::string& path() const noexcept { return path_; }
    std::size_t row() const noexcept { return row_; }
    std::size_t col() const noexcept { return col_; }

private:
    static std::string format(const std::string& path, std::size_t row, std::size_t col, const std::string& msg) {
        std::string s = path;
        if (row) s += ":" + std::to_string(row);
        if (col) s += ":" + std::to_string(col);
        return s + ": " + msg;
    }
    std::string path_;
    std::size_t row_, col_;
};

struct CsvIngestSpec {
    std::string path;
    std::vector<std::string> features;  ///< columns forming X rows (d = size)
    std::vector<std::string> targets;   ///< columns forming Y rows (N = size)
    std::size_t window = 8;             ///< M
    std::size_t horizon = 1;            ///< Y window is the X window shifted by `horizon` rows
    std::size_t stride = 1;
    bool zscore = true;
    std::size_t cap = 0;                ///< keep the first `cap` windows; 0 keeps all

    /// Windows available in a file with `rows` data rows.
    std::size_t window_count(std::size_t rows) const {
        if (rows < window + horizon) return 0;
        return (rows - window - horizon) / stride + 1;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    for (auto& c : out) {
        const auto b = c.find_first_not_of(" \t\r");
        const auto e = c.find_last_not_of(" \t\r");
        c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
    }
    return out;
}

}  // namespace detail

/// Sliding windows over a numeric CSV with one header row. Window k covers data
/// rows [k*stride, k*stride + M) for X and the same range shifted by `horizon`
/// for Y. Z-scoring uses the mean and population std of each used column over
/// every data row.
inline Dataset<double> ingest_csv(const CsvIngestSpec& spec) {
    if (spec.window < 1) throw std::invalid_argument("ingest_csv: window must be >= 1");
    if (spec.stride < 1) throw std::invalid_argument("ingest_csv: stride must be >= 1");
    if (spec.horizon < 1) throw std::invalid_argument("ingest_csv: horizon must be >= 1");
    if (spec.features.empty() || spec.targets.empty())
        throw std::invalid_argument("ingest_csv: feature and target column lists must be non-empty");

    std::ifstream in(spec.path, std::ios::binary);
    if (!in) throw ParseError(spec.path, 0, 0, "cannot open file");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(spec.path, 1, 0, "file is empty (no header row)");
    const std::vector<std::string> header = detail::split_csv_line(line);

    auto locate = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError(spec.path, 1, 0, "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    std::vector<std::size_t> used;  // distinct header indices, features then targets
    std::vector<std::size_t> f_idx, t_idx;
    for (const auto& n : spec.features) f_idx.push_back(locate(n));
    for (const auto& n : spec.targets) t_idx.push_back(locate(n));
    for (std::size_t i : f_idx)
        if (std::find(used.begin(), used.end(), i) == used.end()) used.push_back(i);
    for (std::size_t i : t_idx)
        if (std::find(used.begin(), used.end(), i) == used.end()) used.push_back(i);

    std::vector<std::vector<double>> rows;  // rows x header.size(), only used columns parsed
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError(spec.path, lineno, 0,
                             "expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(cells.size()));
        std::vector<double> vals(header.size(), 0.0);
        for (std::size_t c : used) {
            const std::string& s = cells[c];
            std::size_t pos = 0;
            double v = 0.0;
            try {
                v = std::stod(s, &pos);
            } catch (const std::exception&) {
                pos = std::string::npos;
            }
            if (s.empty() || pos != s.size() || !std::isfinite(v))
                throw ParseError(spec.path, lineno, c + 1, "non-numeric cell '" + s + "' in column '" + header[c] + "'");
            vals[c] = v;
        }
        rows.push_back(std::move(vals));
    }

    const std::size_t available = spec.window_count(rows.size());
    if (available == 0)
        throw ParseError(spec.path, 0, 0,
                         "too short: " + std::to_string(rows.size()) + " data rows, need at least window + horizon = " +
                             std::to_string(spec.window + spec.horizon));

    if (spec.zscore) {
        const double n = static_cast<double>(rows.size());
        for (std::size_t c : used) {
            double mean = 0.0;
            for (const auto& r : rows) mean += r[c];
            mean /= n;
            double var = 0.0;
            for (const auto& r : rows) var += (r[c] - mean) * (r[c] - mean);
            const double sd = std::sqrt(var / n);
            if (!(sd > 0.0)) throw ParseError(spec.path, 0, c + 1, "column '" + header[c] + "' is constant");
            for (auto& r : rows) r[c] = (r[c] - mean) / sd;
        }
    }

    const std::size_t count = spec.cap ? std::min(spec.cap, available) : available;
    Dataset<double> data;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t start = k * spec.stride;
        Matrix<double> x(spec.window, f_idx.size());
        Matrix<double> y(spec.window, t_idx.size());
        for (std::size_t i = 0; i < spec.window; ++i) {
            for (std::size_t j = 0; j < f_idx.size(); ++j) x(i, j) = rows[start + i][f_idx[j]];
            for (std::size_t j = 0; j < t_idx.size(); ++j) y(i, j) = rows[start + i + spec.horizon][t_idx[j]];
        }
        data.xs.push_back(std::move(x));
        data.ys.push_back(std::move(y));
    }
    return data;
}

/// Throws unless `data` has exactly the (M, d, N, P) of cfg.
inline void require_shapes(const Dataset<double>& data, const ModelConfig& cfg, const std::string& what) {
    try {
        data.validate(cfg);
    } catch (const ShapeError& e) {
        throw ShapeError(what + " does not match the model config: " + e.what());
    }
}

/// Long-format text: `sample,part,row,col,value` with part x or y.
inline void write_dataset_csv(std::ostream& os, const Dataset<double>& data) {
    os << "sample,part,row,col,value\n";
    for (std::size_t p = 0; p < data.size(); ++p) {
        for (int part = 0; part < 2; ++part) {
            const Matrix<double>& m = part == 0 ? data.xs[p] : data.ys[p];
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.cols(); ++j)
                    os << p << "," << (part == 0 ? 'x' : 'y') << "," << i << "," << j << "," << fmt17(m(i, j))
                       << "\n";
        }
    }
}

// ---------------------------------------------------------------------------
// Experiment specification
// ---------------------------------------------------------------------------

struct DataSource {
    enum class Kind { synthetic, csv };
    Kind kind = Kind::synthetic;
    SyntheticSpec synthetic{};
    CsvIngestSpec csv{};
};

struct SweepAxis {
    enum class Kind { none, beta, logit_scale };
    Kind kind = Kind::none;
    std::vector<double> values;
};

struct GradCheckSpec {
    std::size_t configs = 20;
    double tol = 1e-5;
    double step = 1e-5;
    Activation activation{};
};

struct ExperimentSpec {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    DataSource data{};
    ModelConfig model{};
    TrainSpec train{};
    SweepAxis sweep{};
    GradCheckSpec grad_check{};
    std::string out_dir = "out";
    std::size_t workers = 0;  ///< 0 picks min(hardware threads, sweep size)

    void validate() const {
        model.validate();
        train.validate();
        train.init.validate(model);
        if (sweep.kind != SweepAxis::Kind::none && sweep.values.empty())
            throw std::invalid_argument("sweep: value list must be non-empty");
        if (sweep.kind == SweepAxis::Kind::beta)
            for (double b : sweep.values)
                if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("sweep: beta values must lie in [0, 1]");
        if (sweep.kind == SweepAxis::Kind::logit_scale)
            for (double s : sweep.values)
                if (!(s >= 0.0 && std::isfinite(s)))
                    throw std::invalid_argument("sweep: logit scales must be finite and >= 0");
    }
};

/// Builds the dataset for a spec: synthetic draws from spec.seed, or CSV
/// ingestion checked against the model shapes.
inline Dataset<double> make_dataset(const ExperimentSpec& spec) {
    if (spec.data.kind == DataSource::Kind::synthetic) return gen_synthetic(spec.seed, spec.model, spec.data.synthetic);
    Dataset<double> d = ingest_csv(spec.data.csv);
    require_shapes(d, spec.model, "ingested dataset '" + spec.data.csv.path + "'");
    return d;
}

inline TrainSpec seeded_train_spec(const ExperimentSpec& spec) {
    TrainSpec t = spec.train;
    t.seed = spec.seed;
    return t;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace detail {

// Runs job(i) for i in [0, n) on up to `workers` threads. Results go to slots
// owned by index, so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& job) {
    if (workers == 0) workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) job(i);
        });
    for (auto& t : pool) t.join();
}

}  // namespace detail

struct SweepPoint {
    double beta = 0.0;
    LossTrace<double> trace;
    double conditioning_ratio = 0.0;
    RateFit fit{};
    std::string status = "ok";  ///< "ok" or the failure message
};

/// One training run per beta from the same seed, data and theta^(0).
inline std::vector<SweepPoint> run_beta_sweep(const ExperimentSpec& spec) {
    spec.validate();
    if (spec.sweep.kind != SweepAxis::Kind::beta) throw std::invalid_argument("run_beta_sweep: sweep axis must be beta");
    const Dataset<double> data = make_dataset(spec);
    const TrainSpec ts = seeded_train_spec(spec);
    std::vector<SweepPoint> out(spec.sweep.values.size());
    detail::parallel_for(out.size(), spec.workers, [&](std::size_t i) {
        SweepPoint& pt = out[i];
        pt.beta = spec.sweep.values[i];
        ModelConfig cfg = spec.model;
        cfg.beta = pt.beta;
        try {
            Rng rng(ts.seed);
            const Params<double> w0 = init_params<double>(ts.init, cfg, rng);
            pt.conditioning_ratio = conditioning_ratio(w0, data, cfg);
            const double mu = resolve_mu(ts.mu, w0, data, cfg);
            pt.trace = run_gd(w0, data, cfg, ts.steps, mu, ts.record_every, ts.seed).trace;
            pt.fit = fit_linear_rate(pt.trace);
        } catch (const TrainingAborted& e) {
            pt.trace = e.trace();
            pt.status = e.what();
        } catch (const std::exception& e) {
            pt.status = e.what();
        }
    });
    return out;
}

inline std::string beta_label(double beta) {
    std::ostringstream os;
    os << beta;
    return os.str();
}

inline void write_sweep_traces_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
    os << "beta,step,phi\n";
    for (const auto& p : pts)
        for (const auto& r : p.trace.records) os << beta_label(p.beta) << "," << r.t << "," << fmt17(r.phi) << "\n";
}

/// Summary `beta,ratio,rho,r2,status`; failed points keep their row.
inline void write_sweep_summary_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
    os << "beta,ratio,rho,r2,status\n";
    for (const auto& p : pts) {
        std::string status = p.status;
        std::replace(status.begin(), status.end(), ',', ';');
        os << beta_label(p.beta) << "," << fmt17(p.conditioning_ratio) << "," << fmt17(p.fit.rho) << ","
           << fmt17(p.fit.r_squared) << "," << status << "\n";
    }
}

struct AblationResult {
    SweepPoint with_residual;     ///< beta = 1
    SweepPoint without_residual;  ///< beta = 0
    /// Final loss with the residual over final loss without it.
    double final_ratio() const {
        return with_residual.trace.back().phi / without_residual.trace.back().phi;
    }
};

inline AblationResult run_residual_ablation(const ExperimentSpec& spec) {
    ExperimentSpec s = spec;
    s.sweep = SweepAxis{SweepAxis::Kind::beta, {1.0, 0.0}};
    auto pts = run_beta_sweep(s);
    for (const auto& p : pts)
        if (p.status != "ok") throw std::runtime_error("ablation run beta=" + beta_label(p.beta) + " failed: " + p.status);
    return AblationResult{std::move(pts[0]), std::move(pts[1])};
}

/// `t,phi_beta1,phi_beta0`, rows for the steps recorded in both runs.
inline void write_ablation_csv(std::ostream& os, const AblationResult& a) {
    os << "t,phi_beta1,phi_beta0\n";
    const auto& r1 = a.with_residual.trace.records;
    const auto& r0 = a.without_residual.trace.records;
    for (std::size_t k = 0; k < std::min(r1.size(), r0.size()); ++k)
        os << r1[k].t << "," << fmt17(r1[k].phi) << "," << fmt17(r0[k].phi) << "\n";
}

inline void write_ablation_summary(std::ostream& os, const AblationResult& a) {
    os << "final_phi_beta1,final_phi_beta0,final_ratio,rho_beta1,rho_beta0\n";
    os << fmt17(a.with_residual.trace.back().phi) << "," << fmt17(a.without_residual.trace.back().phi) << ","
       << fmt17(a.final_ratio()) << "," << fmt17(a.with_residual.fit.rho) << ","
       << fmt17(a.without_residual.fit.rho) << "\n";
}

/// Largest relative loss decrease over any `window`-step span inside the last
/// half of the trace. Needs records at every step of that span.
inline double tail_relative_decrease(const LossTrace<double>& trace, std::size_t window = 100) {
    if (trace.empty()) throw std::invalid_argument("tail_relative_decrease: empty trace");
    std::map<std::size_t, double> by_t;
    for (const auto& r : trace.records) by_t[r.t] = r.phi;
    const std::size_t last = trace.back().t;
    if (last < 2 * window) throw std::invalid_argument("tail_relative_decrease: trace shorter than two windows");
    double worst = 0.0;
    for (std::size_t t = last / 2; t + window <= last; ++t) {
        const auto a = by_t.find(t), b = by_t.find(t + window);
        if (a == by_t.end() || b == by_t.end()) continue;
        if (a->second > 0.0) worst = std::max(worst, (a->second - b->second) / a->second);
    }
    return worst;
}

inline bool strictly_decreasing(const LossTrace<double>& trace) {
    for (std::size_t k = 1; k < trace.records.size(); ++k)
        if (!(trace.records[k].phi < trace.records[k - 1].phi)) return false;
    return true;
}

struct RankCollapseDemo {
    std::vector<SpectralProbe> probes;
    AblationResult runs;               ///< both at exactly uniform attention
    double plateau_decrease = 0.0;     ///< tail_relative_decrease of the beta = 0 run
    bool residual_decreasing = false;  ///< beta = 1 loss strictly decreasing
};

inline const std::vector<double>& default_logit_scales() {
    static const std::vector<double> s{1.0, 0.5, 0.1, 0.01, 0.001, 0.0};
    return s;
}

/// Probes a generic draw of theta^(0) on X_1 over the logit scales, then trains
/// beta = 1 and beta = 0 at exactly uniform attention (Wq = Wk = 0).
inline RankCollapseDemo run_rank_collapse_demo(const ExperimentSpec& spec) {
    spec.validate();
    RankCollapseDemo demo;
    const Dataset<double> data = make_dataset(spec);
    const std::vector<double>& scales =
        spec.sweep.kind == SweepAxis::Kind::logit_scale ? spec.sweep.values : default_logit_scales();
    {
        InitScheme generic = spec.train.init;
        generic.uniform_attention = false;
        Rng rng(spec.seed);
        const Params<double> w0 = init_params<double>(generic, spec.model, rng);
        demo.probes = rank_collapse_probe(data.xs.front(), w0, spec.model, scales);
    }
    ExperimentSpec s = spec;
    s.train.init.uniform_attention = true;
    demo.runs = run_residual_ablation(s);
    demo.plateau_decrease = tail_relative_decrease(demo.runs.without_residual.trace);
    demo.residual_decreasing = strictly_decreasing(demo.runs.with_residual.trace);
    return demo;
}

// ---------------------------------------------------------------------------
// Plot data
// ---------------------------------------------------------------------------

struct PlotSeries {
    std::string name;
    std::vector<std::pair<std::size_t, double>> points;  ///< (t, value)
};

inline PlotSeries loss_series(std::string name, const LossTrace<double>& trace) {
    PlotSeries s{std::move(name), {}};
    for (const auto& r : trace.records) s.points.emplace_back(r.t, r.phi);
    return s;
}

/// Tidy `series,t,value` CSV with series in lexicographic order.
inline void emit_plot_data(std::ostream& os, std::vector<PlotSeries> series) {
    if (series.empty()) throw std::invalid_argument("emit_plot_data: no series");
    std::stable_sort(series.begin(), series.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    os << "series,t,value\n";
    for (const auto& s : series)
        for (const auto& [t, v] : s.points) os << s.name << "," << t << "," << fmt17(v) << "\n";
}

inline void emit_plot_data(const std::filesystem::path& path, std::vector<PlotSeries> series) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    emit_plot_data(out, std::move(series));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<PlotSeries> read_plot_data(std::istream& is) {
    std::vector<PlotSeries> out;
    std::string line;
    if (!std::getline(is, line) || line != "series,t,value") throw std::runtime_error("plot data: bad header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 3) throw std::runtime_error("plot data: expected 3 fields in '" + line + "'");
        if (out.empty() || out.back().name != cells[0]) out.push_back(PlotSeries{cells[0], {}});
        out.back().points.emplace_back(std::stoull(cells[1]), std::stod(cells[2]));
    }
    return out;
}

inline std::vector<PlotSeries> sweep_plot_series(const std::vector<SweepPoint>& pts) {
    std::vector<PlotSeries> out;
    for (const auto& p : pts) out.push_back(loss_series("beta=" + beta_label(p.beta), p.trace));
    return out;
}

// ---------------------------------------------------------------------------
// Gradient-check campaign
// ---------------------------------------------------------------------------

struct CampaignResult {
    std::vector<GradCheckReport> reports;
    std::array<double, 6> worst{};  ///< per matrix over all configs
    bool pass() const {
        return std::all_of(reports.begin(), reports.end(), [](const auto& r) { return r.pass; });
    }
};

/// Random instance for the campaign: M in [2,6], d in [2,5], d_qk in [1,4],
/// d1 in [2,8], N in [1,4], P in [1,4], beta uniform in [0,1]. With ReLU the
/// draw is repeated until every preactivation is at least 10h from the kink.
inline std::pair<Params<double>, Dataset<double>> campaign_instance(Rng& rng, ModelConfig& cfg,
                                                                     const GradCheckSpec& spec) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
        cfg.m = static_cast<std::size_t>(rng.uniform_int(2, 6));
        cfg.d = static_cast<std::size_t>(rng.uniform_int(2, 5));
        cfg.d_qk = static_cast<std::size_t>(rng.uniform_int(1, 4));
        cfg.d1 = static_cast<std::size_t>(rng.uniform_int(2, 8));
        cfg.n = static_cast<std::size_t>(rng.uniform_int(1, 4));
        cfg.p = static_cast<std::size_t>(rng.uniform_int(1, 4));
        cfg.beta = rng.uniform();
        cfg.activation = spec.activation;
        const Params<double> w = init_params<double>(InitScheme::lecun(), cfg, rng);
        Dataset<double> data;
        for (std::size_t p = 0; p < cfg.p; ++p) {
            data.xs.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.d));
            data.ys.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.n));
        }
        if (cfg.activation.kind == Activation::Kind::relu) {
            bool near_kink = false;
            for (const auto& x : data.xs) {
                const ForwardTrace<double> tr = forward(x, w, cfg);
                for (double v : tr.preact.data()) near_kink = near_kink || std::abs(v) < 10 * spec.step;
            }
            if (near_kink) continue;
        }
        return {w, std::move(data)};
    }
    throw std::runtime_error("campaign_instance: could not draw a kink-free instance");
}

inline CampaignResult grad_check_campaign(std::uint64_t seed, const GradCheckSpec& spec, std::size_t workers = 0) {
    if (spec.configs < 1) throw std::invalid_argument("grad_check_campaign: need at least one config");
    CampaignResult res;
    res.reports.resize(spec.configs);
    detail::parallel_for(spec.configs, workers, [&](std::size_t i) {
        Rng rng = Rng(seed).fork(100 + i);
        ModelConfig cfg;
        auto [w, data] = campaign_instance(rng, cfg, spec);
        res.reports[i] = grad_check(w, data, cfg, spec.tol, spec.step);
    });
    for (const auto& r : res.reports)
        for (std::size_t k = 0; k < 6; ++k) res.worst[k] = std::max(res.worst[k], r.rel_error[k]);
    return res;
}

// ---------------------------------------------------------------------------
// Certified instance
// ---------------------------------------------------------------------------

template <Real T>
struct CertifiedInstance {
    ModelConfig cfg;
    Params<T> params;
    Dataset<T> data;
    TheoryReport<T> report;
    T epsilon{};              ///< target perturbation size
    std::uint64_t seed = 0;   ///< seed of the accepted draw
};

/// Builds a near-interpolation instance meeting the initialization
/// requirement: Y = F(theta^(0)) + eps E with eps set to half the largest value
/// (found by bisection) for which the requirement holds. Draws are retried from
/// derived seeds until alpha > 0 and the requirement can be met at all.
/// Small widths keep C moderate: M = 2, d = 2, d_qk = 2, d1 = 4, N = 2, P = 1.
template <Real T>
CertifiedInstance<T> make_certified_instance(std::uint64_t seed, int max_attempts = 64) {
    using std::sqrt;
    ModelConfig cfg;
    cfg.m = 2;
    cfg.d = 2;
    cfg.d_qk = 2;
    cfg.d1 = 4;
    cfg.n = 2;
    cfg.p = 1;
    cfg.beta = 1.0;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        const std::uint64_t s = attempt == 0 ? seed : Rng(seed).fork(1000 + attempt)();
        Rng rng(s);
        Params<double> w = Params<double>::zeros(cfg);
        w.w1 = gaussian_matrix<double>(rng, cfg.d, cfg.d1, 1.0);
        w.w2 = gaussian_matrix<double>(rng, cfg.d1, cfg.d, 0.03);
        w.wq = gaussian_matrix<double>(rng, cfg.d, cfg.d_qk, 0.03);
        w.wk = gaussian_matrix<double>(rng, cfg.d, cfg.d_qk, 0.03);
        w.wv = gaussian_matrix<double>(rng, cfg.d, cfg.d, 0.03);
        w.wu = gaussian_matrix<double>(rng, cfg.d, cfg.n, 1.0);
        Dataset<double> base;
        for (std::size_t p = 0; p < cfg.p; ++p) base.xs.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.d, 0.5));
        std::vector<Matrix<double>> dirs;
        for (std::size_t p = 0; p < cfg.p; ++p) dirs.push_back(gaussian_matrix<double>(rng, cfg.m, cfg.n, 1.0));

        CertifiedInstance<T> inst{cfg, w.template cast<T>(), Dataset<T>{}, TheoryReport<T>{}, T(0), s};
        auto build = [&](const T& eps) {
            Dataset<T> d;
            for (std::size_t p = 0; p < cfg.p; ++p) {
                const Matrix<T> x = base.xs[p].template cast<T>();
                d.xs.push_back(x);
                d.ys.push_back(forward(x, inst.params, cfg).output + eps * dirs[p].template cast<T>());
            }
            return d;
        };
        TheoryReport<T> r0 = constants(inst.params, build(T(0)), cfg);
        if (!(r0.alpha > T(0)) || !(r0.init.bound > T(0))) continue;
        // The bounds do not depend on Y, so the bisection only moves the left side.
        T lo(0), hi(1);
        while (constants(inst.params, build(hi), cfg).init.met && hi < T(1e6)) hi *= T(2);
        for (int it = 0; it < 200; ++it) {
            const T mid = (lo + hi) / T(2);
            (constants(inst.params, build(mid), cfg).init.met ? lo : hi) = mid;
        }
        if (!(lo > T(0))) continue;
        inst.epsilon = lo / T(2);
        inst.data = build(inst.epsilon);
        inst.report = constants(inst.params, inst.data, cfg);
        if (!inst.report.init.met) continue;
        return inst;
    }
    throw std::runtime_error("make_certified_instance: no draw met the initialization requirement");
}

}  // namespace tfconv
