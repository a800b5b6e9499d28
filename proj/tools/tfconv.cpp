// tfconv command-line driver.
//
// Exit codes: 0 success, 1 usage or input error, 2 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tfconv/tfconv.hpp"

namespace fs = std::filesystem;
using namespace tfconv;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kRuntimeError = 2;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string spec;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<double> tol;
    bool force = false;
    bool verbose = false;
    // grad-check only
    std::string activation;
    std::optional<std::size_t> configs;
};

void add_common(CLI::App* app, Options& o) {
    app->add_option("--spec", o.spec, "Experiment spec (JSON)");
    app->add_option("--seed", o.seed, "Seed for every random draw; overrides the spec");
    app->add_option("--out", o.out, "Output directory; overrides the spec");
    app->add_option("--tol", o.tol, "Tolerance (grad-check relative error)");
    app->add_flag("--force", o.force, "Overwrite existing output files");
    app->add_flag("--verbose", o.verbose, "Progress and extra diagnostics on stderr");
}

ExperimentSpec resolve_spec(const Options& o) {
    ExperimentSpec s;
    if (!o.spec.empty()) {
        if (!fs::exists(o.spec)) throw InputError("spec file not found: " + o.spec);
        s = load_spec(o.spec);
    }
    if (o.seed) s.seed = *o.seed;
    if (!o.out.empty()) s.out_dir = o.out;
    return s;
}

// Collects output files, refuses to clobber existing ones without --force and
// writes them only once every name has been checked.
class OutputSet {
public:
    OutputSet(fs::path dir, bool force) : dir_(std::move(dir)), force_(force) {}

    std::ostringstream& add(const std::string& name) {
        const fs::path p = dir_ / name;
        if (fs::exists(p) && !force_)
            throw InputError("refusing to overwrite " + p.string() + " (pass --force)");
        files_.push_back({p, std::make_unique<std::ostringstream>()});
        return *files_.back().second;
    }

    void commit() {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw std::runtime_error("cannot create " + dir_.string() + ": " + ec.message());
        for (auto& [p, buf] : files_) {
            std::ofstream out(p, std::ios::binary | std::ios::trunc);
            out << buf->str();
            if (!out) throw std::runtime_error("write failed: " + p.string());
        }
    }

    std::vector<std::string> paths() const {
        std::vector<std::string> v;
        for (const auto& f : files_) v.push_back(f.first.string());
        return v;
    }

private:
    fs::path dir_;
    bool force_;
    std::vector<std::pair<fs::path, std::unique_ptr<std::ostringstream>>> files_;
};

std::string seed_line(std::uint64_t seed) { return "# seed=" + std::to_string(seed) + "\n"; }

void report_written(const OutputSet& out) {
    for (const auto& p : out.paths()) std::cout << "wrote " << p << "\n";
}

int cmd_train(const Options& o) {
    const ExperimentSpec s = resolve_spec(o);
    const Dataset<double> data = make_dataset(s);
    OutputSet out(s.out_dir, o.force);
    auto& trace_csv = out.add(s.name + "_trace.csv");
    if (o.verbose) std::cerr << "training " << s.name << ": " << s.train.steps << " steps, mu=" << s.train.mu.describe() << "\n";
    const LossTrace<double> trace = train(data, s.model, seeded_train_spec(s));
    trace_csv << seed_line(s.seed);
    write_trace_csv(trace_csv, trace);
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    std::cout << "mu=" << fmt17(trace.mu) << "\n";
    std::cout << "initial_phi=" << fmt17(trace.front().phi) << "\n";
    std::cout << "final_phi=" << fmt17(trace.back().phi) << "\n";
    try {
        const RateFit fit = fit_linear_rate(trace);
        if (fit.already_converged)
            std::cout << "rho=already_converged\n";
        else
            std::cout << "rho=" << fmt17(fit.rho) << "\nr2=" << fmt17(fit.r_squared) << "\n";
    } catch (const std::invalid_argument& e) {
        std::cout << "rho=unavailable (" << e.what() << ")\n";
    }
    report_written(out);
    return kOk;
}

int cmd_grad_check(const Options& o) {
    ExperimentSpec s = resolve_spec(o);
    GradCheckSpec g = s.grad_check;
    if (!o.activation.empty()) {
        if (o.activation == "relu")
            g.activation = Activation::relu();
        else if (o.activation == "smoothed")
            g.activation = Activation::smoothed(g.activation.tau);
        else
            throw InputError("--activation must be relu or smoothed");
        if (!o.tol) g.tol = o.activation == "smoothed" ? 1e-6 : 1e-5;
    }
    if (o.tol) g.tol = *o.tol;
    if (o.configs) g.configs = *o.configs;
    if (!(g.tol > 0.0)) throw InputError("--tol must be > 0");
    if (g.configs < 1) throw InputError("--configs must be >= 1");

    OutputSet out(s.out_dir, o.force);
    auto& txt = out.add("grad_check.txt");
    const CampaignResult res = grad_check_campaign(s.seed, g, s.workers);
    txt << seed_line(s.seed);
    for (std::size_t k = 0; k < res.reports.size(); ++k) txt << "# config " << k << "\n" << res.reports[k].to_text();
    out.commit();

    std::cout << "seed=" << s.seed << "\nactivation=" << g.activation.name() << "\ntol=" << fmt17(g.tol)
              << "\nconfigs=" << g.configs << "\n";
    for (WeightId id : kWeightIds) std::cout << "worst_" << weight_name(id) << "=" << fmt17(res.worst[static_cast<std::size_t>(id)]) << "\n";
    report_written(out);
    if (!res.pass()) {
        for (const auto& r : res.reports)
            if (!r.pass) {
                std::cerr << "grad-check failed (flagged " << weight_name(r.flagged()) << "):\n" << r.to_text();
                break;
            }
        return kRuntimeError;
    }
    std::cout << "pass=true\n";
    return kOk;
}

int cmd_theory(const Options& o) {
    const ExperimentSpec s = resolve_spec(o);
    const Dataset<double> data = make_dataset(s);
    Rng rng(s.seed);
    const Params<double> w0 = init_params<double>(s.train.init, s.model, rng);
    const TheoryReport<double> r = constants(w0, data, s.model);
    OutputSet out(s.out_dir, o.force);
    write_theory_json(out.add(s.name + "_theory.json"), r, s.seed);
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    std::cout << "alpha=" << fmt17(r.alpha) << "\n";
    std::cout << "c_detailed=" << fmt17(r.c_detailed) << "\n";
    std::cout << "c_main=" << fmt17(r.c_main) << " (C_tilde=1)\n";
    std::cout << "mu_theory=" << fmt17(r.mu_theory) << "\n";
    std::cout << "conditioning_ratio=" << fmt17(r.conditioning_ratio) << "\n";
    std::cout << "init_requirement_met=" << (r.init.met ? "true" : "false") << "\n";
    std::cout << "init_lhs=" << fmt17(r.init.lhs) << "\n";
    std::cout << "binding_bound=" << r.init.binding_name() << " value=" << fmt17(r.init.bound) << "\n";
    if (o.verbose)
        for (std::size_t k = 0; k < r.init.bounds.size(); ++k)
            std::cerr << "  bound " << kInitBoundNames[k] << "=" << fmt17(r.init.bounds[k]) << "\n";
    report_written(out);
    return kOk;
}

int cmd_sweep_beta(const Options& o) {
    ExperimentSpec s = resolve_spec(o);
    if (s.sweep.kind == SweepAxis::Kind::none) s.sweep = SweepAxis{SweepAxis::Kind::beta, {0.0, 0.25, 0.5, 0.75, 1.0}};
    if (s.sweep.kind != SweepAxis::Kind::beta) throw InputError("sweep-beta needs sweep.axis = \"beta\"");
    OutputSet out(s.out_dir, o.force);
    auto& traces = out.add(s.name + "_sweep_traces.csv");
    auto& summary = out.add(s.name + "_sweep_summary.csv");
    auto& plot = out.add(s.name + "_sweep_plot.csv");
    const auto pts = run_beta_sweep(s);
    traces << seed_line(s.seed);
    write_sweep_traces_csv(traces, pts);
    summary << seed_line(s.seed);
    write_sweep_summary_csv(summary, pts);
    plot << seed_line(s.seed);
    emit_plot_data(plot, sweep_plot_series(pts));
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    bool failed = false;
    for (const auto& p : pts) {
        std::cout << "beta=" << beta_label(p.beta) << " ratio=" << fmt17(p.conditioning_ratio) << " rho=" << fmt17(p.fit.rho)
                  << " r2=" << fmt17(p.fit.r_squared) << " status=" << p.status << "\n";
        failed = failed || p.status != "ok";
    }
    report_written(out);
    return failed ? kRuntimeError : kOk;
}

int cmd_ablation(const Options& o) {
    const ExperimentSpec s = resolve_spec(o);
    OutputSet out(s.out_dir, o.force);
    auto& paired = out.add(s.name + "_ablation.csv");
    auto& summary = out.add(s.name + "_ablation_summary.csv");
    auto& plot = out.add(s.name + "_ablation_plot.csv");
    const AblationResult a = run_residual_ablation(s);
    paired << seed_line(s.seed);
    write_ablation_csv(paired, a);
    summary << seed_line(s.seed);
    write_ablation_summary(summary, a);
    plot << seed_line(s.seed);
    emit_plot_data(plot, {loss_series("beta=1", a.with_residual.trace), loss_series("beta=0", a.without_residual.trace)});
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    std::cout << "final_phi_beta1=" << fmt17(a.with_residual.trace.back().phi) << "\n";
    std::cout << "final_phi_beta0=" << fmt17(a.without_residual.trace.back().phi) << "\n";
    std::cout << "final_ratio=" << fmt17(a.final_ratio()) << "\n";
    report_written(out);
    return kOk;
}

int cmd_rank_collapse(const Options& o) {
    const ExperimentSpec s = resolve_spec(o);
    OutputSet out(s.out_dir, o.force);
    auto& probes = out.add(s.name + "_probes.csv");
    auto& traces = out.add(s.name + "_traces.csv");
    auto& plot = out.add(s.name + "_plot.csv");
    const RankCollapseDemo demo = run_rank_collapse_demo(s);
    probes << seed_line(s.seed);
    write_probes_csv(probes, demo.probes);
    traces << seed_line(s.seed);
    write_ablation_csv(traces, demo.runs);
    plot << seed_line(s.seed);
    emit_plot_data(plot, {loss_series("beta=1", demo.runs.with_residual.trace),
                          loss_series("beta=0", demo.runs.without_residual.trace)});
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    for (const auto& p : demo.probes)
        if (p.label == "attn") std::cout << "scale=" << fmt17(p.scale) << " attn_ratio=" << fmt17(p.ratio) << "\n";
    std::cout << "beta0_tail_decrease_per_100=" << fmt17(demo.plateau_decrease) << "\n";
    std::cout << "beta1_strictly_decreasing=" << (demo.residual_decreasing ? "true" : "false") << "\n";
    report_written(out);
    return kOk;
}

int cmd_ingest(const Options& o) {
    const ExperimentSpec s = resolve_spec(o);
    if (s.data.kind != DataSource::Kind::csv) throw InputError("ingest needs a spec with data.kind = \"csv\"");
    std::ifstream probe(s.data.csv.path);
    std::size_t rows = 0;
    for (std::string line; std::getline(probe, line);)
        if (!line.empty()) ++rows;
    const Dataset<double> data = make_dataset(s);  // fails unless (M, d, N, P) match the model
    OutputSet out(s.out_dir, o.force);
    auto& csv = out.add(s.name + "_dataset.csv");
    csv << seed_line(s.seed);
    write_dataset_csv(csv, data);
    out.commit();
    std::cout << "seed=" << s.seed << "\n";
    std::cout << "data_rows=" << (rows ? rows - 1 : 0) << "\n";
    std::cout << "P=" << data.size() << " M=" << data.xs.front().rows() << " d=" << data.xs.front().cols()
              << " N=" << data.ys.front().cols() << "\n";
    report_written(out);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-layer transformer: gradients, GD training and convergence theory"};
    app.require_subcommand(1);
    Options o;
    std::vector<std::pair<CLI::App*, std::function<int(const Options&)>>> cmds;
    auto add = [&](const char* name, const char* desc, std::function<int(const Options&)> fn) {
        CLI::App* sub = app.add_subcommand(name, desc);
        add_common(sub, o);
        cmds.emplace_back(sub, std::move(fn));
        return sub;
    };
    add("train", "Train with gradient descent and write the loss trace", cmd_train);
    CLI::App* gc = add("grad-check", "Compare analytic gradients with central differences over random configs",
                       cmd_grad_check);
    gc->add_option("--activation", o.activation, "relu (default tol 1e-5) or smoothed (default tol 1e-6)")
        ->check(CLI::IsMember({"relu", "smoothed"}));
    gc->add_option("--configs", o.configs, "Number of random configurations (default 20)");
    add("theory", "Evaluate alpha, C, mu_theory and the initialization requirement at theta^(0)", cmd_theory);
    add("sweep-beta", "Train one model per residual coefficient beta", cmd_sweep_beta);
    add("rank-collapse", "Spectral probes over logit scales plus paired runs at uniform attention",
        cmd_rank_collapse);
    add("ablation", "Paired runs with (beta=1) and without (beta=0) the residual", cmd_ablation);
    add("ingest", "Window a CSV time series into a dataset", cmd_ingest);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kInputError;
    }
    try {
        for (auto& [sub, fn] : cmds)
            if (sub->parsed()) return fn(o);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kInputError;
    } catch (const TrainingAborted& e) {
        std::cerr << "error: " << e.what() << " (" << e.trace().records.size() << " finite records)\n";
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeError;
    }
    return kInputError;
}
