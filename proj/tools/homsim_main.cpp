#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "homsim/config.hpp"
#include "homsim/errors.hpp"
#include "homsim/fitting.hpp"
#include "homsim/histogram.hpp"
#include "homsim/io.hpp"
#include "homsim/montecarlo.hpp"
#include "homsim/rng.hpp"

namespace {

using namespace homsim;

std::string resolve_out_dir(const std::string& flag_dir, const std::string& config_dir) {
    if (!flag_dir.empty()) return flag_dir;
    if (!config_dir.empty()) return config_dir;
    if (const char* env = std::getenv("HOMSIM_OUT_DIR"); env && *env) return env;
    return ".";
}

std::string ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw NumericError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- simulate ----

struct SimulateOpts {
    std::string config_path;
    std::string out_dir;
    std::string format;
    std::string basename;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
};

nlohmann::json run_record(const ExperimentConfig& cfg, const PeakAreas& areas,
                          const NormalizedProbability& p, std::size_t n_events) {
    const double kappa =
        2.0 * cfg.sim.bs.r * cfg.sim.bs.t / (1.0 - 2.0 * cfg.sim.bs.r * cfg.sim.bs.t);
    nlohmann::json rec;
    rec["fingerprint"] = config_fingerprint(cfg, cfg.sim.seed);
    rec["seed"] = cfg.sim.seed;
    rec["scheme"] = scheme_label(cfg.scheme);
    rec["n_pulse_pairs"] = cfg.sim.n_pulse_pairs;
    rec["n_events"] = n_events;
    rec["geometry"] = {{"pump_delay_ps", cfg.sim.geometry.pump_delay_ps},
                       {"hom_delay_ps", cfg.sim.geometry.hom_delay_ps},
                       {"rep_period_ps", cfg.sim.geometry.rep_period_ps},
                       {"integration_halfwidth_ps", cfg.sim.geometry.integration_halfwidth_ps}};
    rec["areas"] = peak_areas_to_json(areas);
    rec["p_opposite"] = p.value;
    rec["sigma"] = p.sigma;
    // mean squared overlap implied by p at this splitter, valid at the
    // geometry's pulse mismatch pump - hom
    rec["overlap_estimate"] = (1.0 - 2.0 * p.value) / kappa;
    rec["config"] = config_to_json(cfg);
    return rec;
}

int cmd_simulate(const SimulateOpts& opt) {
    ExperimentConfig cfg = parse_config_file(opt.config_path);
    if (opt.seed_set) cfg.sim.seed = opt.seed;
    if (!opt.format.empty()) {
        if (opt.format != "text" && opt.format != "csv" && opt.format != "binary")
            throw ConfigError("--format must be text, csv or binary");
        cfg.output.format = opt.format;
    }
    if (!opt.basename.empty()) cfg.output.basename = opt.basename;
    const std::string dir = ensure_dir(resolve_out_dir(opt.out_dir, cfg.output.dir));

    const auto t0 = std::chrono::steady_clock::now();
    const auto events = generate_event_stream(cfg.sim, opt.jobs);
    std::printf("simulated %lld pulse pairs -> %zu events in %.2f s\n",
                static_cast<long long>(cfg.sim.n_pulse_pairs), events.size(), elapsed_s(t0));

    const auto hist = build_histogram(events, cfg.bin_width_ps, cfg.histogram_range_ps);
    const auto areas = integrate_peaks(hist, cfg.sim.geometry);
    const auto p = normalized_opposite_probability(areas);

    const std::string fp = config_fingerprint(cfg, cfg.sim.seed);
    const std::vector<std::string> header{"homsim run " + fp,
                                          "seed " + std::to_string(cfg.sim.seed)};
    const std::string base = cfg.output.basename;
    std::string events_path;
    if (cfg.output.format == "binary") {
        events_path = join(dir, base + "_events.bin");
        write_events_binary(events_path, events);
    } else if (cfg.output.format == "csv") {
        events_path = join(dir, base + "_events.csv");
        write_events_text(events_path, events, header, ',');
    } else {
        events_path = join(dir, base + "_events.txt");
        write_events_text(events_path, events, header, ' ');
    }
    const std::string hist_path = join(dir, base + "_histogram.txt");
    write_histogram_text(hist_path, hist, header);
    const std::string rec_path = join(dir, base + "_record.json");
    write_json(rec_path, run_record(cfg, areas, p, events.size()));

    std::printf("p_opposite = %.6f +- %.6f  (A=%lld B=%lld C=%lld)\n", p.value, p.sigma,
                static_cast<long long>(areas.a), static_cast<long long>(areas.b1 + areas.b2),
                static_cast<long long>(areas.c_minus + areas.c_plus));
    std::printf("wrote %s\n", events_path.c_str());
    std::printf("wrote %s\n", hist_path.c_str());
    std::printf("wrote %s\n", rec_path.c_str());
    return 0;
}

// ---- sweep ----

struct SweepOpts {
    std::string config_path;
    std::string param;
    std::string out_dir;
    std::vector<double> values;
    double from = 0.0;
    double to = 0.0;
    int steps = 0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 1;
};

std::vector<double> sweep_values(const SweepOpts& opt) {
    if (!opt.values.empty()) {
        if (opt.steps != 0) throw ConfigError("give --values or --from/--to/--steps, not both");
        return opt.values;
    }
    if (opt.steps < 2) throw ConfigError("--steps must be at least 2 when using --from/--to");
    std::vector<double> v(static_cast<std::size_t>(opt.steps));
    for (int i = 0; i < opt.steps; ++i)
        v[static_cast<std::size_t>(i)] =
            opt.from + (opt.to - opt.from) * static_cast<double>(i) /
                           static_cast<double>(opt.steps - 1);
    return v;
}

// applies one sweep point to a copy of the base config
ExperimentConfig apply_sweep_param(const ExperimentConfig& base, const std::string& param,
                                   double v) {
    ExperimentConfig c = base;
    if (param == "optics.delay_offset_ps") {
        c.sim.geometry.pump_delay_ps = c.sim.geometry.hom_delay_ps + v;
    } else if (param == "emitter.jitter.sigma_ps") {
        c.sim.emitter.jitter =
            v > 0.0 ? make_jitter(JitterKind::Gaussian, v) : JitterModel{};
        c.scheme.reset();
    } else if (param == "emitter.pulse_duration_ps") {
        // longer pump pulses smear the preparation instant
        c.sim.emitter.jitter =
            v > 0.0 ? make_jitter(JitterKind::Gaussian, v) : JitterModel{};
        if (c.scheme) c.scheme->pulse_duration_ps = std::max(v, 1e-3);
    } else if (param == "emitter.detuning_ghz") {
        const double bw = 50.0;
        c.sim.incoherent_fraction = -std::expm1(-v * v / (2.0 * bw * bw));
    } else if (param == "shaping.gate.fwhm_ps") {
        TemporalGate g = c.sim.gate.value_or(TemporalGate{});
        c.sim.gate = make_gate(v, g.delay_ps, g.peak_transmission);
    } else if (param == "shaping.gate.delay_ps") {
        TemporalGate g = c.sim.gate.value_or(TemporalGate{});
        c.sim.gate = make_gate(g.fwhm_ps, v, g.peak_transmission);
    } else {
        throw ConfigError(
            "unknown sweep parameter " + param +
            " (expected one of optics.delay_offset_ps, emitter.jitter.sigma_ps, "
            "emitter.pulse_duration_ps, emitter.detuning_ghz, shaping.gate.fwhm_ps, "
            "shaping.gate.delay_ps)");
    }
    validate_simulation_config(c.sim);
    return c;
}

int cmd_sweep(const SweepOpts& opt) {
    ExperimentConfig base = parse_config_file(opt.config_path);
    if (opt.seed_set) base.sim.seed = opt.seed;
    const auto values = sweep_values(opt);
    const std::string dir = ensure_dir(resolve_out_dir(opt.out_dir, base.output.dir));

    const bool is_delay = opt.param == "optics.delay_offset_ps";
    const bool is_gate_delay = opt.param == "shaping.gate.delay_ps";
    const std::string extra_name = is_delay        ? "p_model"
                                   : is_gate_delay ? "t1_eff_ps"
                                                   : "one_minus_2p";

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<SweepRow> rows;
    rows.reserve(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        ExperimentConfig point = apply_sweep_param(base, opt.param, values[i]);
        point.sim.seed = RngStream(base.sim.seed, i, rng_tag::kSweepSeed).next_u64();
        const auto events = generate_event_stream(point.sim, opt.jobs);
        const auto hist = build_histogram(events, point.bin_width_ps, point.histogram_range_ps);
        const auto p = normalized_opposite_probability(integrate_peaks(hist, point.sim.geometry));

        SweepRow row{values[i], p.value, p.sigma, 0.0};
        if (is_delay) {
            row.extra = coincidence_probability(values[i], point.sim.emitter, point.sim.bs);
        } else if (is_gate_delay) {
            // lifetime seen through the gate, from a source-side arrival stream
            const auto arrivals = generate_arrival_stream(
                point.sim.emitter, point.sim.geometry.rep_period_ps, point.sim.n_pulse_pairs,
                point.sim.seed, point.sim.gate ? &*point.sim.gate : nullptr);
            std::vector<double> t_rel;
            t_rel.reserve(arrivals.size());
            for (const auto& ev : arrivals)
                t_rel.push_back(ev.timestamp_ps - static_cast<double>(ev.pulse_index) *
                                                      point.sim.geometry.rep_period_ps);
            if (t_rel.size() >= 100) row.extra = fit_exponential_lifetime(std::move(t_rel)).t1_ps;
        } else {
            row.extra = 1.0 - 2.0 * p.value;
        }
        rows.push_back(row);
        std::printf("point %zu/%zu: %s = %.6g -> p = %.6f +- %.6f\n", i + 1, values.size(),
                    opt.param.c_str(), values[i], p.value, p.sigma);
    }

    std::vector<std::string> footer;
    if (is_delay && rows.size() >= 4) {
        FitProblem prob;
        CurveDataset ds;
        for (const auto& r : rows) {
            ds.tau_ps.push_back(r.value);
            ds.p.push_back(r.p);
            ds.sigma.push_back(r.sigma);
        }
        prob.datasets = {std::move(ds)};
        prob.bs = base.sim.bs;
        char buf[160];
        try {
            const auto fit = fit_coincidence_curve(prob);
            std::snprintf(buf, sizeof buf, "fit t1_ps %.9g +- %.3g", fit.t1_ps[0],
                          fit.t1_err_ps[0]);
            footer.emplace_back(buf);
            std::snprintf(buf, sizeof buf, "fit t2_ps %.9g +- %.3g", fit.t2_ps[0],
                          fit.t2_err_ps[0]);
            footer.emplace_back(buf);
            std::snprintf(buf, sizeof buf, "fit ratio %.9g +- %.3g", fit.ratio[0],
                          fit.ratio_err[0]);
            footer.emplace_back(buf);
            std::snprintf(buf, sizeof buf, "fit chi2_reduced %.6g converged %d",
                          fit.chi2_reduced, fit.converged ? 1 : 0);
            footer.emplace_back(buf);
        } catch (const std::exception& e) {
            footer.emplace_back(std::string("fit failed: ") + e.what());
        }
    }

    std::string fname = "sweep_" + opt.param;
    std::replace(fname.begin(), fname.end(), '.', '_');
    const std::string path = join(dir, base.output.basename + "_" + fname + ".csv");
    const std::vector<std::string> header{
        "homsim sweep " + config_fingerprint(base, base.sim.seed), "param " + opt.param,
        "base_seed " + std::to_string(base.sim.seed)};
    write_sweep_csv(path, header, "value,p,sigma," + extra_name, rows, footer);
    std::printf("swept %zu points in %.2f s\n", values.size(), elapsed_s(t0));
    std::printf("wrote %s\n", path.c_str());
    return 0;
}

// ---- fit ----

struct FitOpts {
    std::vector<std::string> data;
    std::string model = "analytic";
    double irf_fwhm = 0.0;
    double r = 0.5;
    double t = 0.5;
    double t1_upper = 1.0e5;
    bool no_share_t2 = false;
    int bootstrap = 0;
    std::uint64_t seed = 0;
    bool dip = false;
    std::string dip_mode = "parallel";
    bool fit_floor = false;
};

int cmd_fit(const FitOpts& opt) {
    if (opt.data.empty()) throw ConfigError("fit needs at least one --data table");

    if (opt.dip) {
        if (opt.data.size() != 1) throw ConfigError("dip fit takes exactly one --data table");
        if (!(opt.irf_fwhm > 0.0)) throw ConfigError("dip fit requires --irf-fwhm");
        DipMode mode;
        if (opt.dip_mode == "parallel")
            mode = DipMode::Parallel;
        else if (opt.dip_mode == "orthogonal")
            mode = DipMode::Orthogonal;
        else
            throw ConfigError("--mode must be parallel or orthogonal");
        const CurveDataset raw = read_sweep_csv(opt.data[0]);
        DipDataset d{raw.tau_ps, raw.p, raw.sigma};
        const auto fit = fit_dip_shape(d, make_irf(opt.irf_fwhm), mode, opt.fit_floor);
        std::printf("dip fit (%s), %zu points\n", opt.dip_mode.c_str(), d.dt_ps.size());
        std::printf("  t1_ps        %12.6g +- %.4g\n", fit.t1_ps, fit.t1_err_ps);
        if (mode == DipMode::Parallel) {
            std::printf("  t2_ps        %12.6g +- %.4g\n", fit.t2_ps, fit.t2_err_ps);
            std::printf("  weight       %12.6g +- %.4g\n", fit.weight, fit.weight_err);
        }
        std::printf("  amplitude    %12.6g +- %.4g\n", fit.amplitude, fit.amplitude_err);
        if (opt.fit_floor)
            std::printf("  floor        %12.6g +- %.4g\n", fit.floor_counts, fit.floor_err);
        std::printf("  chi2_reduced %12.6g\n", fit.chi2_reduced);
        std::printf("  converged    %12s (%d iterations)\n", fit.converged ? "yes" : "no",
                    fit.n_iterations);
        return fit.converged ? 0 : 2;
    }

    FitProblem prob;
    for (const auto& path : opt.data) prob.datasets.push_back(read_sweep_csv(path));
    if (opt.model == "analytic") {
        prob.model = CoincidenceModel::Analytic;
    } else if (opt.model == "convolved-irf") {
        prob.model = CoincidenceModel::AnalyticWithIrf;
        if (!(opt.irf_fwhm > 0.0))
            throw ConfigError("--model convolved-irf requires --irf-fwhm");
    } else {
        throw ConfigError("--model must be analytic or convolved-irf");
    }
    if (opt.irf_fwhm > 0.0) prob.irf = make_irf(opt.irf_fwhm);
    prob.bs = make_beamsplitter(opt.r, opt.t);
    prob.share_t2 = !opt.no_share_t2;
    prob.t1_upper_ps = opt.t1_upper;

    const auto fit = fit_coincidence_curve(prob);
    std::printf("coincidence fit, %zu dataset(s), %d parameter(s)\n", prob.datasets.size(),
                fit_parameter_count(prob));
    for (std::size_t i = 0; i < prob.datasets.size(); ++i) {
        std::printf("  [%zu] %s\n", i, opt.data[i].c_str());
        std::printf("      t1_ps  %12.6g +- %.4g\n", fit.t1_ps[i], fit.t1_err_ps[i]);
        const std::size_t ti = fit.t2_ps.size() == 1 ? 0 : i;
        std::printf("      t2_ps  %12.6g +- %.4g%s\n", fit.t2_ps[ti], fit.t2_err_ps[ti],
                    fit.t2_ps.size() == 1 && prob.datasets.size() > 1 ? " (shared)" : "");
        std::printf("      ratio  %12.6g +- %.4g\n", fit.ratio[i], fit.ratio_err[i]);
    }
    std::printf("  chi2_reduced %12.6g\n", fit.chi2_reduced);
    std::printf("  converged    %12s (%d iterations)\n", fit.converged ? "yes" : "no",
                fit.n_iterations);

    if (opt.bootstrap > 0) {
        const auto boot = bootstrap_coincidence_fit(prob, opt.bootstrap, opt.seed);
        std::printf("  bootstrap (%d resamples, seed %llu)\n", boot.n_resamples,
                    static_cast<unsigned long long>(opt.seed));
        for (std::size_t i = 0; i < boot.t1_sd_ps.size(); ++i)
            std::printf("      t1_sd_ps[%zu] %10.4g\n", i, boot.t1_sd_ps[i]);
        for (std::size_t i = 0; i < boot.t2_sd_ps.size(); ++i)
            std::printf("      t2_sd_ps[%zu] %10.4g\n", i, boot.t2_sd_ps[i]);
    }
    return fit.converged ? 0 : 2;
}

// ---- report ----

int cmd_report(const std::vector<std::string>& records) {
    if (records.empty()) throw ConfigError("report needs at least one --records file");
    std::printf("%-28s %-28s %10s %10s %10s %10s %10s\n", "record", "scheme", "t1_in", "t2_in",
                "p_opp", "sigma", "overlap");
    bool mismatched_delay = false;
    std::vector<nlohmann::json> loaded;
    for (const auto& path : records) {
        const auto j = read_json(path);
        for (const char* key : {"scheme", "p_opposite", "sigma", "overlap_estimate", "geometry",
                                "config"})
            if (!j.contains(key))
                throw NumericError(path + " is not a homsim run record (missing " +
                                   std::string(key) + ")");
        const auto& g = j.at("geometry");
        const double mismatch = std::fabs(g.at("pump_delay_ps").get<double>() -
                                          g.at("hom_delay_ps").get<double>());
        if (mismatch > 1e-6) mismatched_delay = true;
        const auto& e = j.at("config").at("emitter");
        const std::string name = std::filesystem::path(path).filename().string();
        std::printf("%-28s %-28s %10.4g %10.4g %10.6f %10.6f %10.4f\n", name.c_str(),
                    j.at("scheme").get<std::string>().c_str(), e.at("t1_ps").get<double>(),
                    e.at("t2_ps").get<double>(), j.at("p_opposite").get<double>(),
                    j.at("sigma").get<double>(), j.at("overlap_estimate").get<double>());
        loaded.push_back(j);
    }
    if (mismatched_delay)
        std::printf("note: at least one record has pump_delay != hom_delay; its overlap "
                    "estimate refers to that pulse mismatch, not to zero delay\n");
    for (std::size_t i = 1; i < loaded.size(); ++i) {
        if (loaded[i].at("geometry") != loaded[0].at("geometry")) {
            std::printf("warning: records use differing interferometer geometries; "
                        "overlap estimates are not directly comparable\n");
            break;
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pulsed two-photon interference simulator and analysis toolkit"};
    app.require_subcommand(1);

    SimulateOpts sim_opt;
    auto* sim = app.add_subcommand("simulate", "run the event-stream simulation");
    sim->add_option("--config", sim_opt.config_path, "experiment config (JSON)")
        ->required();
    auto* sim_seed = sim->add_option("--seed", sim_opt.seed, "override run.seed");
    sim->add_option("--out", sim_opt.out_dir, "output directory");
    sim->add_option("--format", sim_opt.format, "event payload format: text, csv or binary");
    sim->add_option("--basename", sim_opt.basename, "output file basename");
    sim->add_option("--jobs", sim_opt.jobs, "worker threads")->check(CLI::Range(1, 256));

    SweepOpts sweep_opt;
    auto* sweep = app.add_subcommand("sweep", "sweep one parameter and tabulate p");
    sweep->add_option("--config", sweep_opt.config_path, "experiment config (JSON)")
        ->required();
    sweep->add_option("--param", sweep_opt.param, "parameter to sweep")->required();
    sweep->add_option("--values", sweep_opt.values, "explicit sweep values")
        ->delimiter(',');
    sweep->add_option("--from", sweep_opt.from, "sweep range start");
    sweep->add_option("--to", sweep_opt.to, "sweep range end");
    sweep->add_option("--steps", sweep_opt.steps, "number of evenly spaced points");
    auto* sweep_seed = sweep->add_option("--seed", sweep_opt.seed, "override run.seed");
    sweep->add_option("--out", sweep_opt.out_dir, "output directory");
    sweep->add_option("--jobs", sweep_opt.jobs, "worker threads")->check(CLI::Range(1, 256));

    FitOpts fit_opt;
    auto* fit = app.add_subcommand("fit", "fit coincidence curves or dip shapes");
    fit->add_option("--data", fit_opt.data, "input table(s), CSV or whitespace");
    fit->add_option("--model", fit_opt.model, "analytic or convolved-irf");
    fit->add_option("--irf-fwhm", fit_opt.irf_fwhm, "detector response FWHM in ps");
    fit->add_option("--r", fit_opt.r, "splitter reflectance");
    fit->add_option("--t", fit_opt.t, "splitter transmittance");
    fit->add_option("--t1-upper", fit_opt.t1_upper, "upper bound for T1 in ps");
    fit->add_flag("--no-share-t2", fit_opt.no_share_t2, "fit one T2 per dataset");
    fit->add_option("--bootstrap", fit_opt.bootstrap, "residual-resampling repetitions");
    fit->add_option("--seed", fit_opt.seed, "bootstrap seed");
    fit->add_flag("--dip", fit_opt.dip, "fit a time-resolved dip shape instead");
    fit->add_option("--mode", fit_opt.dip_mode, "dip mode: parallel or orthogonal");
    fit->add_flag("--fit-floor", fit_opt.fit_floor, "free a constant background level");

    std::vector<std::string> report_files;
    auto* report = app.add_subcommand("report", "tabulate run records");
    report->add_option("--records", report_files, "record JSON files")->required();

    try {
        app.parse(argc, argv);
        sim_opt.seed_set = sim_seed->count() > 0;
        sweep_opt.seed_set = sweep_seed->count() > 0;
        if (sim->parsed()) return cmd_simulate(sim_opt);
        if (sweep->parsed()) return cmd_sweep(sweep_opt);
        if (fit->parsed()) return cmd_fit(fit_opt);
        if (report->parsed()) return cmd_report(report_files);
        return 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
