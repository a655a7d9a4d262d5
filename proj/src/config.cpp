#include "homsim/config.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <string>

namespace homsim {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::string& path,
                    std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) known = true;
        if (!known) throw ConfigError("unknown config key: " + path + "." + item.key());
    }
}

double as_number(const json& v, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    return v.get<double>();
}

double get_number(const json& obj, const std::string& path, const std::string& key,
                  double fallback) {
    if (!obj.contains(key)) return fallback;
    return as_number(obj.at(key), path + "." + key);
}

double require_number(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) throw ConfigError("missing required config key: " + path + "." + key);
    return as_number(obj.at(key), path + "." + key);
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) throw ConfigError(path + "." + key + " must be a boolean");
    return obj.at(key).get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) throw ConfigError(path + "." + key + " must be a string");
    return obj.at(key).get<std::string>();
}

// time field given as either <base>_ps or <base>_ns
double time_field_ps(const json& obj, const std::string& path, const std::string& base,
                     double fallback, bool required = false) {
    const std::string kps = base + "_ps";
    const std::string kns = base + "_ns";
    const bool hps = obj.contains(kps);
    const bool hns = obj.contains(kns);
    if (hps && hns)
        throw ConfigError(path + ": give " + kps + " or " + kns + ", not both");
    if (hps) return as_number(obj.at(kps), path + "." + kps);
    if (hns) return 1e3 * as_number(obj.at(kns), path + "." + kns);
    if (required) throw ConfigError("missing required config key: " + path + "." + kps);
    return fallback;
}

JitterModel parse_jitter(const json& obj, const std::string& path) {
    reject_unknown(obj, path, {"kind", "sigma_ps", "tau_ps"});
    const std::string kind = get_string(obj, path, "kind", "");
    if (kind == "none") return {};
    if (kind == "gaussian")
        return make_jitter(JitterKind::Gaussian, require_number(obj, path, "sigma_ps"));
    if (kind == "exponential")
        return make_jitter(JitterKind::Exponential, require_number(obj, path, "tau_ps"));
    throw ConfigError(path + ".kind must be one of none, gaussian, exponential");
}

ExcitationScheme parse_scheme(const json& obj, const std::string& path) {
    reject_unknown(obj, path, {"kind", "transition", "pulse_duration_ps", "above_band_sigma_ps"});
    ExcitationScheme s;
    const std::string kind = get_string(obj, path, "kind", "");
    if (kind == "above_band")
        s.kind = SchemeKind::AboveBand;
    else if (kind == "quasi_resonant")
        s.kind = SchemeKind::QuasiResonant;
    else if (kind == "two_photon_resonant")
        s.kind = SchemeKind::TwoPhotonResonant;
    else
        throw ConfigError(path +
                          ".kind must be one of above_band, quasi_resonant, two_photon_resonant");
    const std::string tr = get_string(obj, path, "transition", "exciton");
    if (tr == "exciton")
        s.transition = Transition::Exciton;
    else if (tr == "biexciton")
        s.transition = Transition::Biexciton;
    else
        throw ConfigError(path + ".transition must be exciton or biexciton");
    s.pulse_duration_ps = get_number(obj, path, "pulse_duration_ps", s.pulse_duration_ps);
    s.above_band_sigma_ps = get_number(obj, path, "above_band_sigma_ps", s.above_band_sigma_ps);
    if (!(s.pulse_duration_ps > 0.0))
        throw ConfigError(path + ".pulse_duration_ps must be positive");
    if (!(s.above_band_sigma_ps > 0.0))
        throw ConfigError(path + ".above_band_sigma_ps must be positive");
    return s;
}

const char* jitter_kind_name(JitterKind k) {
    switch (k) {
        case JitterKind::None:
            return "none";
        case JitterKind::Gaussian:
            return "gaussian";
        case JitterKind::Exponential:
            return "exponential";
    }
    return "none";
}

const char* interference_name(InterferenceMode m) {
    switch (m) {
        case InterferenceMode::Auto:
            return "auto";
        case InterferenceMode::ForceDistinguishable:
            return "distinguishable";
        case InterferenceMode::ForcePerfect:
            return "perfect";
    }
    return "auto";
}

}  // namespace

ExperimentConfig parse_config_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    reject_unknown(j, "$", {"emitter", "optics", "run", "shaping", "output"});
    if (!j.contains("emitter") || !j.contains("run"))
        throw ConfigError("config requires the emitter and run sections");

    ExperimentConfig cfg;
    bool has_detuning = false;

    {
        const json& e = j.at("emitter");
        reject_unknown(e, "emitter",
                       {"t1_ps", "t1_ns", "t2_ps", "t2_ns", "efficiency", "jitter", "scheme",
                        "detuning_ghz", "detuning_bandwidth_ghz"});
        const double t1 = time_field_ps(e, "emitter", "t1", 0.0, true);
        const double t2 = time_field_ps(e, "emitter", "t2", 0.0, true);
        const double eff = get_number(e, "emitter", "efficiency", 1.0);
        JitterModel jit;
        if (e.contains("jitter") && e.contains("scheme"))
            throw ConfigError("emitter: give jitter or scheme, not both");
        if (e.contains("scheme")) {
            cfg.scheme = parse_scheme(e.at("scheme"), "emitter.scheme");
            jit = scheme_default_jitter(*cfg.scheme);
        } else if (e.contains("jitter")) {
            jit = parse_jitter(e.at("jitter"), "emitter.jitter");
        }
        cfg.sim.emitter = make_emitter(t1, t2, jit, eff);

        if (e.contains("detuning_ghz")) {
            // spectral detuning mapped onto a distinguishable-photon fraction
            // (qualitative knob for sweeps)
            const double det = as_number(e.at("detuning_ghz"), "emitter.detuning_ghz");
            const double bw = get_number(e, "emitter", "detuning_bandwidth_ghz", 50.0);
            if (!(bw > 0.0)) throw ConfigError("emitter.detuning_bandwidth_ghz must be positive");
            cfg.sim.incoherent_fraction = -std::expm1(-det * det / (2.0 * bw * bw));
            has_detuning = true;
        } else if (e.contains("detuning_bandwidth_ghz")) {
            throw ConfigError("emitter.detuning_bandwidth_ghz requires emitter.detuning_ghz");
        }
    }

    if (j.contains("optics")) {
        const json& o = j.at("optics");
        reject_unknown(o, "optics",
                       {"reflectance", "transmittance", "pump_delay_ps", "pump_delay_ns",
                        "hom_delay_ps", "hom_delay_ns", "rep_period_ps", "rep_period_ns",
                        "rep_rate_mhz"});
        const double r = get_number(o, "optics", "reflectance", 0.5);
        const double t = get_number(o, "optics", "transmittance", 1.0 - r);
        cfg.sim.bs = make_beamsplitter(r, t);

        const double pump = time_field_ps(o, "optics", "pump_delay", 3000.0);
        const double hom = time_field_ps(o, "optics", "hom_delay", 3000.0);
        double rep = 1.0e6 / 81.0;
        const bool has_rate = o.contains("rep_rate_mhz");
        const bool has_period = o.contains("rep_period_ps") || o.contains("rep_period_ns");
        if (has_rate && has_period)
            throw ConfigError("optics: give rep_rate_mhz or rep_period, not both");
        if (has_rate) {
            const double mhz = as_number(o.at("rep_rate_mhz"), "optics.rep_rate_mhz");
            if (!(mhz > 0.0)) throw ConfigError("optics.rep_rate_mhz must be positive");
            rep = 1.0e6 / mhz;
        } else if (has_period) {
            rep = time_field_ps(o, "optics", "rep_period", rep);
        }
        cfg.sim.geometry.pump_delay_ps = pump;
        cfg.sim.geometry.hom_delay_ps = hom;
        cfg.sim.geometry.rep_period_ps = rep;
    }

    {
        const json& r = j.at("run");
        reject_unknown(r, "run",
                       {"n_pulse_pairs", "seed", "bin_width_ps", "integration_halfwidth_ps",
                        "integration_halfwidth_ns", "histogram_range_ps", "histogram_range_ns",
                        "time_grid_step_ps", "dark_count_rate_hz", "interference",
                        "poissonian_source", "mean_photons_per_pulse", "incoherent_fraction"});
        const double n = require_number(r, "run", "n_pulse_pairs");
        if (!(n >= 1.0) || n != std::floor(n))
            throw ConfigError("run.n_pulse_pairs must be a positive integer");
        cfg.sim.n_pulse_pairs = static_cast<std::int64_t>(n);
        const double seed = get_number(r, "run", "seed", 0.0);
        if (seed < 0.0 || seed != std::floor(seed))
            throw ConfigError("run.seed must be a non-negative integer");
        cfg.sim.seed = static_cast<std::uint64_t>(seed);
        cfg.bin_width_ps = get_number(r, "run", "bin_width_ps", cfg.bin_width_ps);
        cfg.sim.geometry.integration_halfwidth_ps =
            time_field_ps(r, "run", "integration_halfwidth", 1000.0);
        cfg.histogram_range_ps = time_field_ps(r, "run", "histogram_range", 20000.0);
        cfg.sim.time_grid_step_ps = get_number(r, "run", "time_grid_step_ps", 0.0);
        cfg.sim.dark_count_rate_hz = get_number(r, "run", "dark_count_rate_hz", 0.0);
        const std::string mode = get_string(r, "run", "interference", "auto");
        if (mode == "auto")
            cfg.sim.interference = InterferenceMode::Auto;
        else if (mode == "distinguishable")
            cfg.sim.interference = InterferenceMode::ForceDistinguishable;
        else if (mode == "perfect")
            cfg.sim.interference = InterferenceMode::ForcePerfect;
        else
            throw ConfigError("run.interference must be auto, distinguishable or perfect");
        cfg.sim.poissonian_source = get_bool(r, "run", "poissonian_source", false);
        cfg.sim.mean_photons_per_pulse =
            get_number(r, "run", "mean_photons_per_pulse", cfg.sim.mean_photons_per_pulse);
        if (r.contains("incoherent_fraction")) {
            if (has_detuning)
                throw ConfigError(
                    "run.incoherent_fraction conflicts with emitter.detuning_ghz");
            cfg.sim.incoherent_fraction =
                as_number(r.at("incoherent_fraction"), "run.incoherent_fraction");
        }
    }

    if (j.contains("shaping")) {
        const json& s = j.at("shaping");
        reject_unknown(s, "shaping", {"gate", "irf"});
        if (s.contains("gate")) {
            const json& g = s.at("gate");
            reject_unknown(g, "shaping.gate", {"fwhm_ps", "delay_ps", "peak_transmission"});
            cfg.sim.gate = make_gate(require_number(g, "shaping.gate", "fwhm_ps"),
                                     get_number(g, "shaping.gate", "delay_ps", 0.0),
                                     get_number(g, "shaping.gate", "peak_transmission", 1.0));
        }
        if (s.contains("irf")) {
            const json& g = s.at("irf");
            reject_unknown(g, "shaping.irf", {"fwhm_ps"});
            cfg.sim.irf = make_irf(require_number(g, "shaping.irf", "fwhm_ps"));
        }
    }

    if (j.contains("output")) {
        const json& o = j.at("output");
        reject_unknown(o, "output", {"dir", "format", "basename"});
        cfg.output.dir = get_string(o, "output", "dir", "");
        cfg.output.format = get_string(o, "output", "format", "text");
        cfg.output.basename = get_string(o, "output", "basename", "run");
        if (cfg.output.format != "text" && cfg.output.format != "csv" &&
            cfg.output.format != "binary")
            throw ConfigError("output.format must be text, csv or binary");
    }

    // geometry and composite invariants surface here, with the run's own values
    validate_simulation_config(cfg.sim);
    if (!(cfg.bin_width_ps > 0.0)) throw ConfigError("run.bin_width_ps must be positive");
    if (!(cfg.histogram_range_ps > 0.0))
        throw ConfigError("run.histogram_range_ps must be positive");
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_config_json(j);
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    json e{{"t1_ps", c.sim.emitter.t1_ps},
           {"t2_ps", c.sim.emitter.t2_ps},
           {"efficiency", c.sim.emitter.efficiency}};
    if (c.scheme) {
        const char* kind = c.scheme->kind == SchemeKind::AboveBand ? "above_band"
                           : c.scheme->kind == SchemeKind::QuasiResonant
                               ? "quasi_resonant"
                               : "two_photon_resonant";
        e["scheme"] = {{"kind", kind},
                       {"transition",
                        c.scheme->transition == Transition::Exciton ? "exciton" : "biexciton"},
                       {"pulse_duration_ps", c.scheme->pulse_duration_ps},
                       {"above_band_sigma_ps", c.scheme->above_band_sigma_ps}};
    } else {
        json jit{{"kind", jitter_kind_name(c.sim.emitter.jitter.kind)}};
        if (c.sim.emitter.jitter.kind == JitterKind::Gaussian)
            jit["sigma_ps"] = c.sim.emitter.jitter.scale_ps;
        if (c.sim.emitter.jitter.kind == JitterKind::Exponential)
            jit["tau_ps"] = c.sim.emitter.jitter.scale_ps;
        e["jitter"] = jit;
    }

    json o{{"reflectance", c.sim.bs.r},
           {"transmittance", c.sim.bs.t},
           {"pump_delay_ps", c.sim.geometry.pump_delay_ps},
           {"hom_delay_ps", c.sim.geometry.hom_delay_ps},
           {"rep_period_ps", c.sim.geometry.rep_period_ps}};

    json r{{"n_pulse_pairs", c.sim.n_pulse_pairs},
           {"seed", c.sim.seed},
           {"bin_width_ps", c.bin_width_ps},
           {"integration_halfwidth_ps", c.sim.geometry.integration_halfwidth_ps},
           {"histogram_range_ps", c.histogram_range_ps},
           {"time_grid_step_ps", c.sim.time_grid_step_ps},
           {"dark_count_rate_hz", c.sim.dark_count_rate_hz},
           {"interference", interference_name(c.sim.interference)},
           {"poissonian_source", c.sim.poissonian_source},
           {"mean_photons_per_pulse", c.sim.mean_photons_per_pulse},
           {"incoherent_fraction", c.sim.incoherent_fraction}};

    json root{{"emitter", e}, {"optics", o}, {"run", r}};
    if (c.sim.gate || c.sim.irf) {
        json s = json::object();
        if (c.sim.gate)
            s["gate"] = {{"fwhm_ps", c.sim.gate->fwhm_ps},
                         {"delay_ps", c.sim.gate->delay_ps},
                         {"peak_transmission", c.sim.gate->peak_transmission}};
        if (c.sim.irf) s["irf"] = {{"fwhm_ps", c.sim.irf->fwhm_ps}};
        root["shaping"] = s;
    }
    root["output"] = {{"dir", c.output.dir},
                      {"format", c.output.format},
                      {"basename", c.output.basename}};
    return root;
}

std::string config_fingerprint(const ExperimentConfig& c, std::uint64_t seed) {
    const std::string payload = config_to_json(c).dump() + ":" + std::to_string(seed);
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char ch : payload) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

const char* scheme_label(const std::optional<ExcitationScheme>& s) {
    if (!s) return "custom";
    switch (s->kind) {
        case SchemeKind::AboveBand:
            return "above_band";
        case SchemeKind::QuasiResonant:
            return "quasi_resonant";
        case SchemeKind::TwoPhotonResonant:
            return s->transition == Transition::Exciton ? "two_photon_resonant_exciton"
                                                        : "two_photon_resonant_biexciton";
    }
    return "custom";
}

}  // namespace homsim
