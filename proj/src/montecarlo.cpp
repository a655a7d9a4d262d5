#include "homsim/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <thread>

namespace homsim {

namespace {

double sample_jitter(const JitterModel& j, RngStream& rng) {
    switch (j.kind) {
        case JitterKind::None:
            return 0.0;
        case JitterKind::Gaussian:
            return j.scale_ps * rng.gaussian();
        case JitterKind::Exponential:
            return rng.exponential(j.scale_ps);
    }
    return 0.0;
}

double auto_grid_step(const EmitterParams& e, double requested) {
    return requested > 0.0 ? requested : std::min(e.t1_ps, e.t2_ps) / 20.0;
}

PhotonRealization make_realization(double pulse_time_ps, double jitter_ps,
                                   const EmitterParams& emitter, RngStream& rng, double step,
                                   const TemporalGate* gate) {
    PhotonRealization p;
    p.pulse_time_ps = pulse_time_ps;
    p.emission_time_ps = pulse_time_ps + jitter_ps;
    p.grid_step_ps = step;
    p.t1_ps = emitter.t1_ps;
    p.t2_ps = emitter.t2_ps;

    const auto n = static_cast<std::size_t>(std::ceil(8.0 * emitter.t1_ps / step)) + 1;
    if (gate) {
        p.amplitude = apply_gate_to_wavepacket(emitter, *gate, jitter_ps, step).amplitude;
    } else {
        p.amplitude.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            p.amplitude[j] = std::exp(-0.5 * static_cast<double>(j) * step / emitter.t1_ps);
    }

    // Wiener dephasing phase with variance rate 2 * (1/T2 - 1/(2 T1))
    p.phase.assign(p.amplitude.size(), 0.0);
    const double gstar = dephasing_rate(emitter);
    if (gstar > 0.0) {
        const double inc = std::sqrt(2.0 * gstar * step);
        double acc = 0.0;
        for (std::size_t j = 1; j < p.phase.size(); ++j) {
            acc += inc * rng.gaussian();
            p.phase[j] = acc;
        }
    }
    return p;
}

// Quadrature overlap with the envelopes aligned at their own emission instants;
// the phase trajectories carry all randomness. Exactly 1 for identical inputs.
double stochastic_overlap(const PhotonRealization& p1, const PhotonRealization& p2) {
    const std::size_t n = p1.amplitude.size();
    if (n < 16) throw NumericError("pair overlap needs at least 16 grid samples");
    if (p2.amplitude.size() != n || p1.phase.size() != n || p2.phase.size() != n)
        throw NumericError("pair overlap requires matching wavepacket grids");
    if (std::fabs(p1.grid_step_ps - p2.grid_step_ps) > 1e-9 * p1.grid_step_ps)
        throw NumericError("pair overlap requires matching grid steps");

    std::complex<double> acc{0.0, 0.0};
    double n1 = 0.0;
    double n2 = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
        const double a = p1.amplitude[j];
        const double b = p2.amplitude[j];
        acc += (w * a * b) * std::polar(1.0, p2.phase[j] - p1.phase[j]);
        n1 += w * a * a;
        n2 += w * b * b;
    }
    if (!(n1 > 0.0) || !(n2 > 0.0)) throw NumericError("pair overlap on a zero wavepacket");
    return std::norm(acc) / (n1 * n2);
}

// Envelope-offset factor V(dt)/V(0); with the dephasing quadrature above this
// makes the realization mean equal mean_squared_overlap(dt) at every offset.
double offset_factor(const PhotonRealization& p1, double dt_ps) {
    const double v0 = p1.t2_ps / (2.0 * p1.t1_ps);
    const double v = kernels::v_overlap_kernel(std::fabs(dt_ps), p1.t1_ps, p1.t2_ps);
    return v / v0;
}

double overlap_with_offset(const PhotonRealization& p1, const PhotonRealization& p2,
                           double dt_ps) {
    if (std::fabs(p1.t1_ps - p2.t1_ps) > 1e-9 * p1.t1_ps ||
        std::fabs(p1.t2_ps - p2.t2_ps) > 1e-9 * p1.t2_ps)
        throw NumericError("pair overlap requires photons from the same emitter");
    const double q = stochastic_overlap(p1, p2) * offset_factor(p1, dt_ps);
    return std::clamp(q, 0.0, 1.0);
}

void simulate_pair(const SimulationConfig& c, std::int64_t k, double grid_step,
                   std::vector<DetectionEvent>& out) {
    RngStream rng(c.seed, static_cast<std::uint64_t>(k), rng_tag::kPair);
    const auto& g = c.geometry;
    const double tp1 = static_cast<double>(k) * g.rep_period_ps;
    const double tp2 = tp1 + g.pump_delay_ps;
    const double sigma_irf = c.irf ? c.irf->fwhm_ps * kFwhmToSigma : 0.0;
    const TemporalGate* gate = c.gate ? &*c.gate : nullptr;

    auto push = [&](Detector det, double ts) {
        if (c.irf) ts += sigma_irf * rng.gaussian();
        out.push_back({det, ts, k});
    };
    // short arm transmits to D1 with prob T, long arm reflects to D1 with prob R
    auto route = [&](bool long_arm) {
        const double p_d1 = long_arm ? c.bs.r : c.bs.t;
        return rng.uniform01() < p_d1 ? Detector::D1 : Detector::D2;
    };

    if (c.poissonian_source) {
        const int n1 = rng.poisson(c.mean_photons_per_pulse);
        const int n2 = rng.poisson(c.mean_photons_per_pulse);
        for (int pulse = 0; pulse < 2; ++pulse) {
            const double tp = pulse == 0 ? tp1 : tp2;
            const int count = pulse == 0 ? n1 : n2;
            for (int m = 0; m < count; ++m) {
                const double jit = sample_jitter(c.emitter.jitter, rng);
                const double dec = rng.exponential(c.emitter.t1_ps);
                if (gate && rng.uniform01() >= gate_transmission(*gate, jit + dec)) continue;
                const bool long_arm = rng.uniform01() < 0.5;
                push(route(long_arm), tp + jit + dec + (long_arm ? g.hom_delay_ps : 0.0));
            }
        }
    } else {
        const bool present1 = rng.uniform01() < c.emitter.efficiency;
        const bool present2 = rng.uniform01() < c.emitter.efficiency;
        const double j1 = sample_jitter(c.emitter.jitter, rng);
        const double j2 = sample_jitter(c.emitter.jitter, rng);
        const bool long1 = rng.uniform01() < 0.5;
        const bool long2 = rng.uniform01() < 0.5;
        const double d1 = rng.exponential(c.emitter.t1_ps);
        const double d2 = rng.exponential(c.emitter.t1_ps);
        bool surv1 = present1;
        bool surv2 = present2;
        if (gate) {
            const double u1 = rng.uniform01();
            const double u2 = rng.uniform01();
            surv1 = surv1 && u1 < gate_transmission(*gate, j1 + d1);
            surv2 = surv2 && u2 < gate_transmission(*gate, j2 + d2);
        }
        bool tag1 = false;
        bool tag2 = false;
        if (c.incoherent_fraction > 0.0) {
            tag1 = rng.uniform01() < c.incoherent_fraction;
            tag2 = rng.uniform01() < c.incoherent_fraction;
        }

        // first pulse through the long arm meets the second pulse through the
        // short arm at the recombining splitter
        if (surv1 && surv2 && long1 && !long2) {
            double q = 0.0;
            if (c.interference == InterferenceMode::ForcePerfect) {
                q = 1.0;
            } else if (c.interference == InterferenceMode::Auto && !tag1 && !tag2) {
                const PhotonRealization p1 =
                    make_realization(tp1, j1, c.emitter, rng, grid_step, gate);
                const PhotonRealization p2 =
                    make_realization(tp2, j2, c.emitter, rng, grid_step, gate);
                const double dt_bs = (tp2 + j2) - (tp1 + j1 + g.hom_delay_ps);
                q = overlap_with_offset(p1, p2, dt_bs);
            }
            const double arrive1 = tp1 + j1 + d1 + g.hom_delay_ps;
            const double arrive2 = tp2 + j2 + d2;
            if (hom_pair_outcome(q, c.bs, rng) == PairOutcome::OppositePorts) {
                // ordering weights r^2 : t^2 match independent routing at q = 0
                const double w_rr = c.bs.r * c.bs.r;
                const double w_tt = c.bs.t * c.bs.t;
                const bool first_to_d1 = rng.uniform01() * (w_rr + w_tt) < w_rr;
                push(first_to_d1 ? Detector::D1 : Detector::D2, arrive1);
                push(first_to_d1 ? Detector::D2 : Detector::D1, arrive2);
            } else {
                const Detector det = rng.uniform01() < 0.5 ? Detector::D1 : Detector::D2;
                push(det, arrive1);
                push(det, arrive2);
            }
        } else {
            if (surv1) push(route(long1), tp1 + j1 + d1 + (long1 ? g.hom_delay_ps : 0.0));
            if (surv2) push(route(long2), tp2 + j2 + d2 + (long2 ? g.hom_delay_ps : 0.0));
        }
    }

    if (c.dark_count_rate_hz > 0.0) {
        const double mean = c.dark_count_rate_hz * g.rep_period_ps * 1e-12;
        for (int d = 0; d < 2; ++d) {
            const int nd = rng.poisson(mean);
            for (int m = 0; m < nd; ++m) {
                const Detector det = d == 0 ? Detector::D1 : Detector::D2;
                out.push_back({det, tp1 + rng.uniform01() * g.rep_period_ps, k});
            }
        }
    }
}

}  // namespace

PhotonRealization sample_photon(double pulse_time_ps, const EmitterParams& emitter,
                                RngStream& rng, double grid_step_ps, const TemporalGate* gate) {
    validate_emitter(emitter);
    const double step = auto_grid_step(emitter, grid_step_ps);
    const double jit = sample_jitter(emitter.jitter, rng);
    return make_realization(pulse_time_ps, jit, emitter, rng, step, gate);
}

double pair_overlap(const PhotonRealization& p1, const PhotonRealization& p2,
                    double grid_step_ps) {
    if (grid_step_ps > 0.0 && std::fabs(p1.grid_step_ps - grid_step_ps) > 1e-9 * grid_step_ps)
        throw NumericError("pair overlap grid step does not match the sampled photons");
    return overlap_with_offset(p1, p2, p2.emission_time_ps - p1.emission_time_ps);
}

double pair_overlap_at_offset(const PhotonRealization& p1, const PhotonRealization& p2,
                              double extra_offset_ps) {
    const double dt = p2.emission_time_ps - p1.emission_time_ps + extra_offset_ps;
    return overlap_with_offset(p1, p2, dt);
}

PairOutcome hom_pair_outcome(double overlap_sq, const BeamSplitter& bs, RngStream& rng) {
    if (!(overlap_sq >= 0.0 && overlap_sq <= 1.0))
        throw NumericError("pair overlap outside [0, 1]");
    const double p_opposite = bs.r * bs.r + bs.t * bs.t - 2.0 * bs.r * bs.t * overlap_sq;
    return rng.uniform01() < p_opposite ? PairOutcome::OppositePorts : PairOutcome::SamePort;
}

void validate_simulation_config(const SimulationConfig& c) {
    validate_emitter(c.emitter);
    validate_geometry(c.geometry);
    if (!(c.bs.r >= 0.0 && c.bs.t >= 0.0 && std::fabs(c.bs.r + c.bs.t - 1.0) <= 1e-12))
        throw ConfigError("beamsplitter must satisfy R + T = 1");
    if (c.n_pulse_pairs <= 0) throw ConfigError("n_pulse_pairs must be positive");
    if (c.time_grid_step_ps < 0.0) throw ConfigError("time_grid_step must be non-negative");
    const double cap = std::min(c.emitter.t1_ps, c.emitter.t2_ps) / 20.0;
    if (c.time_grid_step_ps > 0.0 && c.time_grid_step_ps > cap * (1.0 + 1e-12))
        throw ConfigError("time_grid_step must be at most min(T1, T2)/20");
    if (c.gate) (void)make_gate(c.gate->fwhm_ps, c.gate->delay_ps, c.gate->peak_transmission);
    if (c.irf) (void)make_irf(c.irf->fwhm_ps);
    if (c.dark_count_rate_hz < 0.0) throw ConfigError("dark count rate must be non-negative");
    if (!(c.incoherent_fraction >= 0.0 && c.incoherent_fraction <= 1.0))
        throw ConfigError("incoherent_fraction must lie in [0, 1]");
    if (c.poissonian_source &&
        !(c.mean_photons_per_pulse > 0.0 && c.mean_photons_per_pulse <= 100.0))
        throw ConfigError("mean_photons_per_pulse must lie in (0, 100]");
}

std::vector<DetectionEvent> generate_event_stream(const SimulationConfig& config, int jobs) {
    validate_simulation_config(config);
    const std::int64_t n = config.n_pulse_pairs;
    const double grid_step = auto_grid_step(config.emitter, config.time_grid_step_ps);
    int workers = jobs < 1 ? 1 : jobs;
    if (static_cast<std::int64_t>(workers) > n) workers = static_cast<int>(n);

    std::vector<std::vector<DetectionEvent>> parts(static_cast<std::size_t>(workers));
    if (workers == 1) {
        parts[0].reserve(static_cast<std::size_t>(2 * n));
        for (std::int64_t k = 0; k < n; ++k) simulate_pair(config, k, grid_step, parts[0]);
    } else {
        const std::int64_t chunk = (n + workers - 1) / workers;
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            threads.emplace_back([&config, &parts, grid_step, chunk, n, w] {
                const std::int64_t lo = static_cast<std::int64_t>(w) * chunk;
                const std::int64_t hi = std::min(n, lo + chunk);
                auto& buf = parts[static_cast<std::size_t>(w)];
                buf.reserve(static_cast<std::size_t>(2 * std::max<std::int64_t>(0, hi - lo)));
                for (std::int64_t k = lo; k < hi; ++k) simulate_pair(config, k, grid_step, buf);
            });
        }
        for (auto& t : threads) t.join();
    }

    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    std::vector<DetectionEvent> events;
    events.reserve(total);
    for (const auto& p : parts) events.insert(events.end(), p.begin(), p.end());
    std::stable_sort(events.begin(), events.end(), event_order);
    return events;
}

std::vector<DetectionEvent> generate_arrival_stream(const EmitterParams& emitter,
                                                    double rep_period_ps, std::int64_t n_pulses,
                                                    std::uint64_t seed,
                                                    const TemporalGate* gate) {
    validate_emitter(emitter);
    if (!(rep_period_ps > 0.0)) throw ConfigError("repetition period must be positive");
    if (n_pulses <= 0) throw ConfigError("n_pulses must be positive");

    std::vector<DetectionEvent> events;
    events.reserve(static_cast<std::size_t>(n_pulses));
    for (std::int64_t k = 0; k < n_pulses; ++k) {
        RngStream rng(seed, static_cast<std::uint64_t>(k), rng_tag::kPair);
        if (rng.uniform01() >= emitter.efficiency) continue;
        const double jit = sample_jitter(emitter.jitter, rng);
        const double dec = rng.exponential(emitter.t1_ps);
        if (gate && rng.uniform01() >= gate_transmission(*gate, jit + dec)) continue;
        events.push_back({Detector::D1, static_cast<double>(k) * rep_period_ps + jit + dec, k});
    }
    std::stable_sort(events.begin(), events.end(), event_order);
    return events;
}

}  // namespace homsim
