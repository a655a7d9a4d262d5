#include "homsim/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "homsim/rng.hpp"

namespace homsim {

TemporalGate make_gate(double fwhm_ps, double delay_ps, double peak_transmission) {
    if (!(fwhm_ps > 0.0) || !std::isfinite(fwhm_ps))
        throw ConfigError("gate fwhm must be positive");
    if (!std::isfinite(delay_ps)) throw ConfigError("gate delay must be finite");
    if (!(peak_transmission > 0.0 && peak_transmission <= 1.0))
        throw ConfigError("gate peak transmission must lie in (0, 1]");
    return {fwhm_ps, delay_ps, peak_transmission};
}

DetectorIRF make_irf(double fwhm_ps) {
    if (!(fwhm_ps > 0.0) || !std::isfinite(fwhm_ps))
        throw ConfigError("detector response fwhm must be positive");
    return {fwhm_ps};
}

double gate_transmission(const TemporalGate& gate, double t_rel_ps) {
    const double sigma = gate.fwhm_ps * kFwhmToSigma;
    const double u = (t_rel_ps - gate.delay_ps) / sigma;
    return gate.peak_transmission * std::exp(-0.5 * u * u);
}

AmplitudeProfile apply_gate_to_wavepacket(const EmitterParams& emitter, const TemporalGate& gate,
                                          double emission_offset_ps, double grid_step_ps) {
    validate_emitter(emitter);
    const double step =
        grid_step_ps > 0.0 ? grid_step_ps : std::min(emitter.t1_ps, emitter.t2_ps) / 20.0;
    const auto n = static_cast<std::size_t>(std::ceil(8.0 * emitter.t1_ps / step)) + 1;

    AmplitudeProfile profile{step, std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const double s = static_cast<double>(j) * step;
        const double g = gate_transmission(gate, emission_offset_ps + s);
        profile.amplitude[j] = std::sqrt(g) * std::exp(-0.5 * s / emitter.t1_ps);
    }

    // trapezoid norm of |amplitude|^2
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double w = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
        norm += w * profile.amplitude[j] * profile.amplitude[j];
    }
    norm *= step;
    if (!(norm > 1e-300))
        throw NumericError("gate removes the entire wavepacket (zero transmitted norm)");
    const double inv = 1.0 / std::sqrt(norm);
    for (auto& a : profile.amplitude) a *= inv;
    return profile;
}

std::vector<DetectionEvent> apply_gate_to_events(const std::vector<DetectionEvent>& events,
                                                 const TemporalGate& gate,
                                                 const InterferometerGeometry& geometry,
                                                 std::uint64_t seed) {
    validate_geometry(geometry);
    std::vector<DetectionEvent> kept;
    kept.reserve(events.size());
    std::unordered_map<std::int64_t, std::uint64_t> order_in_pulse;
    for (const auto& ev : events) {
        const double t_rel =
            ev.timestamp_ps - static_cast<double>(ev.pulse_index) * geometry.rep_period_ps;
        const std::uint64_t k = order_in_pulse[ev.pulse_index]++;
        RngStream rng(seed, static_cast<std::uint64_t>(ev.pulse_index),
                      rng_tag::kGate + (k << 32));
        if (rng.uniform01() < gate_transmission(gate, t_rel)) kept.push_back(ev);
    }
    return kept;
}

SampledCurve convolve_with_irf(const SampledCurve& curve, const DetectorIRF& irf) {
    if (!(curve.step_ps > 0.0)) throw ConfigError("curve step must be positive");
    const double sigma = irf.fwhm_ps * kFwhmToSigma;
    if (curve.step_ps > irf.fwhm_ps / 5.0)
        throw ConfigError("curve step must be at most fwhm/5 for the response convolution");
    if (curve.y.empty()) return curve;

    const auto half = static_cast<std::ptrdiff_t>(std::ceil(6.0 * sigma / curve.step_ps));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
        const double u = static_cast<double>(k) * curve.step_ps / sigma;
        const double w = std::exp(-0.5 * u * u);
        kernel[static_cast<std::size_t>(k + half)] = w;
        sum += w;
    }
    for (auto& w : kernel) w /= sum;

    const auto n = static_cast<std::ptrdiff_t>(curve.y.size());
    SampledCurve out{curve.x0_ps, curve.step_ps, std::vector<double>(curve.y.size())};
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -half; k <= half; ++k) {
            const std::ptrdiff_t j = std::clamp<std::ptrdiff_t>(i + k, 0, n - 1);
            acc += kernel[static_cast<std::size_t>(k + half)] *
                   curve.y[static_cast<std::size_t>(j)];
        }
        out.y[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

}  // namespace homsim
