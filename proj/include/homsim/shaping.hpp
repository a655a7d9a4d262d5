#pragma once

#include <cstdint>
#include <vector>

#include "homsim/events.hpp"
#include "homsim/model.hpp"

namespace homsim {

// Pulse-synchronized Gaussian transmission gate, g(t) = peak * exp(-(t-delay)^2 / 2 sigma^2).
struct TemporalGate {
    double fwhm_ps = 200.0;
    double delay_ps = 0.0;  // gate center relative to the pulse sync
    double peak_transmission = 1.0;
};

TemporalGate make_gate(double fwhm_ps, double delay_ps, double peak_transmission = 1.0);

struct DetectorIRF {
    double fwhm_ps = 35.0;  // Gaussian timing response, given as FWHM
};

DetectorIRF make_irf(double fwhm_ps);

inline constexpr double kFwhmToSigma = 0.42466090014400953;  // 1 / (2 sqrt(2 ln 2))

double gate_transmission(const TemporalGate& gate, double t_rel_ps);

// Real amplitude profile sampled on a uniform grid in local time from the
// emission instant (phase is carried separately by sampled trajectories).
struct AmplitudeProfile {
    double step_ps = 0.0;
    std::vector<double> amplitude;
};

// Exponential wavepacket truncated by the gate and renormalized to unit squared
// norm. emission_offset_ps is the photon's emission time relative to its pulse
// sync; the gate is pulse-synchronized, so a late photon sees a shifted gate.
// grid_step_ps = 0 picks min(T1, T2)/20. Throws NumericError when the gate
// removes the entire wavepacket.
AmplitudeProfile apply_gate_to_wavepacket(const EmitterParams& emitter, const TemporalGate& gate,
                                          double emission_offset_ps = 0.0,
                                          double grid_step_ps = 0.0);

// Stochastic gating of a recorded stream: each event survives with probability
// g(t_rel) where t_rel = timestamp - pulse_index * rep_period. Intended for
// source-side arrival streams (lifetime measurements); draws are keyed by
// (seed, pulse_index, event order within the pulse) so the result is
// reproducible and independent of how the stream was generated.
std::vector<DetectionEvent> apply_gate_to_events(const std::vector<DetectionEvent>& events,
                                                 const TemporalGate& gate,
                                                 const InterferometerGeometry& geometry,
                                                 std::uint64_t seed);

// Uniformly sampled curve y(x0 + i*step).
struct SampledCurve {
    double x0_ps = 0.0;
    double step_ps = 0.0;
    std::vector<double> y;
};

// Gaussian smearing by the detector response. Requires step <= fwhm/5; the
// kernel is truncated at +-6 sigma and normalized, and the curve is extended
// by its edge values, so interior integrals are preserved to 0.1%.
SampledCurve convolve_with_irf(const SampledCurve& curve, const DetectorIRF& irf);

}  // namespace homsim
