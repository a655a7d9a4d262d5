#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "homsim/events.hpp"
#include "homsim/model.hpp"
#include "homsim/rng.hpp"
#include "homsim/shaping.hpp"

namespace homsim {

// One sampled photon: emission time (pulse + jitter), envelope samples on a
// local grid anchored at the emission instant, and a Wiener phase trajectory
// with variance rate 2 * dephasing_rate. The exponential T1 decay lives in the
// amplitude profile, not in a point sample.
struct PhotonRealization {
    double pulse_time_ps = 0.0;
    double emission_time_ps = 0.0;
    double grid_step_ps = 0.0;
    double t1_ps = 0.0;
    double t2_ps = 0.0;
    std::vector<double> amplitude;  // unnormalized envelope samples
    std::vector<double> phase;      // accumulated dephasing phase at each grid point
};

// grid_step_ps = 0 picks min(T1, T2)/20; the grid spans 8*T1. When gate is
// non-null the amplitude profile is the gated wavepacket for this photon's
// jitter offset.
PhotonRealization sample_photon(double pulse_time_ps, const EmitterParams& emitter,
                                RngStream& rng, double grid_step_ps = 0.0,
                                const TemporalGate* gate = nullptr);

// Squared overlap of two sampled wavepackets, factorized as a stochastic
// dephasing quadrature (envelopes aligned at their own emission instants)
// times the deterministic envelope-offset factor V(dt)/V(0) at the photons'
// emission-time difference. The sample mean over realizations equals
// mean_squared_overlap(dt) at every offset. Throws NumericError when the
// profiles have under 16 samples or mismatched grids.
double pair_overlap(const PhotonRealization& p1, const PhotonRealization& p2,
                    double grid_step_ps);

// Same, with a deterministic path offset added to the emission-time difference.
double pair_overlap_at_offset(const PhotonRealization& p1, const PhotonRealization& p2,
                              double extra_offset_ps);

enum class PairOutcome { OppositePorts, SamePort };

// Bernoulli draw of the two-photon exit pattern: opposite ports with
// probability R^2 + T^2 - 2RT * overlap_sq.
PairOutcome hom_pair_outcome(double overlap_sq, const BeamSplitter& bs, RngStream& rng);

enum class InterferenceMode { Auto, ForceDistinguishable, ForcePerfect };

struct SimulationConfig {
    EmitterParams emitter;
    BeamSplitter bs;
    InterferometerGeometry geometry;
    std::int64_t n_pulse_pairs = 0;
    std::uint64_t seed = 0;
    double time_grid_step_ps = 0.0;  // 0 -> min(T1, T2)/20
    std::optional<TemporalGate> gate;
    std::optional<DetectorIRF> irf;
    double dark_count_rate_hz = 0.0;
    InterferenceMode interference = InterferenceMode::Auto;
    bool poissonian_source = false;        // uncorrelated-light surrogate
    double mean_photons_per_pulse = 0.1;   // Poisson mean per pulse in that mode
    double incoherent_fraction = 0.0;      // prob. a photon is tagged distinguishable
};

void validate_simulation_config(const SimulationConfig& c);

// Simulates n_pulse_pairs excitation pulse pairs through the unbalanced
// interferometer and returns the time-ordered click stream. Deterministic for
// a given (config, seed) and independent of jobs: every pulse pair consumes
// its own (seed, pair index)-keyed substream, and workers cover contiguous
// pair ranges whose outputs are concatenated in pair order before the final
// stable sort.
std::vector<DetectionEvent> generate_event_stream(const SimulationConfig& config, int jobs = 1);

// Source-side arrival stream (no interferometer): one photon per pulse with
// jitter + exponential decay, optionally gated; timestamps relative to pulse k
// are jitter + decay. Used for lifetime measurements.
std::vector<DetectionEvent> generate_arrival_stream(const EmitterParams& emitter,
                                                    double rep_period_ps,
                                                    std::int64_t n_pulses, std::uint64_t seed,
                                                    const TemporalGate* gate = nullptr);

}  // namespace homsim
