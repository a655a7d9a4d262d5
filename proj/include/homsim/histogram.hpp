#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "homsim/events.hpp"
#include "homsim/model.hpp"

namespace homsim {

// Start-stop coincidence histogram over [-range, +range) with uniform bins.
// D1 starts pair with the next D2 click (positive differences), D2 starts with
// the next D1 click (negative differences).
struct CoincidenceHistogram {
    double bin_width_ps = 50.0;
    double range_ps = 20000.0;
    std::vector<std::int64_t> counts;

    double bin_center(std::size_t i) const {
        return -range_ps + (static_cast<double>(i) + 0.5) * bin_width_ps;
    }
    std::int64_t total() const;
};

// Requires a timestamp-sorted stream, bin_width > 0, and bin_width dividing
// range evenly. A start whose next opposite-detector click falls outside the
// range contributes nothing (no forward scan), matching start-stop hardware.
CoincidenceHistogram build_histogram(const std::vector<DetectionEvent>& events,
                                     double bin_width_ps, double range_ps);

struct PeakAreas {
    std::int64_t a = 0;        // window at pump - hom (interfering combination)
    std::int64_t b1 = 0;       // window at -pump
    std::int64_t b2 = 0;       // window at +pump
    std::int64_t c_minus = 0;  // window at -(pump + hom)
    std::int64_t c_plus = 0;   // window at +(pump + hom)
    std::vector<std::pair<double, std::int64_t>> side_peaks;  // (center, counts) at k*rep
    std::int64_t in_windows = 0;
    std::int64_t histogram_total = 0;
};

// Integrates the five peak windows (bin centers within +-halfwidth of each
// window center) plus any laser-repetition side peaks fully inside the range.
// Throws ConfigError when windows overlap pairwise or the outermost window
// exceeds the histogram range.
PeakAreas integrate_peaks(const CoincidenceHistogram& hist, const InterferometerGeometry& g);

struct NormalizedProbability {
    double value = 0.0;
    double sigma = 0.0;
};

// A / (B1 + B2) with Poisson errors propagated in quadrature; the A term uses
// a one-count floor so downstream fit weights stay finite. Throws ConfigError
// when B1 + B2 = 0.
NormalizedProbability normalized_opposite_probability(const PeakAreas& areas);

}  // namespace homsim
