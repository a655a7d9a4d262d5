#include "homsim/histogram.hpp"

#include <algorithm>
#include <cmath>

namespace homsim {

std::int64_t CoincidenceHistogram::total() const {
    std::int64_t sum = 0;
    for (const auto c : counts) sum += c;
    return sum;
}

CoincidenceHistogram build_histogram(const std::vector<DetectionEvent>& events,
                                     double bin_width_ps, double range_ps) {
    if (!(bin_width_ps > 0.0)) throw ConfigError("bin width must be positive");
    if (!(range_ps > 0.0)) throw ConfigError("histogram range must be positive");
    const double half_bins = range_ps / bin_width_ps;
    const auto n_half = static_cast<std::int64_t>(std::llround(half_bins));
    if (n_half < 1 || std::fabs(half_bins - static_cast<double>(n_half)) > 1e-9)
        throw ConfigError("bin width must divide the histogram range evenly");
    if (!std::is_sorted(events.begin(), events.end(),
                        [](const DetectionEvent& a, const DetectionEvent& b) {
                            return a.timestamp_ps < b.timestamp_ps;
                        }))
        throw ConfigError("event stream must be timestamp-sorted");

    CoincidenceHistogram hist{bin_width_ps, range_ps,
                              std::vector<std::int64_t>(static_cast<std::size_t>(2 * n_half), 0)};

    // next opposite-detector click for every event, found in one reverse pass
    const std::size_t n = events.size();
    std::vector<std::ptrdiff_t> next_opposite(n, -1);
    std::ptrdiff_t next_d1 = -1;
    std::ptrdiff_t next_d2 = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(n) - 1; i >= 0; --i) {
        const auto& ev = events[static_cast<std::size_t>(i)];
        next_opposite[static_cast<std::size_t>(i)] =
            ev.detector == Detector::D1 ? next_d2 : next_d1;
        (ev.detector == Detector::D1 ? next_d1 : next_d2) = i;
    }

    for (std::size_t i = 0; i < n; ++i) {
        const std::ptrdiff_t j = next_opposite[i];
        if (j < 0) continue;
        const double gap = events[static_cast<std::size_t>(j)].timestamp_ps -
                           events[i].timestamp_ps;
        const double diff = events[i].detector == Detector::D1 ? gap : -gap;
        if (diff < -range_ps || diff >= range_ps) continue;
        const auto bin = static_cast<std::size_t>(std::floor((diff + range_ps) / bin_width_ps));
        if (bin < hist.counts.size()) ++hist.counts[bin];
    }
    return hist;
}

namespace {

std::int64_t window_counts(const CoincidenceHistogram& h, double center, double halfwidth) {
    std::int64_t sum = 0;
    const double eps = 1e-9 * h.bin_width_ps;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
        if (std::fabs(h.bin_center(i) - center) <= halfwidth + eps) sum += h.counts[i];
    }
    return sum;
}

}  // namespace

PeakAreas integrate_peaks(const CoincidenceHistogram& hist, const InterferometerGeometry& g) {
    validate_geometry(g);
    const double hw = g.integration_halfwidth_ps;
    const double outer = g.pump_delay_ps + g.hom_delay_ps;
    if (outer + hw > hist.range_ps)
        throw ConfigError("outermost peak window exceeds the histogram range");

    const double centers[5] = {g.pump_delay_ps - g.hom_delay_ps, -g.pump_delay_ps,
                               g.pump_delay_ps, -outer, outer};
    for (int i = 0; i < 5; ++i) {
        for (int j = i + 1; j < 5; ++j) {
            if (std::fabs(centers[i] - centers[j]) <= 2.0 * hw)
                throw ConfigError("peak integration windows overlap");
        }
    }

    PeakAreas areas;
    areas.a = window_counts(hist, centers[0], hw);
    areas.b1 = window_counts(hist, centers[1], hw);
    areas.b2 = window_counts(hist, centers[2], hw);
    areas.c_minus = window_counts(hist, centers[3], hw);
    areas.c_plus = window_counts(hist, centers[4], hw);
    areas.in_windows = areas.a + areas.b1 + areas.b2 + areas.c_minus + areas.c_plus;

    for (int k = 1;; ++k) {
        const double center = static_cast<double>(k) * g.rep_period_ps;
        if (center + hw > hist.range_ps) break;
        for (double c : centers) {
            if (std::fabs(center - c) <= 2.0 * hw || std::fabs(-center - c) <= 2.0 * hw)
                throw ConfigError("laser side peak window overlaps a main peak window");
        }
        const std::int64_t plus = window_counts(hist, center, hw);
        const std::int64_t minus = window_counts(hist, -center, hw);
        areas.side_peaks.emplace_back(center, plus);
        areas.side_peaks.emplace_back(-center, minus);
        areas.in_windows += plus + minus;
    }
    areas.histogram_total = hist.total();
    return areas;
}

NormalizedProbability normalized_opposite_probability(const PeakAreas& areas) {
    const double b = static_cast<double>(areas.b1 + areas.b2);
    if (!(b > 0.0)) throw ConfigError("normalization peaks B1 + B2 are empty");
    const double a = static_cast<double>(areas.a);
    const double value = a / b;
    // Poisson errors in quadrature; one-count floor keeps the weight finite at a = 0
    const double var = std::max(a, 1.0) + a * a / b;
    return {value, std::sqrt(var) / b};
}

}  // namespace homsim
