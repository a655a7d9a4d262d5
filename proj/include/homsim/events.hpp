#pragma once

#include <cstdint>
#include <vector>

namespace homsim {

enum class Detector : std::uint8_t { D1 = 1, D2 = 2 };

// One detector click. Timestamps are absolute picoseconds from the start of the
// run; pulse_index counts excitation pulse pairs (pair k is synced to k*rep_period).
struct DetectionEvent {
    Detector detector = Detector::D1;
    double timestamp_ps = 0.0;
    std::int64_t pulse_index = 0;
};

// Canonical stream order: timestamp, then detector, then pulse index.
inline bool event_order(const DetectionEvent& a, const DetectionEvent& b) {
    if (a.timestamp_ps != b.timestamp_ps) return a.timestamp_ps < b.timestamp_ps;
    if (a.detector != b.detector) return a.detector < b.detector;
    return a.pulse_index < b.pulse_index;
}

}  // namespace homsim
