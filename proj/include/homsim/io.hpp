#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "homsim/events.hpp"
#include "homsim/fitting.hpp"
#include "homsim/histogram.hpp"

namespace homsim {

// Event payloads. Text/CSV: "# ..." header lines, then one event per line as
// "D1 <timestamp_ps> <pulse_index>". Binary: "HOMEVT" magic, u8 version, u64
// count, then {u8 detector, i64 pulse_index, f64 timestamp} little-endian.
// All payloads are pure functions of the stream (no clocks, no locale), so
// equal runs produce byte-identical files.
void write_events_text(const std::string& path, const std::vector<DetectionEvent>& events,
                       const std::vector<std::string>& header, char sep = ' ');
void write_events_binary(const std::string& path, const std::vector<DetectionEvent>& events);
std::vector<DetectionEvent> read_events(const std::string& path);  // sniffs the magic

void write_histogram_text(const std::string& path, const CoincidenceHistogram& hist,
                          const std::vector<std::string>& header);

struct SweepRow {
    double value = 0.0;
    double p = 0.0;
    double sigma = 0.0;
    double extra = 0.0;  // parameter-dependent column (fitted lifetime, ratio, ...)
};

void write_sweep_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::string& columns, const std::vector<SweepRow>& rows,
                     const std::vector<std::string>& footer);

// Reads "value,p,sigma[,...]" tables (comments and the column line skipped).
CurveDataset read_sweep_csv(const std::string& path);

nlohmann::json peak_areas_to_json(const PeakAreas& areas);
void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

}  // namespace homsim
