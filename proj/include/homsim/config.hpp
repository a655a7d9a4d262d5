#pragma once

#include <optional>
#include <string>

#include "json.hpp"

#include "homsim/model.hpp"
#include "homsim/montecarlo.hpp"

namespace homsim {

struct OutputConfig {
    std::string dir;  // empty -> HOMSIM_OUT_DIR or "."
    std::string format = "text";  // text | csv | binary (event payload)
    std::string basename = "run";
};

struct ExperimentConfig {
    SimulationConfig sim;
    double bin_width_ps = 50.0;
    double histogram_range_ps = 20000.0;
    std::optional<ExcitationScheme> scheme;  // carried for reports
    OutputConfig output;
};

// Strict parser: unknown keys are rejected with their dotted path, *_ns fields
// are normalized to picoseconds, and emitter jitter comes either from an
// explicit "jitter" object or an excitation "scheme" preset (not both).
ExperimentConfig parse_config_json(const nlohmann::json& j);
ExperimentConfig parse_config_file(const std::string& path);

// Normalized form (all times in ps). parse(config_to_json(parse(x))) is
// identical to parse(x).
nlohmann::json config_to_json(const ExperimentConfig& c);

// FNV-1a 64 over the canonical serialized config; pair with the seed to name a
// run.
std::string config_fingerprint(const ExperimentConfig& c, std::uint64_t seed);

const char* scheme_label(const std::optional<ExcitationScheme>& s);

}  // namespace homsim
