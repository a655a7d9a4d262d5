#include "homsim/io.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "homsim/errors.hpp"

namespace homsim {

namespace {

constexpr char kMagic[6] = {'H', 'O', 'M', 'E', 'V', 'T'};
constexpr std::uint8_t kBinaryVersion = 1;

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw NumericError("cannot open output file: " + path);
    return out;
}

template <class T>
void put_le(std::string& buf, T value) {
    std::array<unsigned char, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    buf.append(reinterpret_cast<const char*>(raw.data()), sizeof(T));
}

template <class T>
T get_le(const char* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

}  // namespace

void write_events_text(const std::string& path, const std::vector<DetectionEvent>& events,
                       const std::vector<std::string>& header, char sep) {
    auto out = open_out(path, false);
    for (const auto& line : header) out << "# " << line << "\n";
    char buf[128];
    for (const auto& ev : events) {
        std::snprintf(buf, sizeof(buf), "D%d%c%.6f%c%lld",
                      ev.detector == Detector::D1 ? 1 : 2, sep, ev.timestamp_ps, sep,
                      static_cast<long long>(ev.pulse_index));
        out << buf << "\n";
    }
    if (!out) throw NumericError("failed writing events to " + path);
}

void write_events_binary(const std::string& path, const std::vector<DetectionEvent>& events) {
    std::string buf;
    buf.reserve(16 + events.size() * 17);
    buf.append(kMagic, sizeof(kMagic));
    buf.push_back(static_cast<char>(kBinaryVersion));
    put_le<std::uint64_t>(buf, events.size());
    for (const auto& ev : events) {
        buf.push_back(static_cast<char>(ev.detector));
        put_le<std::int64_t>(buf, ev.pulse_index);
        put_le<double>(buf, ev.timestamp_ps);
    }
    auto out = open_out(path, true);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw NumericError("failed writing events to " + path);
}

std::vector<DetectionEvent> read_events(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NumericError("cannot open events file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::vector<DetectionEvent> events;
    if (content.size() >= sizeof(kMagic) + 9 &&
        std::memcmp(content.data(), kMagic, sizeof(kMagic)) == 0) {
        const char* p = content.data() + sizeof(kMagic);
        const auto version = static_cast<std::uint8_t>(*p++);
        if (version != kBinaryVersion)
            throw NumericError("unsupported events file version in " + path);
        const auto count = get_le<std::uint64_t>(p);
        p += 8;
        const std::size_t need = sizeof(kMagic) + 9 + count * 17;
        if (content.size() < need) throw NumericError("truncated events file: " + path);
        events.reserve(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            DetectionEvent ev;
            const auto det = static_cast<std::uint8_t>(*p++);
            if (det != 1 && det != 2) throw NumericError("corrupt events file: " + path);
            ev.detector = det == 1 ? Detector::D1 : Detector::D2;
            ev.pulse_index = get_le<std::int64_t>(p);
            p += 8;
            ev.timestamp_ps = get_le<double>(p);
            p += 8;
            events.push_back(ev);
        }
        return events;
    }

    std::istringstream stream(content);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        for (auto& ch : line)
            if (ch == ',') ch = ' ';
        std::istringstream row(line);
        std::string det;
        DetectionEvent ev;
        if (!(row >> det >> ev.timestamp_ps >> ev.pulse_index) || (det != "D1" && det != "D2"))
            throw NumericError("cannot parse events file " + path + " at line " +
                               std::to_string(lineno));
        ev.detector = det == "D1" ? Detector::D1 : Detector::D2;
        events.push_back(ev);
    }
    return events;
}

void write_histogram_text(const std::string& path, const CoincidenceHistogram& hist,
                          const std::vector<std::string>& header) {
    auto out = open_out(path, false);
    for (const auto& line : header) out << "# " << line << "\n";
    out << "# bin_center_ps count\n";
    char buf[96];
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.3f %lld", hist.bin_center(i),
                      static_cast<long long>(hist.counts[i]));
        out << buf << "\n";
    }
    if (!out) throw NumericError("failed writing histogram to " + path);
}

void write_sweep_csv(const std::string& path, const std::vector<std::string>& header,
                     const std::string& columns, const std::vector<SweepRow>& rows,
                     const std::vector<std::string>& footer) {
    auto out = open_out(path, false);
    for (const auto& line : header) out << "# " << line << "\n";
    out << columns << "\n";
    char buf[160];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g", row.value, row.p, row.sigma,
                      row.extra);
        out << buf << "\n";
    }
    for (const auto& line : footer) out << "# " << line << "\n";
    if (!out) throw NumericError("failed writing sweep table to " + path);
}

CurveDataset read_sweep_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NumericError("cannot open table: " + path);
    CurveDataset ds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!line.empty() && (std::isalpha(static_cast<unsigned char>(line[0])) != 0))
            continue;  // column header
        for (auto& ch : line)
            if (ch == ',') ch = ' ';
        std::istringstream row(line);
        double v = 0.0;
        double p = 0.0;
        double s = 0.0;
        if (!(row >> v >> p >> s))
            throw NumericError("cannot parse table " + path + " at line " +
                               std::to_string(lineno));
        ds.tau_ps.push_back(v);
        ds.p.push_back(p);
        ds.sigma.push_back(s);
    }
    if (ds.p.empty()) throw NumericError("table has no data rows: " + path);
    return ds;
}

nlohmann::json peak_areas_to_json(const PeakAreas& areas) {
    nlohmann::json side = nlohmann::json::array();
    for (const auto& [center, counts] : areas.side_peaks)
        side.push_back({{"center_ps", center}, {"counts", counts}});
    return {{"a", areas.a},
            {"b1", areas.b1},
            {"b2", areas.b2},
            {"c_minus", areas.c_minus},
            {"c_plus", areas.c_plus},
            {"side_peaks", side},
            {"in_windows", areas.in_windows},
            {"histogram_total", areas.histogram_total}};
}

void write_json(const std::string& path, const nlohmann::json& j) {
    auto out = open_out(path, false);
    out << j.dump(2) << "\n";
    if (!out) throw NumericError("failed writing " + path);
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw NumericError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw NumericError("invalid JSON in " + path + ": " + e.what());
    }
    return j;
}

}  // namespace homsim
