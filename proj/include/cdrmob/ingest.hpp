#pragma once

// Streaming readers and writers for the two interchange formats:
//
//   antennas:  antenna_id,lat,lon
//   cdrs:      timestamp,user_id,peer_id,direction,antenna_id
//
// Files are read through a fixed-size chunk buffer, so memory use does not
// grow with file size. Only the set of distinct users seen (for
// DatasetStats::user_count) and the per-day counters grow with the data.

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cdrmob/core.hpp"

namespace cdrmob {

inline constexpr std::string_view kAntennaHeader = "antenna_id,lat,lon";
inline constexpr std::string_view kCdrHeader = "timestamp,user_id,peer_id,direction,antenna_id";

class AntennaRegistry {
public:
    AntennaRegistry() = default;

    /// Throws DuplicateAntenna / CoordinateOutOfRange.
    void add(const Antenna& a) {
        if (!valid_coordinates(a.lat, a.lon))
            throw Error(ErrorKind::CoordinateOutOfRange, "antenna " + std::to_string(a.id.value));
        auto [it, inserted] = index_.emplace(a.id.value, antennas_.size());
        if (!inserted) throw Error(ErrorKind::DuplicateAntenna, "antenna " + std::to_string(a.id.value));
        if (!antennas_.empty() && a.id < antennas_.back().id) sorted_ = false;
        antennas_.push_back(a);
    }

    const Antenna* find(AntennaId id) const {
        auto it = index_.find(id.value);
        return it == index_.end() ? nullptr : &antennas_[it->second];
    }

    const Antenna& at(AntennaId id) const {
        if (const Antenna* a = find(id)) return *a;
        throw Error(ErrorKind::UnknownAntenna, "antenna " + std::to_string(id.value));
    }

    bool contains(AntennaId id) const { return index_.contains(id.value); }
    std::size_t size() const { return antennas_.size(); }
    bool empty() const { return antennas_.empty(); }

    /// Antennas in ascending id order.
    std::vector<Antenna> sorted() const {
        std::vector<Antenna> out = antennas_;
        if (!sorted_)
            std::sort(out.begin(), out.end(), [](const Antenna& a, const Antenna& b) { return a.id < b.id; });
        return out;
    }

    /// Insertion order.
    std::span<const Antenna> antennas() const { return antennas_; }

    BoundingBox bounds() const {
        BoundingBox b{{90.0, 180.0}, {-90.0, -180.0}};
        for (const auto& a : antennas_) {
            b.min.lat = std::min(b.min.lat, a.lat);
            b.min.lon = std::min(b.min.lon, a.lon);
            b.max.lat = std::max(b.max.lat, a.lat);
            b.max.lon = std::max(b.max.lon, a.lon);
        }
        return b;
    }

private:
    std::vector<Antenna> antennas_;
    std::unordered_map<std::uint32_t, std::size_t> index_;
    bool sorted_ = true;
};

/// Antenna nearest to `p`, ties broken by the smaller id. Null for an empty registry.
inline const Antenna* nearest_antenna(const AntennaRegistry& registry, GeoPoint p) {
    const Antenna* best = nullptr;
    double best_km = 0.0;
    for (const auto& a : registry.antennas()) {
        const double d = haversine_km(p, a.position());
        if (!best || d < best_km || (d == best_km && a.id < best->id)) {
            best = &a;
            best_km = d;
        }
    }
    return best;
}

namespace detail {

template <typename T>
bool parse_number(std::string_view s, T& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if constexpr (std::is_floating_point_v<T>) {
        if (*first == '+') ++first;
    }
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

/// Splits `line` on ',' into exactly `fields.size()` pieces.
inline bool split_exact(std::string_view line, std::span<std::string_view> fields) {
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (n == fields.size()) return false;
        if (comma == std::string_view::npos) {
            fields[n++] = line.substr(start);
            break;
        }
        fields[n++] = line.substr(start, comma - start);
        start = comma + 1;
    }
    return n == fields.size();
}

struct FileCloser {
    void operator()(std::FILE* f) const noexcept {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw Error(ErrorKind::Io, path.string() + ": " + std::strerror(errno));
    return f;
}

} // namespace detail

/// Newline-delimited reader over a fixed chunk buffer. The returned view is
/// valid until the next call.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path, std::size_t chunk = 1 << 20)
        : path_(path), file_(detail::open_file(path, "rb")), buf_(chunk) {}

    std::optional<std::string_view> next() {
        while (true) {
            if (const void* nl = std::memchr(buf_.data() + pos_, '\n', len_ - pos_)) {
                const auto end = static_cast<std::size_t>(static_cast<const char*>(nl) - buf_.data());
                std::string_view line(buf_.data() + pos_, end - pos_);
                pos_ = end + 1;
                ++line_no_;
                return strip_cr(line);
            }
            if (eof_) {
                if (pos_ == len_) return std::nullopt;
                std::string_view line(buf_.data() + pos_, len_ - pos_);
                pos_ = len_;
                ++line_no_;
                return strip_cr(line);
            }
            refill();
        }
    }

    /// 1-based number of the line most recently returned.
    std::size_t line_number() const { return line_no_; }
    const std::filesystem::path& path() const { return path_; }

private:
    static std::string_view strip_cr(std::string_view s) {
        if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
        return s;
    }

    void refill() {
        if (pos_ > 0) {
            std::memmove(buf_.data(), buf_.data() + pos_, len_ - pos_);
            len_ -= pos_;
            pos_ = 0;
        }
        if (len_ == buf_.size()) buf_.resize(buf_.size() * 2); // overlong line
        const std::size_t got = std::fread(buf_.data() + len_, 1, buf_.size() - len_, file_.get());
        if (got == 0) {
            if (std::ferror(file_.get())) throw Error(ErrorKind::Io, path_.string() + ": read failed");
            eof_ = true;
        }
        len_ += got;
    }

    std::filesystem::path path_;
    detail::FilePtr file_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
    std::size_t len_ = 0;
    std::size_t line_no_ = 0;
    bool eof_ = false;
};

inline std::string line_context(const std::filesystem::path& path, std::size_t line_no) {
    return path.string() + ":" + std::to_string(line_no);
}

inline AntennaRegistry load_antennas(const std::filesystem::path& path) {
    LineReader reader(path);
    auto header = reader.next();
    if (!header || *header != kAntennaHeader)
        throw Error(ErrorKind::MalformedLine, line_context(path, 1) + ": expected header '" + std::string(kAntennaHeader) + "'");
    AntennaRegistry registry;
    while (auto line = reader.next()) {
        if (line->empty()) continue;
        std::array<std::string_view, 3> f;
        Antenna a;
        if (!detail::split_exact(*line, f) || !detail::parse_number(f[0], a.id.value)
            || !detail::parse_number(f[1], a.lat) || !detail::parse_number(f[2], a.lon))
            throw Error(ErrorKind::MalformedLine, line_context(path, reader.line_number()));
        registry.add(a);
    }
    if (registry.empty()) throw Error(ErrorKind::MalformedLine, path.string() + ": no antennas");
    return registry;
}

enum class ParsePolicy { Strict, SkipAndCount };

enum class LineStatus { Ok, Malformed, UnknownAntenna };

/// Parses one CDR line. The registry check is skipped when `registry` is null.
inline LineStatus parse_cdr_line(std::string_view line, const AntennaRegistry* registry, CdrRecord& out) {
    std::array<std::string_view, 5> f;
    if (!detail::split_exact(line, f)) return LineStatus::Malformed;
    if (!detail::parse_number(f[0], out.timestamp)) return LineStatus::Malformed;
    if (!detail::parse_number(f[1], out.user.value)) return LineStatus::Malformed;
    if (f[2].empty()) {
        out.peer.reset();
    } else {
        UserId peer;
        if (!detail::parse_number(f[2], peer.value)) return LineStatus::Malformed;
        out.peer = peer;
    }
    if (f[3] == "OUT") out.direction = CallDirection::Outgoing;
    else if (f[3] == "IN") out.direction = CallDirection::Incoming;
    else return LineStatus::Malformed;
    if (!detail::parse_number(f[4], out.antenna.value)) return LineStatus::Malformed;
    if (registry && !registry->contains(out.antenna)) return LineStatus::UnknownAntenna;
    return LineStatus::Ok;
}

struct DatasetStats {
    std::uint64_t record_count = 0;
    std::map<std::int64_t, std::uint64_t> per_day_counts; // local day number -> count
    std::uint64_t user_count = 0;
    std::uint64_t malformed_count = 0;
    std::optional<std::pair<std::int64_t, std::int64_t>> time_range;

    friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

class StatsAccumulator {
public:
    explicit StatsAccumulator(int utc_offset) : utc_offset_(utc_offset) {}

    void add(const CdrRecord& r) {
        ++stats_.record_count;
        ++stats_.per_day_counts[local_day(r.timestamp, utc_offset_)];
        users_.insert(r.user.value);
        if (!stats_.time_range) stats_.time_range.emplace(r.timestamp, r.timestamp);
        else {
            stats_.time_range->first = std::min(stats_.time_range->first, r.timestamp);
            stats_.time_range->second = std::max(stats_.time_range->second, r.timestamp);
        }
    }
    void add_malformed() { ++stats_.malformed_count; }

    DatasetStats finish() const {
        DatasetStats s = stats_;
        s.user_count = users_.size();
        return s;
    }

private:
    int utc_offset_;
    DatasetStats stats_;
    std::unordered_set<std::uint64_t> users_;
};

template <typename Range>
DatasetStats dataset_stats(const Range& records, int utc_offset) {
    StatsAccumulator acc(utc_offset);
    for (const CdrRecord& r : records) acc.add(r);
    return acc.finish();
}

/// Pull-style CDR reader. Under Strict the first bad line throws; under
/// SkipAndCount bad lines are counted and skipped.
class CdrReader {
public:
    CdrReader(const std::filesystem::path& path, const AntennaRegistry& registry, ParsePolicy policy)
        : reader_(path), registry_(&registry), policy_(policy) {
        auto header = reader_.next();
        if (!header || *header != kCdrHeader)
            throw Error(ErrorKind::MalformedLine, line_context(path, 1) + ": expected header '" + std::string(kCdrHeader) + "'");
    }

    std::optional<CdrRecord> next() {
        CdrRecord rec;
        while (auto line = reader_.next()) {
            switch (parse_cdr_line(*line, registry_, rec)) {
            case LineStatus::Ok: return rec;
            case LineStatus::Malformed:
                if (policy_ == ParsePolicy::Strict)
                    throw Error(ErrorKind::MalformedLine, line_context(reader_.path(), reader_.line_number()));
                ++malformed_;
                break;
            case LineStatus::UnknownAntenna:
                if (policy_ == ParsePolicy::Strict)
                    throw Error(ErrorKind::UnknownAntenna, line_context(reader_.path(), reader_.line_number())
                                                               + ": antenna " + std::to_string(rec.antenna.value));
                ++malformed_;
                break;
            }
        }
        return std::nullopt;
    }

    std::uint64_t malformed_count() const { return malformed_; }

private:
    LineReader reader_;
    const AntennaRegistry* registry_;
    ParsePolicy policy_;
    std::uint64_t malformed_ = 0;
};

/// Streams every valid record of `path` into `sink` in file order and
/// returns the dataset statistics.
template <typename Sink>
DatasetStats stream_cdrs(const std::filesystem::path& path, const AntennaRegistry& registry, ParsePolicy policy,
                         int utc_offset, Sink&& sink) {
    CdrReader reader(path, registry, policy);
    StatsAccumulator acc(utc_offset);
    while (auto rec = reader.next()) {
        acc.add(*rec);
        sink(*rec);
    }
    DatasetStats stats = acc.finish();
    stats.malformed_count = reader.malformed_count();
    return stats;
}

/// Convenience for data that fits in memory.
inline std::vector<CdrRecord> read_cdrs(const std::filesystem::path& path, const AntennaRegistry& registry,
                                        ParsePolicy policy = ParsePolicy::Strict, DatasetStats* stats = nullptr,
                                        int utc_offset = 0) {
    std::vector<CdrRecord> out;
    auto s = stream_cdrs(path, registry, policy, utc_offset, [&](const CdrRecord& r) { out.push_back(r); });
    if (stats) *stats = s;
    return out;
}

inline std::string format_local_date(std::int64_t day_number) {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{day_number}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

/// Buffered writer for the CDR format.
class CdrWriter {
public:
    explicit CdrWriter(const std::filesystem::path& path) : file_(detail::open_file(path, "wb")) {
        buf_.reserve(kFlushAt + 128);
        buf_.append(kCdrHeader);
        buf_.push_back('\n');
    }
    CdrWriter(const CdrWriter&) = delete;
    CdrWriter& operator=(const CdrWriter&) = delete;
    ~CdrWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void write(const CdrRecord& r) {
        append_int(r.timestamp);
        buf_.push_back(',');
        append_int(r.user.value);
        buf_.push_back(',');
        if (r.peer) append_int(r.peer->value);
        buf_.push_back(',');
        buf_.append(direction_token(r.direction));
        buf_.push_back(',');
        append_int(r.antenna.value);
        buf_.push_back('\n');
        ++written_;
        if (buf_.size() >= kFlushAt) flush();
    }

    void close() {
        if (!file_) return;
        flush();
        if (std::fclose(file_.release()) != 0) throw Error(ErrorKind::Io, "close failed");
    }

    std::uint64_t written() const { return written_; }

private:
    static constexpr std::size_t kFlushAt = 1 << 20;

    template <typename T>
    void append_int(T v) {
        char tmp[24];
        auto [p, ec] = std::to_chars(tmp, tmp + sizeof tmp, v);
        buf_.append(tmp, p);
    }

    void flush() {
        if (!buf_.empty() && std::fwrite(buf_.data(), 1, buf_.size(), file_.get()) != buf_.size())
            throw Error(ErrorKind::Io, "write failed");
        buf_.clear();
    }

    detail::FilePtr file_;
    std::string buf_;
    std::uint64_t written_ = 0;
};

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
    char tmp[32];
    auto [p, ec] = std::to_chars(tmp, tmp + sizeof tmp, v);
    return std::string(tmp, p);
}

inline void write_antennas(const std::filesystem::path& path, const AntennaRegistry& registry) {
    auto f = detail::open_file(path, "wb");
    std::string out(kAntennaHeader);
    out.push_back('\n');
    for (const auto& a : registry.sorted())
        out += std::to_string(a.id.value) + "," + format_double(a.lat) + "," + format_double(a.lon) + "\n";
    if (std::fwrite(out.data(), 1, out.size(), f.get()) != out.size()) throw Error(ErrorKind::Io, path.string());
}

/// Writes a whole text file; used by the small CSV exporters.
inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    auto f = detail::open_file(path, "wb");
    if (std::fwrite(content.data(), 1, content.size(), f.get()) != content.size())
        throw Error(ErrorKind::Io, path.string() + ": write failed");
    if (std::fclose(f.release()) != 0) throw Error(ErrorKind::Io, path.string() + ": close failed");
}

inline std::string stats_csv(const DatasetStats& s) {
    std::string out = "day,count\n";
    for (const auto& [day, n] : s.per_day_counts) out += format_local_date(day) + "," + std::to_string(n) + "\n";
    return out;
}

} // namespace cdrmob
