#pragma once

// Domain primitives shared by every stage of the pipeline: identifiers,
// weekly time slots, great-circle distance and grid geometry.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace cdrmob {

enum class ErrorKind {
    ConfigInvalid,
    Io,
    MalformedLine,
    DuplicateAntenna,
    CoordinateOutOfRange,
    UnknownAntenna,
    EmptyZone,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::Io: return "Io";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::DuplicateAntenna: return "DuplicateAntenna";
    case ErrorKind::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case ErrorKind::UnknownAntenna: return "UnknownAntenna";
    case ErrorKind::EmptyZone: return "EmptyZone";
    }
    return "Unknown";
}

/// Every failure surfaced by the library. `kind()` identifies the category,
/// `what()` carries the file/line context when there is one.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg)
        : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Strong identifiers. The values carry no meaning beyond identity.

struct UserId {
    std::uint64_t value = 0;
    friend constexpr auto operator<=>(UserId, UserId) = default;
};

struct AntennaId {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(AntennaId, AntennaId) = default;
};

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;
    friend constexpr bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

constexpr bool valid_coordinates(double lat, double lon) {
    return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0;
}

struct Antenna {
    AntennaId id;
    double lat = 0.0;
    double lon = 0.0;

    GeoPoint position() const { return {lat, lon}; }
    friend constexpr bool operator==(const Antenna&, const Antenna&) = default;
};

enum class CallDirection : std::uint8_t { Outgoing, Incoming };

/// One located call event. Only `user` is located; `peer` is metadata.
struct CdrRecord {
    std::int64_t timestamp = 0; // epoch seconds, UTC
    UserId user;
    std::optional<UserId> peer;
    CallDirection direction = CallDirection::Outgoing;
    AntennaId antenna;

    friend bool operator==(const CdrRecord&, const CdrRecord&) = default;
};

inline constexpr int kSlotsPerWeek = 7 * 24;
inline constexpr std::int64_t kSecondsPerDay = 86400;
inline constexpr std::int64_t kSecondsPerWeek = 7 * kSecondsPerDay;

/// Weekly hour bucket: index = weekday * 24 + hour, Monday = 0, local time.
struct TimeSlot {
    int index = 0;

    constexpr int weekday() const { return index / 24; }
    constexpr int hour() const { return index % 24; }
    friend constexpr auto operator<=>(TimeSlot, TimeSlot) = default;
};

constexpr bool valid_utc_offset(int hours) { return hours >= -12 && hours <= 14; }

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

/// Local calendar day number (days since 1970-01-01 in local time).
constexpr std::int64_t local_day(std::int64_t timestamp, int utc_offset_hours) {
    return floor_div(timestamp + std::int64_t{utc_offset_hours} * 3600, kSecondsPerDay);
}

constexpr int local_hour(std::int64_t timestamp, int utc_offset_hours) {
    const std::int64_t local = timestamp + std::int64_t{utc_offset_hours} * 3600;
    return static_cast<int>((local - floor_div(local, kSecondsPerDay) * kSecondsPerDay) / 3600);
}

/// Monday = 0 ... Sunday = 6. 1970-01-01 was a Thursday.
constexpr int local_weekday(std::int64_t timestamp, int utc_offset_hours) {
    const std::int64_t day = local_day(timestamp, utc_offset_hours);
    return static_cast<int>(((day + 3) % 7 + 7) % 7);
}

constexpr TimeSlot time_slot(std::int64_t timestamp, int utc_offset_hours) {
    return TimeSlot{local_weekday(timestamp, utc_offset_hours) * 24
                    + local_hour(timestamp, utc_offset_hours)};
}

inline constexpr double kEarthRadiusKm = 6371.0088;

inline double haversine_km(GeoPoint a, GeoPoint b) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat - a.lat) * rad;
    const double dlon = (b.lon - a.lon) * rad;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    double h = s1 * s1 + std::cos(a.lat * rad) * std::cos(b.lat * rad) * s2 * s2;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

struct BoundingBox {
    GeoPoint min;
    GeoPoint max;

    bool valid() const { return min.lat < max.lat && min.lon < max.lon; }
    bool contains(GeoPoint p) const {
        return p.lat >= min.lat && p.lat <= max.lat && p.lon >= min.lon && p.lon <= max.lon;
    }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct GridIndex {
    int row = 0;
    int col = 0;
    friend constexpr auto operator<=>(GridIndex, GridIndex) = default;
};

/// Rectangular lattice over a bounding box. Rows follow latitude, columns
/// longitude, both counted from the box minimum.
class GridGeometry {
public:
    GridGeometry(BoundingBox bbox, double cell_deg) : bbox_(bbox), cell_deg_(cell_deg) {
        if (!(cell_deg > 0.0) || !bbox.valid())
            throw Error(ErrorKind::ConfigInvalid, "grid needs cell_deg > 0 and a non-degenerate bbox");
        rows_ = cells_along(bbox.max.lat - bbox.min.lat);
        cols_ = cells_along(bbox.max.lon - bbox.min.lon);
    }

    const BoundingBox& bbox() const { return bbox_; }
    double cell_deg() const { return cell_deg_; }
    int rows() const { return rows_; }
    int cols() const { return cols_; }

    std::optional<GridIndex> cell_of(GeoPoint p) const {
        if (!bbox_.contains(p)) return std::nullopt;
        const int row = std::min(rows_ - 1, static_cast<int>(std::floor((p.lat - bbox_.min.lat) / cell_deg_)));
        const int col = std::min(cols_ - 1, static_cast<int>(std::floor((p.lon - bbox_.min.lon) / cell_deg_)));
        return GridIndex{row, col};
    }

private:
    int cells_along(double span) const {
        // A span that is an exact multiple of the cell size must not gain a
        // sliver cell from rounding noise.
        const double n = span / cell_deg_;
        const double rounded = std::round(n);
        const double cells = std::abs(n - rounded) < 1e-9 ? rounded : std::ceil(n);
        return std::max(1, static_cast<int>(cells));
    }

    BoundingBox bbox_;
    double cell_deg_;
    int rows_ = 1;
    int cols_ = 1;
};

inline std::optional<GridIndex> grid_cell(GeoPoint point, BoundingBox bbox, double cell_deg) {
    return GridGeometry(bbox, cell_deg).cell_of(point);
}

inline const char* direction_token(CallDirection d) {
    return d == CallDirection::Outgoing ? "OUT" : "IN";
}

} // namespace cdrmob

template <>
struct std::hash<cdrmob::UserId> {
    std::size_t operator()(cdrmob::UserId u) const noexcept { return std::hash<std::uint64_t>{}(u.value); }
};

template <>
struct std::hash<cdrmob::AntennaId> {
    std::size_t operator()(cdrmob::AntennaId a) const noexcept { return std::hash<std::uint32_t>{}(a.value); }
};
