#pragma once

// Home/work anchors, commute radius and hourly call-density grids.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cdrmob/core.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/parallel.hpp"
#include "cdrmob/predictor.hpp"

namespace cdrmob {

/// Per-user antenna totals summed over every slot.
using UserAntennaTotals = std::unordered_map<UserId, AntennaCounts>;

inline UserAntennaTotals aggregate_over_slots(const SlotHistogram& h) {
    UserAntennaTotals totals;
    for (const auto& [key, counts] : h.entries()) {
        auto& t = totals[key.user];
        for (const auto& e : counts.entries()) t.add(e.antenna, e.count);
    }
    return totals;
}

struct ImportantPlaces {
    UserId user;
    AntennaCount first;
    std::optional<AntennaCount> second;
    std::uint64_t total_calls = 0;
    bool qualified = false; // >= min_calls calls and two distinct antennas
};

inline constexpr std::uint64_t kDefaultMinCalls = 10;

/// Two most used antennas per user, ranked by count then smallest id.
/// Result is sorted by user id.
inline std::vector<ImportantPlaces> important_places(const UserAntennaTotals& totals,
                                                     std::uint64_t min_calls = kDefaultMinCalls) {
    if (min_calls < 1) throw Error(ErrorKind::ConfigInvalid, "min_calls must be >= 1");
    std::vector<ImportantPlaces> out;
    out.reserve(totals.size());
    for (const auto& [user, counts] : totals) {
        if (counts.empty()) continue;
        auto ranked = counts.sorted();
        std::stable_sort(ranked.begin(), ranked.end(), [](AntennaCount a, AntennaCount b) { return a.count > b.count; });
        ImportantPlaces p{user, ranked[0], std::nullopt, counts.total(), false};
        if (ranked.size() > 1) p.second = ranked[1];
        p.qualified = p.second.has_value() && p.total_calls >= min_calls;
        out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const ImportantPlaces& a, const ImportantPlaces& b) { return a.user < b.user; });
    return out;
}

inline std::vector<ImportantPlaces> important_places(const SlotHistogram& h, std::uint64_t min_calls = kDefaultMinCalls) {
    return important_places(aggregate_over_slots(h), min_calls);
}

struct CommuteReport {
    std::uint64_t users_considered = 0;
    std::uint64_t users_qualified = 0;
    std::optional<double> mean_radius_km;
    std::optional<double> median_radius_km;
    std::vector<std::uint64_t> histogram; // bin i counts radii in [i, i+1) km
    std::vector<double> radii_km;         // per qualified user, in user order
};

inline CommuteReport commute_radius(std::span<const ImportantPlaces> places, const AntennaRegistry& registry) {
    CommuteReport rep;
    rep.users_considered = places.size();
    for (const auto& p : places) {
        if (!p.qualified) continue;
        const double r = haversine_km(registry.at(p.first.antenna).position(), registry.at(p.second->antenna).position());
        rep.radii_km.push_back(r);
        const auto bin = static_cast<std::size_t>(std::floor(r));
        if (rep.histogram.size() <= bin) rep.histogram.resize(bin + 1, 0);
        ++rep.histogram[bin];
    }
    rep.users_qualified = rep.radii_km.size();
    if (!rep.radii_km.empty()) {
        double sum = 0.0;
        for (double r : rep.radii_km) sum += r;
        rep.mean_radius_km = sum / static_cast<double>(rep.radii_km.size());
        auto sorted = rep.radii_km;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        rep.median_radius_km = n % 2 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
    }
    return rep;
}

inline std::string commute_report_csv(const CommuteReport& r) {
    std::string out = "users_considered,users_qualified,mean_radius_km,median_radius_km\n";
    out += std::to_string(r.users_considered) + "," + std::to_string(r.users_qualified) + ","
         + format_optional(r.mean_radius_km) + "," + format_optional(r.median_radius_km) + "\n";
    out += "bin_start_km,bin_end_km,users\n";
    for (std::size_t i = 0; i < r.histogram.size(); ++i)
        out += std::to_string(i) + "," + std::to_string(i + 1) + "," + std::to_string(r.histogram[i]) + "\n";
    return out;
}

inline std::string important_places_csv(std::span<const ImportantPlaces> places) {
    std::string out = "user_id,first_antenna,first_count,second_antenna,second_count,total_calls,qualified\n";
    for (const auto& p : places) {
        out += std::to_string(p.user.value) + "," + std::to_string(p.first.antenna.value) + ","
             + std::to_string(p.first.count) + ",";
        if (p.second) out += std::to_string(p.second->antenna.value) + "," + std::to_string(p.second->count);
        else out += ",";
        out += "," + std::to_string(p.total_calls) + "," + (p.qualified ? "1" : "0") + "\n";
    }
    return out;
}

/// Records at a given local hour of day, optionally restricted to Monday-Friday.
struct HourOfDay {
    int hour = 0;
    bool weekdays_only = false;
    friend constexpr bool operator==(HourOfDay, HourOfDay) = default;
};

/// Records with timestamp in [start, end).
struct TimeWindow {
    std::int64_t start = 0;
    std::int64_t end = 0;
    friend constexpr bool operator==(TimeWindow, TimeWindow) = default;
};

using TimeFilter = std::variant<HourOfDay, TimeWindow>;

inline bool matches(const TimeFilter& f, std::int64_t t, int utc_offset) {
    if (const auto* h = std::get_if<HourOfDay>(&f))
        return local_hour(t, utc_offset) == h->hour && (!h->weekdays_only || local_weekday(t, utc_offset) < 5);
    const auto& w = std::get<TimeWindow>(f);
    return t >= w.start && t < w.end;
}

inline std::string describe(const TimeFilter& f) {
    if (const auto* h = std::get_if<HourOfDay>(&f))
        return "hour=" + std::to_string(h->hour) + (h->weekdays_only ? " weekdays" : "");
    const auto& w = std::get<TimeWindow>(f);
    return "window=[" + std::to_string(w.start) + "," + std::to_string(w.end) + ")";
}

class DensityGrid {
public:
    DensityGrid(GridGeometry geometry, TimeFilter filter)
        : geometry_(geometry), filter_(filter),
          cells_(static_cast<std::size_t>(geometry.rows()) * static_cast<std::size_t>(geometry.cols()), 0) {}

    const GridGeometry& geometry() const { return geometry_; }
    const TimeFilter& time_filter() const { return filter_; }
    int rows() const { return geometry_.rows(); }
    int cols() const { return geometry_.cols(); }

    std::uint64_t at(int row, int col) const { return cells_[index(row, col)]; }
    std::uint64_t at(GridIndex g) const { return at(g.row, g.col); }
    void add(GridIndex g, std::uint64_t n = 1) { cells_[index(g.row, g.col)] += n; }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : cells_) t += c;
        return t;
    }

    DensityGrid& operator+=(const DensityGrid& o) {
        for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += o.cells_[i];
        return *this;
    }

    std::span<const std::uint64_t> cells() const { return cells_; }
    friend bool operator==(const DensityGrid& a, const DensityGrid& b) {
        return a.cells_ == b.cells_ && a.filter_ == b.filter_ && a.geometry_.bbox() == b.geometry_.bbox()
               && a.geometry_.cell_deg() == b.geometry_.cell_deg();
    }

private:
    std::size_t index(int row, int col) const {
        return static_cast<std::size_t>(row) * static_cast<std::size_t>(geometry_.cols()) + static_cast<std::size_t>(col);
    }

    GridGeometry geometry_;
    TimeFilter filter_;
    std::vector<std::uint64_t> cells_;
};

/// Counts records passing `filter` whose antenna lies inside the grid's bbox.
/// `keep` is an extra per-record predicate (e.g. user post-selection).
template <typename Keep>
DensityGrid density_grid_if(std::span<const CdrRecord> records, const AntennaRegistry& registry,
                            const GridGeometry& geometry, const TimeFilter& filter, int utc_offset, Keep&& keep,
                            unsigned threads = 1) {
    const auto shards = make_shards(records.size(), std::max(1u, threads));
    std::vector<DensityGrid> parts(shards.size(), DensityGrid(geometry, filter));
    run_shards(shards, threads, [&](const Shard& s) {
        auto& g = parts[s.index];
        for (std::size_t i = s.begin; i < s.end; ++i) {
            const auto& r = records[i];
            if (!matches(filter, r.timestamp, utc_offset) || !keep(r)) continue;
            const Antenna* a = registry.find(r.antenna);
            if (!a) continue;
            if (auto cell = geometry.cell_of(a->position())) g.add(*cell);
        }
    });
    DensityGrid grid(geometry, filter);
    for (const auto& p : parts) grid += p;
    return grid;
}

inline DensityGrid density_grid(std::span<const CdrRecord> records, const AntennaRegistry& registry, BoundingBox bbox,
                                double cell_deg, const TimeFilter& filter, int utc_offset, unsigned threads = 1) {
    return density_grid_if(records, registry, GridGeometry(bbox, cell_deg), filter, utc_offset,
                           [](const CdrRecord&) { return true; }, threads);
}

/// Header names, their values, then `row,col,count` for non-zero cells.
inline std::string grid_csv(const DensityGrid& g) {
    const auto& geo = g.geometry();
    std::string out = "bbox_min_lat,bbox_min_lon,bbox_max_lat,bbox_max_lon,cell_deg,rows,cols\n";
    out += format_double(geo.bbox().min.lat) + "," + format_double(geo.bbox().min.lon) + ","
         + format_double(geo.bbox().max.lat) + "," + format_double(geo.bbox().max.lon) + ","
         + format_double(geo.cell_deg()) + "," + std::to_string(geo.rows()) + "," + std::to_string(geo.cols()) + "\n";
    out += "row,col,count\n";
    for (int r = 0; r < g.rows(); ++r)
        for (int c = 0; c < g.cols(); ++c)
            if (auto n = g.at(r, c)) out += std::to_string(r) + "," + std::to_string(c) + "," + std::to_string(n) + "\n";
    return out;
}

} // namespace cdrmob
