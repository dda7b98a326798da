#pragma once

// Stadium zones, consecutive-match fan tagging, the fixture-enriched
// predictor and its comparison against the baseline, and convergence grids
// around a match.

#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdrmob/commute.hpp"
#include "cdrmob/core.hpp"
#include "cdrmob/fixture.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/predictor.hpp"

namespace cdrmob {

inline constexpr double kDefaultZoneRadiusKm = 1.0;
inline constexpr std::size_t kDefaultConsecutiveMatches = 3;

struct StadiumZone {
    std::string match_id;
    std::vector<AntennaId> antennas; // ascending
    AntennaId representative;

    bool contains(AntennaId a) const { return std::binary_search(antennas.begin(), antennas.end(), a); }
    friend bool operator==(const StadiumZone&, const StadiumZone&) = default;
};

/// Antennas within `zone_radius_km` (inclusive) of the venue. The
/// representative is the one nearest the venue, ties by smallest id.
inline StadiumZone stadium_zone(const AntennaRegistry& registry, const MatchEvent& match, double zone_radius_km) {
    if (!(zone_radius_km > 0.0)) throw Error(ErrorKind::ConfigInvalid, "zone_radius_km must be > 0");
    StadiumZone zone{match.match_id, {}, {}};
    double best_km = 0.0;
    bool have_best = false;
    for (const auto& a : registry.sorted()) {
        const double d = haversine_km(match.venue, a.position());
        if (d > zone_radius_km) continue;
        zone.antennas.push_back(a.id);
        if (!have_best || d < best_km) {
            zone.representative = a.id;
            best_km = d;
            have_best = true;
        }
    }
    if (zone.antennas.empty()) throw Error(ErrorKind::EmptyZone, "match " + match.match_id);
    return zone;
}

inline std::vector<StadiumZone> stadium_zones(const AntennaRegistry& registry, const Fixture& fixture,
                                              double zone_radius_km) {
    std::vector<StadiumZone> zones;
    zones.reserve(fixture.size());
    for (const auto& m : fixture.matches()) zones.push_back(stadium_zone(registry, m, zone_radius_km));
    return zones;
}

struct FanTagSet {
    std::string team;
    std::set<UserId> users;
    std::size_t k_consecutive = kDefaultConsecutiveMatches;
    double zone_radius_km = kDefaultZoneRadiusKm;

    bool contains(UserId u) const { return users.contains(u); }
    std::size_t size() const { return users.size(); }
};

/// Which fixture matches each user was seen at (in-zone record during the
/// window). Indexed by match position.
inline std::unordered_map<UserId, std::vector<bool>> match_presence(std::span<const CdrRecord> records,
                                                                   const Fixture& fixture,
                                                                   std::span<const StadiumZone> zones) {
    std::unordered_map<UserId, std::vector<bool>> seen;
    for (const auto& r : records) {
        const auto m = fixture.match_at(r.timestamp);
        if (!m || !zones[*m].contains(r.antenna)) continue;
        auto& v = seen[r.user];
        if (v.empty()) v.assign(fixture.size(), false);
        v[*m] = true;
    }
    return seen;
}

inline bool has_run(const std::vector<bool>& present, std::size_t k) {
    std::size_t run = 0;
    for (bool p : present) {
        run = p ? run + 1 : 0;
        if (run >= k) return true;
    }
    return false;
}

/// Tags users seen in the stadium zone during `k` consecutive fixture matches.
inline FanTagSet tag_fans(std::span<const CdrRecord> records, const Fixture& fixture, const AntennaRegistry& registry,
                          double zone_radius_km = kDefaultZoneRadiusKm, std::size_t k = kDefaultConsecutiveMatches) {
    if (k < 1) throw Error(ErrorKind::ConfigInvalid, "k_consecutive must be >= 1");
    if (fixture.empty()) throw Error(ErrorKind::ConfigInvalid, "fixture is empty");
    const auto zones = stadium_zones(registry, fixture, zone_radius_km);
    FanTagSet tags{fixture.team(), {}, k, zone_radius_km};
    for (const auto& [user, present] : match_presence(records, fixture, zones))
        if (has_run(present, k)) tags.users.insert(user);
    return tags;
}

/// Zone representative for tagged users inside a match window, the baseline
/// prediction otherwise.
inline std::optional<AntennaId> enriched_predict(const BaselineModel& model, const FanTagSet& tags,
                                                 const Fixture& fixture, std::span<const StadiumZone> zones,
                                                 UserId user, std::int64_t timestamp, int utc_offset) {
    if (tags.contains(user)) {
        if (auto m = fixture.match_at(timestamp)) return zones[*m].representative;
    }
    return model.predict(user, time_slot(timestamp, utc_offset));
}

enum class ClusterMode { ExactAntenna, ZoneSet };

inline std::optional<ClusterMode> parse_cluster_mode(std::string_view s) {
    if (s == "exact") return ClusterMode::ExactAntenna;
    if (s == "zone") return ClusterMode::ZoneSet;
    return std::nullopt;
}

struct EnrichedEvalReport {
    EvalReport baseline;
    EvalReport enriched;
};

/// Scores baseline and enriched predictions on the test records of tagged
/// users that fall inside a match window.
inline EnrichedEvalReport compare_on_matches(const BaselineModel& model, const FanTagSet& tags, const Fixture& fixture,
                                             std::span<const StadiumZone> zones, std::span<const CdrRecord> test,
                                             ClusterMode mode, int utc_offset) {
    EnrichedEvalReport rep;
    for (const auto& r : test) {
        if (!tags.contains(r.user)) continue;
        const auto m = fixture.match_at(r.timestamp);
        if (!m) continue;
        const TimeSlot slot = time_slot(r.timestamp, utc_offset);

        const auto base = model.predict(r.user, slot);
        rep.baseline.record(slot, base.has_value(), base && *base == r.antenna);

        const auto enr = enriched_predict(model, tags, fixture, zones, r.user, r.timestamp, utc_offset);
        const bool correct = mode == ClusterMode::ZoneSet ? zones[*m].contains(r.antenna) : *enr == r.antenna;
        rep.enriched.record(slot, true, correct);
    }
    return rep;
}

inline std::string enriched_report_csv(const EnrichedEvalReport& r) {
    std::string out = "variant,total,predicted,correct,accuracy,coverage\n";
    auto row = [&](const char* name, const EvalReport& e) {
        const auto t = e.totals();
        out += std::string(name) + "," + std::to_string(t.total) + "," + std::to_string(t.predicted) + ","
             + std::to_string(t.correct) + "," + format_optional(e.accuracy()) + "," + format_optional(e.coverage())
             + "\n";
    };
    row("baseline", r.baseline);
    row("enriched", r.enriched);
    return out;
}

inline std::string tags_csv(const FanTagSet& tags) {
    std::string out = "user_id,team\n";
    for (const auto& u : tags.users) out += std::to_string(u.value) + "," + tags.team + "\n";
    return out;
}

inline FanTagSet load_tags(const std::filesystem::path& path, std::size_t k = kDefaultConsecutiveMatches,
                           double zone_radius_km = kDefaultZoneRadiusKm) {
    LineReader reader(path);
    auto header = reader.next();
    if (!header || *header != "user_id,team")
        throw Error(ErrorKind::MalformedLine, line_context(path, 1) + ": expected header 'user_id,team'");
    FanTagSet tags{{}, {}, k, zone_radius_km};
    while (auto line = reader.next()) {
        if (line->empty()) continue;
        std::array<std::string_view, 2> f;
        UserId u;
        if (!detail::split_exact(*line, f) || !detail::parse_number(f[0], u.value))
            throw Error(ErrorKind::MalformedLine, line_context(path, reader.line_number()));
        tags.team = std::string(f[1]);
        tags.users.insert(u);
    }
    return tags;
}

/// Users with at least one in-zone record during the match window.
inline std::set<UserId> match_attendees(std::span<const CdrRecord> records, const MatchEvent& match,
                                        const StadiumZone& zone) {
    std::set<UserId> out;
    for (const auto& r : records)
        if (match.in_window(r.timestamp) && zone.contains(r.antenna)) out.insert(r.user);
    return out;
}

/// One grid per offset over [kickoff + offset h, kickoff + offset h + 1h),
/// restricted to the post-selected attendees of the match.
inline std::vector<DensityGrid> convergence_grids(std::span<const CdrRecord> records, const AntennaRegistry& registry,
                                                  const MatchEvent& match, const StadiumZone& zone, BoundingBox bbox,
                                                  double cell_deg, std::span<const int> offsets_hours,
                                                  unsigned threads = 1) {
    const auto attendees = match_attendees(records, match, zone);
    const GridGeometry geometry(bbox, cell_deg);
    std::vector<DensityGrid> grids;
    grids.reserve(offsets_hours.size());
    for (int off : offsets_hours) {
        const std::int64_t start = match.kickoff + std::int64_t{off} * 3600;
        grids.push_back(density_grid_if(records, registry, geometry, TimeWindow{start, start + 3600}, 0,
                                        [&](const CdrRecord& r) { return attendees.contains(r.user); }, threads));
    }
    return grids;
}

} // namespace cdrmob
