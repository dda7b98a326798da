#pragma once

// A team's match schedule: the external data source joined against CDRs.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cdrmob/core.hpp"
#include "cdrmob/ingest.hpp"

namespace cdrmob {

inline constexpr std::string_view kFixtureHeader =
    "match_id,team,venue_lat,venue_lon,kickoff_epoch,window_start_epoch,window_end_epoch";

struct MatchEvent {
    std::string match_id;
    std::string team;
    GeoPoint venue;
    std::int64_t kickoff = 0;
    std::int64_t window_start = 0; // inclusive
    std::int64_t window_end = 0;   // exclusive

    bool in_window(std::int64_t t) const { return t >= window_start && t < window_end; }
    friend bool operator==(const MatchEvent&, const MatchEvent&) = default;
};

/// Matches of one team in kickoff order with disjoint windows.
class Fixture {
public:
    Fixture() = default;

    explicit Fixture(std::vector<MatchEvent> matches) : matches_(std::move(matches)) {
        for (std::size_t i = 0; i < matches_.size(); ++i) {
            const auto& m = matches_[i];
            if (!(m.window_start <= m.kickoff && m.kickoff < m.window_end))
                throw Error(ErrorKind::ConfigInvalid, "match " + m.match_id + ": window must contain kickoff");
            if (!valid_coordinates(m.venue.lat, m.venue.lon))
                throw Error(ErrorKind::CoordinateOutOfRange, "match " + m.match_id + ": venue");
            if (i > 0) {
                const auto& prev = matches_[i - 1];
                if (m.team != prev.team)
                    throw Error(ErrorKind::ConfigInvalid, "fixture mixes teams '" + prev.team + "' and '" + m.team + "'");
                if (m.kickoff <= prev.kickoff)
                    throw Error(ErrorKind::ConfigInvalid, "match " + m.match_id + ": kickoffs must strictly increase");
                if (m.window_start < prev.window_end)
                    throw Error(ErrorKind::ConfigInvalid, "match " + m.match_id + ": window overlaps " + prev.match_id);
            }
        }
    }

    const std::vector<MatchEvent>& matches() const { return matches_; }
    std::size_t size() const { return matches_.size(); }
    bool empty() const { return matches_.empty(); }
    const MatchEvent& operator[](std::size_t i) const { return matches_[i]; }
    std::string team() const { return matches_.empty() ? std::string{} : matches_.front().team; }

    /// Index of the match whose window contains `t`, if any.
    std::optional<std::size_t> match_at(std::int64_t t) const {
        // windows are disjoint and sorted, so the candidate is the last one
        // starting at or before t
        auto it = std::upper_bound(matches_.begin(), matches_.end(), t,
                                   [](std::int64_t v, const MatchEvent& m) { return v < m.window_start; });
        if (it == matches_.begin()) return std::nullopt;
        --it;
        if (!it->in_window(t)) return std::nullopt;
        return static_cast<std::size_t>(it - matches_.begin());
    }

    std::optional<std::size_t> find(std::string_view match_id) const {
        for (std::size_t i = 0; i < matches_.size(); ++i)
            if (matches_[i].match_id == match_id) return i;
        return std::nullopt;
    }

    friend bool operator==(const Fixture&, const Fixture&) = default;

private:
    std::vector<MatchEvent> matches_;
};

inline Fixture load_fixture(const std::filesystem::path& path) {
    LineReader reader(path);
    auto header = reader.next();
    if (!header || *header != kFixtureHeader)
        throw Error(ErrorKind::MalformedLine, line_context(path, 1) + ": expected header '" + std::string(kFixtureHeader) + "'");
    std::vector<MatchEvent> matches;
    while (auto line = reader.next()) {
        if (line->empty()) continue;
        std::array<std::string_view, 7> f;
        MatchEvent m;
        if (!detail::split_exact(*line, f) || f[0].empty() || !detail::parse_number(f[2], m.venue.lat)
            || !detail::parse_number(f[3], m.venue.lon) || !detail::parse_number(f[4], m.kickoff)
            || !detail::parse_number(f[5], m.window_start) || !detail::parse_number(f[6], m.window_end))
            throw Error(ErrorKind::MalformedLine, line_context(path, reader.line_number()));
        m.match_id = std::string(f[0]);
        m.team = std::string(f[1]);
        matches.push_back(std::move(m));
    }
    try {
        return Fixture(std::move(matches));
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

inline std::string fixture_csv(const Fixture& fixture) {
    std::string out(kFixtureHeader);
    out.push_back('\n');
    for (const auto& m : fixture.matches()) {
        out += m.match_id + "," + m.team + "," + format_double(m.venue.lat) + "," + format_double(m.venue.lon) + ","
             + std::to_string(m.kickoff) + "," + std::to_string(m.window_start) + "," + std::to_string(m.window_end)
             + "\n";
    }
    return out;
}

} // namespace cdrmob
