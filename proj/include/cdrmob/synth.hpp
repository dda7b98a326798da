#pragma once

// Seeded synthetic populations and CDR streams with planted ground truth.
//
// Population: `n_antennas` regular antennas uniform over the bbox, plus
// `n_venues` stadium antennas (optionally kept `venue_clearance_km` away from
// every regular antenna). Each user gets a home and a distinct work antenna,
// both drawn uniformly from the regular antennas, and a fan flag.
//
// Calls: per user per day, Poisson(call_rate) calls at uniform times. A call
// uses the slot anchor (work on weekdays 9:00-18:00 local, home otherwise)
// with probability p_slot_adherence, otherwise a uniform antenna from the
// whole registry. A fan attending a match places every call inside the match
// window at the venue's nearest antenna and additionally places
// 1 + Poisson(match_calls - 1) calls there at uniform times in the window.
//
// Random streams are keyed as described in rng.hpp; output is sorted, so
// files are byte-identical for any thread count.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <tuple>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "cdrmob/core.hpp"
#include "cdrmob/fixture.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/parallel.hpp"
#include "cdrmob/rng.hpp"

namespace cdrmob {

struct SynthConfig {
    std::uint64_t n_users = 1000;
    std::uint32_t n_antennas = 50;
    BoundingBox bbox{{-34.80, -58.60}, {-34.50, -58.30}};
    std::uint32_t weeks = 17;
    int utc_offset = -3;
    double call_rate = 8.0;
    double p_slot_adherence = 0.8;
    double fan_fraction = 0.1;
    double p_attend = 0.5;
    std::uint64_t seed = 42;

    // Extensions needed to lay out the synthetic fixture.
    std::int64_t start_epoch = 1704078000; // Monday 2024-01-01 00:00 at UTC-3
    std::uint32_t n_venues = 3;
    double venue_clearance_km = 0.0;
    std::uint32_t n_matches = 0; // 0: one match per week
    double match_calls = 1.0;
    std::string team = "TEAM";
    int window_before_h = 1;
    int window_after_h = 3;

    std::int64_t end_epoch() const { return start_epoch + std::int64_t{weeks} * kSecondsPerWeek; }
    std::uint32_t match_count() const { return n_venues == 0 ? 0 : (n_matches == 0 ? weeks : n_matches); }

    void validate() const {
        auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigInvalid, m); };
        auto prob = [&](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must be in [0,1]");
        };
        if (n_users == 0) fail("n_users must be > 0");
        if (n_antennas < 2) fail("n_antennas must be >= 2 (home and work must differ)");
        if (weeks == 0) fail("weeks must be > 0");
        if (!(call_rate > 0.0)) fail("call_rate must be > 0");
        prob(p_slot_adherence, "p_slot_adherence");
        prob(fan_fraction, "fan_fraction");
        prob(p_attend, "p_attend");
        if (!bbox.valid() || !valid_coordinates(bbox.min.lat, bbox.min.lon) || !valid_coordinates(bbox.max.lat, bbox.max.lon))
            fail("bbox must be a valid non-degenerate box");
        if (!valid_utc_offset(utc_offset)) fail("utc_offset must be in [-12, 14]");
        if ((start_epoch + std::int64_t{utc_offset} * 3600) % kSecondsPerWeek != 4 * kSecondsPerDay)
            fail("start_epoch must be a Monday 00:00 in local time");
        if (!(match_calls >= 1.0)) fail("match_calls must be >= 1");
        if (venue_clearance_km < 0.0) fail("venue_clearance_km must be >= 0");
        if (match_count() > weeks) fail("n_matches must not exceed weeks (one match per week)");
        if (window_before_h < 0 || window_after_h < 1 || window_before_h + window_after_h > 24)
            fail("match window hours out of range");
    }
};

/// Anchor rule shared by the generator and the ground truth.
constexpr bool is_work_slot(TimeSlot s) { return s.weekday() < 5 && s.hour() >= 9 && s.hour() < 18; }

struct UserTruth {
    UserId user;
    AntennaId home;
    AntennaId work;
    bool is_fan = false;

    AntennaId anchor(TimeSlot s) const { return is_work_slot(s) ? work : home; }
    friend bool operator==(const UserTruth&, const UserTruth&) = default;
};

struct SyntheticGroundTruth {
    std::vector<UserTruth> users;                            // ascending user id
    std::set<std::pair<std::uint64_t, std::string>> attended; // (user, match_id)

    std::size_t fan_count() const {
        return static_cast<std::size_t>(std::count_if(users.begin(), users.end(), [](const UserTruth& u) { return u.is_fan; }));
    }
    friend bool operator==(const SyntheticGroundTruth&, const SyntheticGroundTruth&) = default;
};

struct Population {
    AntennaRegistry registry;
    std::vector<AntennaId> regular; // anchor candidates
    std::vector<AntennaId> venues;
    SyntheticGroundTruth truth;
};

namespace synth_tag {
inline constexpr std::uint64_t kAntennas = 1;
inline constexpr std::uint64_t kVenues = 2;
inline constexpr std::uint64_t kUser = 3;
inline constexpr std::uint64_t kDay = 4;
inline constexpr std::uint64_t kMatchCalls = 5;
inline constexpr std::uint64_t kAttend = 6;
} // namespace synth_tag

/// User ids are 1..n_users, antenna ids 1..n_antennas then the venues.
inline Population generate_population(const SynthConfig& cfg) {
    cfg.validate();
    Population pop;
    const auto& box = cfg.bbox;
    Rng arng(cfg.seed, synth_tag::kAntennas);
    for (std::uint32_t i = 0; i < cfg.n_antennas; ++i) {
        Antenna a{AntennaId{i + 1}, arng.uniform(box.min.lat, box.max.lat), arng.uniform(box.min.lon, box.max.lon)};
        pop.registry.add(a);
        pop.regular.push_back(a.id);
    }
    Rng vrng(cfg.seed, synth_tag::kVenues);
    for (std::uint32_t v = 0; v < cfg.n_venues; ++v) {
        Antenna a{AntennaId{cfg.n_antennas + v + 1}, 0.0, 0.0};
        for (int attempt = 0;; ++attempt) {
            if (attempt == 100000)
                throw Error(ErrorKind::ConfigInvalid, "cannot place venue with the requested clearance");
            a.lat = vrng.uniform(box.min.lat, box.max.lat);
            a.lon = vrng.uniform(box.min.lon, box.max.lon);
            bool clear = true;
            for (AntennaId r : pop.regular) {
                if (haversine_km(a.position(), pop.registry.at(r).position()) < cfg.venue_clearance_km) {
                    clear = false;
                    break;
                }
            }
            if (clear) break;
        }
        pop.registry.add(a);
        pop.venues.push_back(a.id);
    }
    pop.truth.users.reserve(cfg.n_users);
    for (std::uint64_t u = 1; u <= cfg.n_users; ++u) {
        Rng rng(cfg.seed, synth_tag::kUser, u);
        const auto home = rng.uniform_below(cfg.n_antennas);
        auto work = rng.uniform_below(cfg.n_antennas - 1);
        if (work >= home) ++work;
        const bool fan = rng.bernoulli(cfg.fan_fraction);
        pop.truth.users.push_back({UserId{u}, pop.regular[home], pop.regular[work], fan});
    }
    return pop;
}

/// One match per week for the first `match_count()` weeks, alternating
/// Saturday/Sunday, kickoff hour cycling through 13, 15, 17, 19, 21 local.
/// Even matches are at the home venue, odd ones rotate through the others.
inline Fixture make_fixture(const SynthConfig& cfg, const Population& pop) {
    static constexpr int kKickoffHours[] = {13, 15, 17, 19, 21};
    std::vector<MatchEvent> matches;
    const std::uint32_t n = cfg.match_count();
    for (std::uint32_t i = 0; i < n; ++i) {
        const int weekday = 5 + static_cast<int>(i % 2);
        const int hour = kKickoffHours[i % 5];
        const std::int64_t week_start = cfg.start_epoch + std::int64_t{i} * kSecondsPerWeek;
        const std::int64_t kickoff = week_start + std::int64_t{weekday} * kSecondsPerDay + std::int64_t{hour} * 3600;
        std::size_t venue = 0;
        if (i % 2 == 1 && pop.venues.size() > 1) venue = 1 + (i / 2) % (pop.venues.size() - 1);
        const Antenna& v = pop.registry.at(pop.venues[venue]);
        char id[16];
        std::snprintf(id, sizeof id, "M%03u", i + 1);
        matches.push_back({id, cfg.team, v.position(), kickoff, kickoff - cfg.window_before_h * 3600,
                           kickoff + cfg.window_after_h * 3600});
    }
    return Fixture(std::move(matches));
}

/// Draws which fans attend which matches.
inline void plan_attendance(Population& pop, const Fixture& fixture, const SynthConfig& cfg) {
    pop.truth.attended.clear();
    for (const auto& u : pop.truth.users) {
        if (!u.is_fan) continue;
        for (std::size_t m = 0; m < fixture.size(); ++m) {
            Rng rng(cfg.seed, synth_tag::kAttend, u.user.value, m);
            if (rng.bernoulli(cfg.p_attend)) pop.truth.attended.emplace(u.user.value, fixture[m].match_id);
        }
    }
}

inline bool record_order(const CdrRecord& a, const CdrRecord& b) {
    auto key = [](const CdrRecord& r) {
        return std::tuple(r.timestamp, r.user.value, r.antenna.value, static_cast<int>(r.direction),
                          r.peer.has_value(), r.peer ? r.peer->value : 0);
    };
    return key(a) < key(b);
}

class CdrGenerator {
public:
    CdrGenerator(const Population& pop, const Fixture& fixture, const SynthConfig& cfg)
        : pop_(pop), fixture_(fixture), cfg_(cfg) {
        cfg.validate();
        for (const auto& m : fixture.matches()) {
            if (m.window_start < cfg.start_epoch || m.window_end > cfg.end_epoch())
                throw Error(ErrorKind::ConfigInvalid, "match " + m.match_id + " window outside the generated range");
            venue_antenna_.push_back(nearest_antenna(pop.registry, m.venue)->id);
        }
        all_antennas_.reserve(pop.registry.size());
        for (const auto& a : pop.registry.sorted()) all_antennas_.push_back(a.id);
        attends_.assign(pop.truth.users.size(), {});
        for (std::size_t i = 0; i < pop.truth.users.size(); ++i) {
            const auto uid = pop.truth.users[i].user.value;
            for (std::size_t m = 0; m < fixture.size(); ++m)
                if (pop.truth.attended.contains({uid, fixture[m].match_id})) attends_[i].push_back(m);
        }
    }

    std::uint32_t days() const { return cfg_.weeks * 7; }

    /// All records of day `d` (0-based from start_epoch), sorted.
    std::vector<CdrRecord> day(std::uint32_t d, unsigned threads = 1) const {
        const auto& users = pop_.truth.users;
        const auto shards = make_shards(users.size(), std::max(1u, threads) * 4);
        std::vector<std::vector<CdrRecord>> parts(shards.size());
        run_shards(shards, threads, [&](const Shard& s) {
            for (std::size_t i = s.begin; i < s.end; ++i) user_day(i, d, parts[s.index]);
        });
        std::vector<CdrRecord> out;
        std::size_t total = 0;
        for (const auto& p : parts) total += p.size();
        out.reserve(total);
        for (auto& p : parts) out.insert(out.end(), p.begin(), p.end());
        std::sort(out.begin(), out.end(), record_order);
        return out;
    }

private:
    CdrRecord make_call(Rng& rng, const UserTruth& u, std::int64_t t, AntennaId antenna) const {
        CdrRecord r;
        r.timestamp = t;
        r.user = u.user;
        r.direction = rng.bernoulli(0.5) ? CallDirection::Outgoing : CallDirection::Incoming;
        if (cfg_.n_users > 1) {
            auto p = rng.uniform_below(cfg_.n_users - 1) + 1;
            if (p >= u.user.value) ++p;
            r.peer = UserId{p};
        }
        r.antenna = antenna;
        return r;
    }

    std::optional<std::size_t> attended_match_at(std::size_t user_index, std::int64_t t) const {
        if (attends_[user_index].empty()) return std::nullopt;
        auto m = fixture_.match_at(t);
        if (!m) return std::nullopt;
        const auto& a = attends_[user_index];
        if (!std::binary_search(a.begin(), a.end(), *m)) return std::nullopt;
        return m;
    }

    void user_day(std::size_t user_index, std::uint32_t d, std::vector<CdrRecord>& out) const {
        const UserTruth& u = pop_.truth.users[user_index];
        const std::int64_t day_start = cfg_.start_epoch + std::int64_t{d} * kSecondsPerDay;
        const std::int64_t day_end = day_start + kSecondsPerDay;
        Rng rng(cfg_.seed, synth_tag::kDay, u.user.value, d);
        const auto n = rng.poisson(cfg_.call_rate);
        for (std::uint64_t c = 0; c < n; ++c) {
            const std::int64_t t = day_start + static_cast<std::int64_t>(rng.uniform_below(kSecondsPerDay));
            AntennaId antenna;
            if (auto m = attended_match_at(user_index, t)) {
                antenna = venue_antenna_[*m];
            } else if (rng.bernoulli(cfg_.p_slot_adherence)) {
                antenna = u.anchor(time_slot(t, cfg_.utc_offset));
            } else {
                antenna = all_antennas_[rng.uniform_below(all_antennas_.size())];
            }
            out.push_back(make_call(rng, u, t, antenna));
        }
        for (std::size_t m : attends_[user_index]) {
            const auto& match = fixture_[m];
            if (match.window_end <= day_start || match.window_start >= day_end) continue;
            Rng mrng(cfg_.seed, synth_tag::kMatchCalls, u.user.value, m);
            const auto k = 1 + mrng.poisson(cfg_.match_calls - 1.0);
            const auto span = static_cast<std::uint64_t>(match.window_end - match.window_start);
            for (std::uint64_t c = 0; c < k; ++c) {
                const std::int64_t t = match.window_start + static_cast<std::int64_t>(mrng.uniform_below(span));
                CdrRecord r = make_call(mrng, u, t, venue_antenna_[m]);
                if (t >= day_start && t < day_end) out.push_back(r);
            }
        }
    }

    const Population& pop_;
    const Fixture& fixture_;
    const SynthConfig& cfg_;
    std::vector<AntennaId> venue_antenna_;
    std::vector<AntennaId> all_antennas_;
    std::vector<std::vector<std::size_t>> attends_;
};

/// Streams every generated record, day by day in sorted order, into `sink`.
/// Memory holds one day of records at a time.
template <typename Sink>
std::uint64_t generate_cdrs(const Population& pop, const Fixture& fixture, const SynthConfig& cfg, Sink&& sink,
                            unsigned threads = 1) {
    CdrGenerator gen(pop, fixture, cfg);
    std::uint64_t n = 0;
    for (std::uint32_t d = 0; d < gen.days(); ++d) {
        const auto records = gen.day(d, threads);
        for (const auto& r : records) sink(r);
        n += records.size();
    }
    return n;
}

inline std::string ground_truth_csv(const SyntheticGroundTruth& truth) {
    std::string out = "user_id,home_antenna,work_antenna,is_fan\n";
    for (const auto& u : truth.users)
        out += std::to_string(u.user.value) + "," + std::to_string(u.home.value) + "," + std::to_string(u.work.value)
             + "," + (u.is_fan ? "1" : "0") + "\n";
    return out;
}

inline std::string attendance_csv(const SyntheticGroundTruth& truth) {
    std::string out = "user_id,match_id\n";
    for (const auto& [user, match] : truth.attended) out += std::to_string(user) + "," + match + "\n";
    return out;
}

struct SynthFiles {
    std::filesystem::path antennas, cdrs, fixture, ground_truth, attendance;
    std::uint64_t record_count = 0;
};

/// Writes the full synthetic dataset into `dir` (created if missing).
inline SynthFiles write_synthetic_dataset(const SynthConfig& cfg, const std::filesystem::path& dir,
                                          unsigned threads = 1) {
    std::filesystem::create_directories(dir);
    Population pop = generate_population(cfg);
    const Fixture fixture = make_fixture(cfg, pop);
    plan_attendance(pop, fixture, cfg);
    SynthFiles files{dir / "antennas.csv", dir / "cdrs.csv", dir / "fixture.csv", dir / "ground_truth.csv",
                     dir / "attendance.csv"};
    write_antennas(files.antennas, pop.registry);
    write_text_file(files.fixture, fixture_csv(fixture));
    write_text_file(files.ground_truth, ground_truth_csv(pop.truth));
    write_text_file(files.attendance, attendance_csv(pop.truth));
    CdrWriter writer(files.cdrs);
    generate_cdrs(pop, fixture, cfg, [&](const CdrRecord& r) { writer.write(r); }, threads);
    writer.close();
    files.record_count = writer.written();
    return files;
}

} // namespace cdrmob
