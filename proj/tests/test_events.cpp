#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "cdrmob/events.hpp"
#include "cdrmob/synth.hpp"
#include "test_util.hpp"

using namespace cdrmob;
using namespace cdrmob::testing;

namespace {

constexpr std::int64_t kSaturday = 1704499200; // 2024-01-06 00:00 UTC
const GeoPoint kVenue{-34.6356, -58.3649};

MatchEvent match_at(int i, GeoPoint venue = kVenue) {
    const std::int64_t kickoff = kSaturday + std::int64_t{i} * kSecondsPerWeek + 18 * 3600;
    return {"M" + std::to_string(i + 1), "TEAM", venue, kickoff, kickoff - 3600, kickoff + 3 * 3600};
}

Fixture fixture_of(int n) {
    std::vector<MatchEvent> v;
    for (int i = 0; i < n; ++i) v.push_back(match_at(i));
    return Fixture(v);
}

/// Venue antenna 1, a second zone antenna 2 at 0.6 km, home 3 and work 4 far away.
AntennaRegistry stadium_registry() {
    const auto in = north_of(kVenue, 0.6), home = north_of(kVenue, 8.0), work = north_of(kVenue, -6.0);
    return registry_of({{AntennaId{1}, kVenue.lat, kVenue.lon},
                        {AntennaId{2}, in.lat, in.lon},
                        {AntennaId{3}, home.lat, home.lon},
                        {AntennaId{4}, work.lat, work.lon}});
}

struct SynthRun {
    SynthConfig cfg;
    Population pop;
    Fixture fixture;
    std::vector<CdrRecord> records;
};

SynthRun run_synth(const SynthConfig& c) {
    SynthRun s{c, generate_population(c), {}, {}};
    s.fixture = make_fixture(c, s.pop);
    plan_attendance(s.pop, s.fixture, c);
    generate_cdrs(s.pop, s.fixture, s.cfg, [&](const CdrRecord& r) { s.records.push_back(r); });
    return s;
}

SynthConfig noise_free() {
    SynthConfig c;
    c.n_users = 300;
    c.n_antennas = 40;
    c.weeks = 8;
    c.call_rate = 3;
    c.p_slot_adherence = 1.0;
    c.fan_fraction = 0.3;
    c.p_attend = 1.0;
    c.venue_clearance_km = 2.0;
    return c;
}

} // namespace

TEST(StadiumZone, InclusiveRadiusAndRepresentative) {
    const auto o = kVenue;
    const auto a = north_of(o, 0.3), b = north_of(o, 0.999), c = north_of(o, 1.5), d = north_of(o, -0.2);
    const auto reg = registry_of({{AntennaId{7}, a.lat, a.lon}, {AntennaId{3}, b.lat, b.lon},
                                  {AntennaId{9}, c.lat, c.lon}, {AntennaId{5}, d.lat, d.lon}});
    const auto z = stadium_zone(reg, match_at(0), 1.0);
    EXPECT_EQ(z.antennas, (std::vector<AntennaId>{AntennaId{3}, AntennaId{5}, AntennaId{7}}));
    EXPECT_EQ(z.representative, AntennaId{5});
    EXPECT_TRUE(z.contains(AntennaId{7}));
    EXPECT_FALSE(z.contains(AntennaId{9}));

    try {
        stadium_zone(reg, match_at(0), 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyZone);
    }
    EXPECT_THROW(stadium_zone(reg, match_at(0), 0.0), Error);
}

TEST(StadiumZone, MatchesDistanceScan) {
    std::mt19937_64 gen(11);
    for (int trial = 0; trial < 50; ++trial) {
        const auto reg = random_registry(gen, 60, 0.1);
        const double r = 0.5 + static_cast<double>(gen() % 300) / 100.0;
        const GeoPoint venue{-34.75, -58.55};
        std::vector<AntennaId> want;
        for (const auto& a : reg.antennas())
            if (haversine_km(venue, a.position()) <= r) want.push_back(a.id);
        std::sort(want.begin(), want.end());
        if (want.empty()) {
            EXPECT_THROW(stadium_zone(reg, match_at(0, venue), r), Error);
            continue;
        }
        const auto z = stadium_zone(reg, match_at(0, venue), r);
        EXPECT_EQ(z.antennas, want);
        for (auto id : want)
            EXPECT_LE(haversine_km(venue, reg.at(z.representative).position()), haversine_km(venue, reg.at(id).position()));
    }
}

TEST(TagFans, NeedsAnUnbrokenRun) {
    const auto reg = stadium_registry();
    const auto f = fixture_of(5);
    std::vector<CdrRecord> v;
    for (int m : {0, 1, 2}) v.push_back(rec(f[m].kickoff + 60, 1, 1));
    for (int m : {0, 1, 3}) v.push_back(rec(f[m].kickoff + 60, 2, 2));
    for (int m : {0, 1, 2}) v.push_back(rec(f[m].kickoff - 7200, 3, 1)); // before the windows
    for (int m : {0, 1, 2}) v.push_back(rec(f[m].kickoff, 4, 3));        // out of zone
    const auto tags = tag_fans(v, f, reg);
    EXPECT_EQ(tags.users, std::set<UserId>{UserId{1}});
    EXPECT_EQ(tags.team, "TEAM");
    EXPECT_EQ(tag_fans(v, f, reg, 1.0, 2).users, (std::set<UserId>{UserId{1}, UserId{2}}));
    EXPECT_EQ(tags_csv(tags), "user_id,team\n1,TEAM\n");
    EXPECT_THROW(tag_fans(v, f, reg, 1.0, 0), Error);
    EXPECT_THROW(tag_fans(v, Fixture{}, reg), Error);
}

TEST(TagFans, MonotoneInRunLengthAndRadius) {
    SynthConfig c = noise_free();
    c.p_slot_adherence = 0.7;
    c.p_attend = 0.6;
    const auto s = run_synth(c);
    for (std::size_t k = 1; k < 6; ++k) {
        const auto a = tag_fans(s.records, s.fixture, s.pop.registry, 1.0, k);
        const auto b = tag_fans(s.records, s.fixture, s.pop.registry, 1.0, k + 1);
        EXPECT_TRUE(std::includes(a.users.begin(), a.users.end(), b.users.begin(), b.users.end()));
    }
    const auto small = tag_fans(s.records, s.fixture, s.pop.registry, 0.5, 3);
    const auto large = tag_fans(s.records, s.fixture, s.pop.registry, 3.0, 3);
    EXPECT_TRUE(std::includes(large.users.begin(), large.users.end(), small.users.begin(), small.users.end()));
}

TEST(TagFans, NoiseFreeSynthIsExact) {
    const auto c = noise_free();
    const auto s = run_synth(c);
    std::set<UserId> fans;
    for (const auto& u : s.pop.truth.users)
        if (u.is_fan) fans.insert(u.user);
    ASSERT_GT(fans.size(), 50u);
    EXPECT_EQ(tag_fans(s.records, s.fixture, s.pop.registry).users, fans);
}

TEST(TagFans, RoundTripThroughFile) {
    TempDir dir;
    FanTagSet tags{"TEAM", {UserId{4}, UserId{9}}};
    write_file(dir / "t.csv", tags_csv(tags));
    const auto back = load_tags(dir / "t.csv");
    EXPECT_EQ(back.users, tags.users);
    EXPECT_EQ(back.team, "TEAM");
    write_file(dir / "bad.csv", "user,team\n");
    EXPECT_THROW(load_tags(dir / "bad.csv"), Error);
}

TEST(EnrichedPredict, FallsBackToBaseline) {
    const auto reg = stadium_registry();
    const auto f = fixture_of(3);
    const auto zones = stadium_zones(reg, f, 1.0);
    std::mt19937_64 gen(5);
    const auto trainset = random_records(gen, 4000, 20, 4, f[0].kickoff - 2 * kSecondsPerWeek, 5 * kSecondsPerWeek);
    const auto model = train(trainset, DirectionFilter::All, 0);
    const FanTagSet tags{"TEAM", {UserId{1}, UserId{2}}};
    std::uniform_int_distribution<std::int64_t> t(f[0].kickoff - kSecondsPerWeek, f[2].kickoff + kSecondsPerWeek);
    for (int i = 0; i < 5000; ++i) {
        const UserId u{1 + gen() % 20};
        const auto ts = t(gen);
        const auto got = enriched_predict(model, tags, f, zones, u, ts, 0);
        if (tags.contains(u) && f.match_at(ts)) EXPECT_EQ(got, AntennaId{1});
        else EXPECT_EQ(got, model.predict(u, time_slot(ts, 0)));
    }
}

TEST(CompareOnMatches, ConstructedExample) {
    const auto reg = stadium_registry();
    const auto f = fixture_of(4);
    const auto zones = stadium_zones(reg, f, 1.0);
    // training: user 1 is at home (3) in the match slots; test: at the stadium
    std::vector<CdrRecord> trainset, test;
    for (int w = 0; w < 3; ++w) trainset.push_back(rec(f[3].kickoff + 60 - (w + 1) * kSecondsPerWeek - 4 * 3600, 1, 3));
    for (int w = 0; w < 3; ++w) trainset.push_back(rec(f[3].kickoff + 60 - (w + 1) * kSecondsPerWeek + 24 * 3600, 1, 3));
    const auto model = train(trainset, DirectionFilter::All, 0);
    test.push_back(rec(f[3].kickoff + 60, 1, 1));
    test.push_back(rec(f[3].kickoff + 120, 1, 2));
    test.push_back(rec(f[3].kickoff + 120, 5, 2));                     // untagged
    test.push_back(rec(f[3].kickoff + 24 * 3600 + 60, 1, 3));          // outside any window
    const FanTagSet tags{"TEAM", {UserId{1}}};

    const auto zone = compare_on_matches(model, tags, f, zones, test, ClusterMode::ZoneSet, 0);
    EXPECT_EQ(zone.enriched.total_events(), 2u);
    EXPECT_DOUBLE_EQ(*zone.enriched.accuracy(), 1.0);
    EXPECT_DOUBLE_EQ(*zone.enriched.coverage(), 1.0);
    EXPECT_EQ(zone.baseline.predicted_events(), 0u); // slot of the match never seen in training
    EXPECT_DOUBLE_EQ(*zone.baseline.coverage(), 0.0);

    const auto exact = compare_on_matches(model, tags, f, zones, test, ClusterMode::ExactAntenna, 0);
    EXPECT_DOUBLE_EQ(*exact.enriched.accuracy(), 0.5);

    const auto none = compare_on_matches(model, FanTagSet{}, f, zones, test, ClusterMode::ZoneSet, 0);
    EXPECT_EQ(none.baseline, none.enriched);
    EXPECT_EQ(none.baseline.total_events(), 0u);
    EXPECT_EQ(enriched_report_csv(none), "variant,total,predicted,correct,accuracy,coverage\nbaseline,0,0,0,,\nenriched,0,0,0,,\n");
}

TEST(CompareOnMatches, EnrichedBeatsBaselineOnSynth) {
    SynthConfig c = noise_free();
    c.n_users = 600;
    c.weeks = 12;
    c.call_rate = 1.0;
    c.p_slot_adherence = 0.8;
    c.p_attend = 0.5;
    const auto s = run_synth(c);
    const std::int64_t split = c.start_epoch + 10 * kSecondsPerWeek;
    std::vector<CdrRecord> trainset, test;
    for (const auto& r : s.records) (r.timestamp < split ? trainset : test).push_back(r);
    const auto model = train(trainset, DirectionFilter::All, c.utc_offset);
    const auto tags = tag_fans(trainset, s.fixture, s.pop.registry, 1.0, 3);
    const auto zones = stadium_zones(s.pop.registry, s.fixture, 1.0);
    const auto rep = compare_on_matches(model, tags, s.fixture, zones, test, ClusterMode::ZoneSet, c.utc_offset);
    ASSERT_GT(rep.enriched.total_events(), 30u);
    EXPECT_DOUBLE_EQ(*rep.enriched.coverage(), 1.0);
    const double base = rep.baseline.accuracy().value_or(0.0) * *rep.baseline.coverage();
    const double enr = *rep.enriched.accuracy();
    EXPECT_GE(enr, 1.8 * base);
}

TEST(ConvergenceGrids, MassSitsInTheZoneDuringTheMatch) {
    const auto c = noise_free();
    const auto s = run_synth(c);
    const auto& match = s.fixture[2];
    const auto zone = stadium_zone(s.pop.registry, match, 1.0);
    const std::vector<int> offsets{-5, -1, 1, 3};
    const auto grids = convergence_grids(s.records, s.pop.registry, match, zone, c.bbox, 0.01, offsets, 3);
    ASSERT_EQ(grids.size(), offsets.size());
    const GridGeometry geo(c.bbox, 0.01);
    const auto venue_cell = *geo.cell_of(s.pop.registry.at(zone.representative).position());
    for (std::size_t i : {1u, 2u}) {
        EXPECT_GT(grids[i].total(), 0u);
        EXPECT_EQ(grids[i].at(venue_cell), grids[i].total());
        EXPECT_EQ(*std::max_element(grids[i].cells().begin(), grids[i].cells().end()), grids[i].at(venue_cell));
    }
    EXPECT_EQ(grids[0].at(venue_cell), 0u); // nobody at the venue 5 h before kickoff
    const auto attendees = match_attendees(s.records, match, zone);
    std::size_t attended = 0;
    for (const auto& [u, id] : s.pop.truth.attended) attended += id == match.match_id;
    EXPECT_EQ(attendees.size(), attended);
}

TEST(Fixture, Validation) {
    auto a = match_at(0), b = match_at(1);
    EXPECT_NO_THROW(Fixture({a, b}));
    EXPECT_THROW(Fixture({b, a}), Error);
    auto other = b;
    other.team = "OTHER";
    EXPECT_THROW(Fixture({a, other}), Error);
    auto overlap = b;
    overlap.window_start = a.window_end - 1;
    overlap.kickoff = a.window_end;
    EXPECT_THROW(Fixture({a, overlap}), Error);
    auto outside = a;
    outside.kickoff = outside.window_end;
    EXPECT_THROW(Fixture({outside}), Error);

    const Fixture f({a, b});
    EXPECT_EQ(f.match_at(a.window_start), 0u);
    EXPECT_EQ(f.match_at(a.window_end), std::nullopt);
    EXPECT_EQ(f.match_at(b.kickoff), 1u);
    EXPECT_EQ(f.find("M2"), 1u);
}

TEST(Fixture, FileRoundTrip) {
    TempDir dir;
    const auto f = fixture_of(5);
    write_file(dir / "f.csv", fixture_csv(f));
    EXPECT_EQ(load_fixture(dir / "f.csv"), f);
    write_file(dir / "bad.csv", std::string(kFixtureHeader) + "\nM1,T,x,0,1,0,2\n");
    EXPECT_THROW(load_fixture(dir / "bad.csv"), Error);
}
