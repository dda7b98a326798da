#include <gtest/gtest.h>

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <random>

#include "cdrmob/ingest.hpp"
#include "test_util.hpp"

using namespace cdrmob;
using namespace cdrmob::testing;

namespace {

ErrorKind load_error(const std::filesystem::path& p) {
    try {
        load_antennas(p);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::Io;
}

AntennaRegistry three_antennas() {
    return registry_of({{AntennaId{1}, -34.6037, -58.3816}, {AntennaId{2}, -34.6345, -58.3642}, {AntennaId{3}, -34.6, -58.4}});
}

} // namespace

TEST(LoadAntennas, ReadsEveryLine) {
    TempDir dir;
    write_file(dir / "a.csv", "antenna_id,lat,lon\n1,-34.6037,-58.3816\n2,-34.6345,-58.3642\n");
    const auto reg = load_antennas(dir / "a.csv");
    ASSERT_EQ(reg.size(), 2u);
    EXPECT_DOUBLE_EQ(reg.at(AntennaId{2}).lat, -34.6345);
    EXPECT_DOUBLE_EQ(reg.at(AntennaId{1}).lon, -58.3816);
}

TEST(LoadAntennas, Errors) {
    TempDir dir;
    write_file(dir / "dup.csv", "antenna_id,lat,lon\n1,0,0\n1,1,1\n");
    EXPECT_EQ(load_error(dir / "dup.csv"), ErrorKind::DuplicateAntenna);
    write_file(dir / "range.csv", "antenna_id,lat,lon\n3,95.0,0.0\n");
    EXPECT_EQ(load_error(dir / "range.csv"), ErrorKind::CoordinateOutOfRange);
    write_file(dir / "bad.csv", "antenna_id,lat,lon\n1,0,0\n2,abc,0\n");
    EXPECT_EQ(load_error(dir / "bad.csv"), ErrorKind::MalformedLine);
    write_file(dir / "fields.csv", "antenna_id,lat,lon\n1,0\n");
    EXPECT_EQ(load_error(dir / "fields.csv"), ErrorKind::MalformedLine);
    write_file(dir / "empty.csv", "antenna_id,lat,lon\n");
    EXPECT_EQ(load_error(dir / "empty.csv"), ErrorKind::MalformedLine);
    EXPECT_EQ(load_error(dir / "missing.csv"), ErrorKind::Io);
}

TEST(LoadAntennas, MalformedLineNamesTheLine) {
    TempDir dir;
    write_file(dir / "bad.csv", "antenna_id,lat,lon\n1,0,0\n2,x,0\n");
    try {
        load_antennas(dir / "bad.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
    }
}

TEST(ParseCdrLine, Fields) {
    const auto reg = three_antennas();
    CdrRecord r;
    ASSERT_EQ(parse_cdr_line("1704067200,42,7,OUT,2", &reg, r), LineStatus::Ok);
    EXPECT_EQ(r, rec(1704067200, 42, 2, CallDirection::Outgoing, 7));
    ASSERT_EQ(parse_cdr_line("1704067200,42,,IN,3", &reg, r), LineStatus::Ok);
    EXPECT_FALSE(r.peer.has_value());
    EXPECT_EQ(r.direction, CallDirection::Incoming);

    EXPECT_EQ(parse_cdr_line("1704067200,42,,IN,9", &reg, r), LineStatus::UnknownAntenna);
    EXPECT_EQ(parse_cdr_line("1704067200,42,,SIDEWAYS,1", &reg, r), LineStatus::Malformed);
    EXPECT_EQ(parse_cdr_line("1704067200,42,,IN", &reg, r), LineStatus::Malformed);
    EXPECT_EQ(parse_cdr_line("1704067200,42,,IN,1,5", &reg, r), LineStatus::Malformed);
    EXPECT_EQ(parse_cdr_line("17040x7200,42,,IN,1", &reg, r), LineStatus::Malformed);
    EXPECT_EQ(parse_cdr_line("1704067200,-4,,IN,1", &reg, r), LineStatus::Malformed);
    EXPECT_EQ(parse_cdr_line("", &reg, r), LineStatus::Malformed);
}

TEST(StreamCdrs, ValidAndSkippedLines) {
    TempDir dir;
    const auto reg = three_antennas();
    write_file(dir / "c.csv", "timestamp,user_id,peer_id,direction,antenna_id\n"
                              "1704067200,1,2,OUT,1\n"
                              "1704067300,2,,IN,2\n"
                              "1704067400,1,3,OUT,99\n"
                              "1704067500,3,1,IN,3\n");
    std::vector<CdrRecord> got;
    const auto stats = stream_cdrs(dir / "c.csv", reg, ParsePolicy::SkipAndCount, 0,
                                   [&](const CdrRecord& r) { got.push_back(r); });
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(stats.record_count, 3u);
    EXPECT_EQ(stats.malformed_count, 1u);
    EXPECT_EQ(stats.user_count, 3u);
    EXPECT_EQ(got[2].user.value, 3u);

    try {
        stream_cdrs(dir / "c.csv", reg, ParsePolicy::Strict, 0, [](const CdrRecord&) {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnknownAntenna);
        EXPECT_NE(std::string(e.what()).find("c.csv:4"), std::string::npos) << e.what();
    }
}

TEST(StreamCdrs, StrictRejectsMalformedAndHeader) {
    TempDir dir;
    const auto reg = three_antennas();
    write_file(dir / "m.csv", "timestamp,user_id,peer_id,direction,antenna_id\n1,1,,UP,1\n");
    EXPECT_THROW(read_cdrs(dir / "m.csv", reg, ParsePolicy::Strict), Error);
    write_file(dir / "h.csv", "ts,user,peer,dir,antenna\n1,1,,IN,1\n");
    EXPECT_THROW(read_cdrs(dir / "h.csv", reg, ParsePolicy::SkipAndCount), Error);
}

TEST(DatasetStats, EmptyAndPerDay) {
    const std::vector<CdrRecord> none;
    const auto empty = dataset_stats(none, 0);
    EXPECT_EQ(empty, DatasetStats{});

    std::vector<CdrRecord> v;
    const auto d1 = epoch(2024, 3, 4), d2 = epoch(2024, 3, 5);
    for (int i = 0; i < 60; ++i) v.push_back(rec(d1 + i * 60, 1 + i % 7, 1));
    for (int i = 0; i < 40; ++i) v.push_back(rec(d2 + i * 60, 1 + i % 3, 1));
    const auto s = dataset_stats(v, 0);
    EXPECT_EQ(s.record_count, 100u);
    ASSERT_EQ(s.per_day_counts.size(), 2u);
    EXPECT_EQ(s.per_day_counts.at(local_day(d1, 0)), 60u);
    EXPECT_EQ(s.per_day_counts.at(local_day(d2, 0)), 40u);
    EXPECT_EQ(s.user_count, 7u);
    EXPECT_EQ(s.time_range, std::make_pair(d1, d2 + 39 * 60));
    EXPECT_EQ(format_local_date(local_day(d1, 0)), "2024-03-04");

    // local calendar days follow the offset: 01:00 UTC is the previous day at UTC-3
    const auto shifted = dataset_stats(std::vector{rec(d1 + 3600, 1, 1)}, -3);
    EXPECT_EQ(shifted.per_day_counts.begin()->first, local_day(d1, 0) - 1);
}

TEST(CdrFormat, RoundTripAndLineAccounting) {
    TempDir dir;
    std::mt19937_64 gen(5);
    const auto reg = three_antennas();
    for (int trial = 0; trial < 20; ++trial) {
        const auto records = random_records(gen, 1 + gen() % 500, 30, 3);
        {
            CdrWriter w(dir / "rt.csv");
            for (const auto& r : records) w.write(r);
        }
        DatasetStats stats;
        EXPECT_EQ(read_cdrs(dir / "rt.csv", reg, ParsePolicy::Strict, &stats), records);
        EXPECT_EQ(stats, dataset_stats(records, 0));

        // append junk lines: record_count + malformed_count == lines - header
        std::ofstream(dir / "rt.csv", std::ios::app) << "garbage\n1,2,3,OUT,77\n\n1,2,,IN,1,9\n";
        const auto s = stream_cdrs(dir / "rt.csv", reg, ParsePolicy::SkipAndCount, 0, [](const CdrRecord&) {});
        std::size_t lines = 0;
        LineReader lr(dir / "rt.csv");
        while (lr.next()) ++lines;
        EXPECT_EQ(s.record_count + s.malformed_count, lines - 1);
        EXPECT_EQ(s.malformed_count, 4u);
    }
}

TEST(AntennaFormat, RoundTripIsExact) {
    TempDir dir;
    std::mt19937_64 gen(9);
    const auto reg = random_registry(gen, 200);
    write_antennas(dir / "a.csv", reg);
    const auto back = load_antennas(dir / "a.csv");
    EXPECT_EQ(back.sorted(), reg.sorted());
}

TEST(LineReader, LongLinesAndMissingFinalNewline) {
    TempDir dir;
    const std::string long_line(3000, 'x');
    write_file(dir / "l.txt", "a\n" + long_line + "\nlast");
    LineReader r(dir / "l.txt", 64);
    EXPECT_EQ(*r.next(), "a");
    EXPECT_EQ(*r.next(), long_line);
    EXPECT_EQ(*r.next(), "last");
    EXPECT_EQ(r.line_number(), 3u);
    EXPECT_FALSE(r.next().has_value());
}

namespace {

std::size_t current_address_space() {
    std::ifstream statm("/proc/self/statm");
    std::size_t pages = 0;
    statm >> pages;
    return pages * static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
}

} // namespace

// A file several times larger than the address-space headroom still streams.
TEST(StreamCdrs, MemoryIndependentOfFileSize) {
    TempDir dir;
    const auto reg = three_antennas();
    constexpr std::uint64_t kLines = 4'000'000; // ~90 MB
    {
        CdrWriter w(dir / "big.csv");
        for (std::uint64_t i = 0; i < kLines; ++i)
            w.write(rec(1704067200 + static_cast<std::int64_t>(i), 1 + i % 50, 1 + i % 3, CallDirection::Outgoing, 1 + (i * 7) % 50));
    }
    const auto size = std::filesystem::file_size(dir / "big.csv");
    constexpr std::size_t kHeadroom = 24u << 20;
    ASSERT_GT(size, 3 * kHeadroom);

    const pid_t pid = ::fork();
    ASSERT_GE(pid, 0);
    if (pid == 0) {
        rlimit lim{};
        lim.rlim_cur = lim.rlim_max = current_address_space() + kHeadroom;
        ::setrlimit(RLIMIT_AS, &lim);
        int code = 0;
        try {
            std::uint64_t n = 0;
            const auto s = stream_cdrs(dir / "big.csv", reg, ParsePolicy::Strict, 0, [&](const CdrRecord&) { ++n; });
            code = (n == kLines && s.record_count == kLines) ? 0 : 1;
        } catch (...) {
            code = 2;
        }
        ::_exit(code);
    }
    int status = 0;
    ::waitpid(pid, &status, 0);
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 0);
}
