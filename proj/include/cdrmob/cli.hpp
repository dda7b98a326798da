#pragma once

// Command-line front end. `run` is the whole program; tools/cdrmob.cpp only
// forwards argv to it, so tests can drive the CLI in-process.
//
// Configuration: `--config FILE` reads an INI file. Keys at the top level
// set global options, keys under `[synth]`, `[train]` ... set that
// subcommand's options. Keys are the long flag names without the leading
// dashes (`utc-offset = -3`). Flags on the command line win over the file.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cdrmob/commute.hpp"
#include "cdrmob/events.hpp"
#include "cdrmob/fixture.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/predictor.hpp"
#include "cdrmob/synth.hpp"

namespace cdrmob::cli {

namespace fs = std::filesystem;

/// Every knob the subcommands read. Defaults reproduce the synthetic
/// 15-week training / 2-week test protocol.
struct RunConfig {
    int utc_offset = -3;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    fs::path output = "out";
    fs::path antennas;
    fs::path cdrs;
    fs::path fixture;
    std::string policy = "skip";
    std::int64_t start_epoch = SynthConfig{}.start_epoch;
    std::uint32_t train_weeks = 15;
    std::uint32_t test_weeks = 2;

    // predictor
    std::string direction = "all";
    double cluster_km = 0.0;
    fs::path model;

    // commute and grids
    std::uint64_t min_calls = kDefaultMinCalls;
    std::vector<int> hours{6, 8, 10, 17, 19, 20};
    bool weekdays_only = true;
    std::vector<double> bbox; // min_lat,min_lon,max_lat,max_lon; empty = antenna bounds
    double cell_deg = 0.01;

    // events
    double zone_radius_km = kDefaultZoneRadiusKm;
    std::size_t k_consecutive = kDefaultConsecutiveMatches;
    std::string cluster_mode = "zone";
    fs::path tags;
    std::string match_id;
    std::vector<int> offsets{-5, -1, 1, 3};

    SynthConfig synth;
};

struct Period {
    std::optional<std::int64_t> from;
    std::optional<std::int64_t> until;
    bool contains(std::int64_t t) const { return (!from || t >= *from) && (!until || t < *until); }
};

inline Period train_period(const RunConfig& c) {
    return {c.start_epoch, c.start_epoch + std::int64_t{c.train_weeks} * kSecondsPerWeek};
}
inline Period test_period(const RunConfig& c) {
    const auto b = c.start_epoch + std::int64_t{c.train_weeks} * kSecondsPerWeek;
    return {b, b + std::int64_t{c.test_weeks} * kSecondsPerWeek};
}

class Runner {
public:
    Runner(const RunConfig& cfg, std::ostream& out) : cfg_(cfg), out_(out) {}

    void synth() {
        SynthConfig sc = cfg_.synth;
        sc.utc_offset = cfg_.utc_offset;
        sc.start_epoch = cfg_.start_epoch;
        const auto files = write_synthetic_dataset(sc, cfg_.output, cfg_.threads);
        out_ << "synth: " << files.record_count << " records, " << sc.n_users << " users, "
             << sc.n_antennas + sc.n_venues << " antennas, " << sc.match_count() << " matches -> "
             << cfg_.output.string() << "\n";
    }

    void stats() {
        const auto reg = registry();
        const auto s = stream_cdrs(require(cfg_.cdrs, "cdrs"), reg, policy(), cfg_.utc_offset, [](const CdrRecord&) {});
        write_text_file(cfg_.output / "stats.csv", stats_csv(s));
        out_ << "stats: " << s.record_count << " records, " << s.user_count << " users, " << s.per_day_counts.size()
             << " days, " << s.malformed_count << " malformed\n";
    }

    void train() {
        const auto reg = registry();
        const auto filter = direction();
        const Period period = train_period(cfg_);
        ModelTrainer trainer(filter, cfg_.utc_offset, cfg_.threads);
        std::vector<CdrRecord> batch;
        constexpr std::size_t kBatch = 1 << 20;
        batch.reserve(kBatch);
        std::uint64_t used = 0;
        const auto s = stream_cdrs(require(cfg_.cdrs, "cdrs"), reg, policy(), cfg_.utc_offset, [&](const CdrRecord& r) {
            if (!period.contains(r.timestamp)) return;
            batch.push_back(r);
            if (batch.size() == kBatch) {
                trainer.add_batch(batch);
                used += batch.size();
                batch.clear();
            }
        });
        trainer.add_batch(batch);
        used += batch.size();
        const auto model = trainer.finish();
        save_model(model_path(), model);
        out_ << "train: " << used << " of " << s.record_count << " records, direction " << to_string(filter) << ", "
             << model.size() << " (user,slot) cells -> " << model_path().string() << "\n";
    }

    void eval() {
        const auto reg = registry();
        const auto filter = direction();
        const auto model = load_model(model_path(), filter, to_range(train_period(cfg_)));
        const auto test = load_period(reg, test_period(cfg_));
        std::optional<AntennaClustering> clustering;
        if (cfg_.cluster_km > 0.0) clustering = cluster_antennas(reg, cfg_.cluster_km);
        const auto rep = evaluate(model, test, filter, cfg_.utc_offset, clustering ? &*clustering : nullptr, cfg_.threads);
        const auto file = cfg_.output / ("per_slot_" + std::string(to_string(filter)) + ".csv");
        write_per_slot_report(file, rep);
        if (rep.overlaps_training) std::cerr << "warning: test records overlap the training range\n";
        const auto t = rep.totals();
        out_ << "eval: direction " << to_string(filter) << ", events " << t.total << ", predicted " << t.predicted
             << ", correct " << t.correct << ", accuracy " << show(rep.accuracy()) << ", coverage "
             << show(rep.coverage()) << ", slot-mean accuracy " << show(rep.slot_mean_accuracy()) << " -> "
             << file.string() << "\n";
    }

    void commute() {
        const auto reg = registry();
        const auto records = load_period(reg, {});
        const auto model = cdrmob::train(records, DirectionFilter::All, cfg_.utc_offset, cfg_.threads);
        const auto places = important_places(model.histogram(), cfg_.min_calls);
        const auto rep = commute_radius(places, reg);
        write_text_file(cfg_.output / "commute.csv", commute_report_csv(rep));
        write_text_file(cfg_.output / "important_places.csv", important_places_csv(places));
        out_ << "commute: " << rep.users_qualified << " of " << rep.users_considered << " users qualified, mean radius "
             << show(rep.mean_radius_km) << " km, median " << show(rep.median_radius_km) << " km\n";
    }

    void grid() {
        const auto reg = registry();
        const auto records = load_period(reg, {});
        const auto box = bbox(reg);
        std::uint64_t mass = 0;
        for (int h : cfg_.hours) {
            if (h < 0 || h > 23) throw Error(ErrorKind::ConfigInvalid, "hour out of range: " + std::to_string(h));
            const auto g = density_grid(records, reg, box, cfg_.cell_deg, HourOfDay{h, cfg_.weekdays_only},
                                        cfg_.utc_offset, cfg_.threads);
            char name[32];
            std::snprintf(name, sizeof name, "grid_h%02d.csv", h);
            write_text_file(cfg_.output / name, grid_csv(g));
            mass += g.total();
        }
        out_ << "grid: " << cfg_.hours.size() << " grids " << GridGeometry(box, cfg_.cell_deg).rows() << "x"
             << GridGeometry(box, cfg_.cell_deg).cols() << ", total mass " << mass << "\n";
    }

    void tag_fans() {
        const auto reg = registry();
        const auto fixture = load_fixture(require(cfg_.fixture, "fixture"));
        const auto records = load_period(reg, train_period(cfg_));
        const auto tags = cdrmob::tag_fans(records, fixture, reg, cfg_.zone_radius_km, cfg_.k_consecutive);
        write_text_file(tags_path(), tags_csv(tags));
        out_ << "tag-fans: " << tags.size() << " users tagged for " << tags.team << " (k=" << tags.k_consecutive
             << ", radius " << format_double(tags.zone_radius_km) << " km)\n";
    }

    void eval_enriched() {
        const auto reg = registry();
        const auto fixture = load_fixture(require(cfg_.fixture, "fixture"));
        const auto model = load_model(model_path(), DirectionFilter::All, to_range(train_period(cfg_)));
        const auto tags = load_tags(tags_path(), cfg_.k_consecutive, cfg_.zone_radius_km);
        const auto zones = stadium_zones(reg, fixture, cfg_.zone_radius_km);
        const auto test = load_period(reg, test_period(cfg_));
        const auto mode = parse_cluster_mode(cfg_.cluster_mode);
        if (!mode) throw Error(ErrorKind::ConfigInvalid, "cluster-mode must be 'zone' or 'exact'");
        const auto rep = compare_on_matches(model, tags, fixture, zones, test, *mode, cfg_.utc_offset);
        write_text_file(cfg_.output / "enriched.csv", enriched_report_csv(rep));
        out_ << "eval-enriched: events " << rep.baseline.total_events() << ", baseline accuracy "
             << show(rep.baseline.accuracy()) << " coverage " << show(rep.baseline.coverage())
             << ", enriched accuracy " << show(rep.enriched.accuracy()) << " coverage "
             << show(rep.enriched.coverage()) << "\n";
    }

    void convergence() {
        const auto reg = registry();
        const auto fixture = load_fixture(require(cfg_.fixture, "fixture"));
        if (fixture.empty()) throw Error(ErrorKind::ConfigInvalid, "fixture is empty");
        std::size_t m = 0;
        if (!cfg_.match_id.empty()) {
            auto found = fixture.find(cfg_.match_id);
            if (!found) throw Error(ErrorKind::ConfigInvalid, "unknown match-id " + cfg_.match_id);
            m = *found;
        }
        const auto& match = fixture[m];
        const auto zone = stadium_zone(reg, match, cfg_.zone_radius_km);
        const auto records = load_period(reg, {});
        const auto grids = convergence_grids(records, reg, match, zone, bbox(reg), cfg_.cell_deg, cfg_.offsets,
                                             cfg_.threads);
        for (std::size_t i = 0; i < grids.size(); ++i) {
            const int off = cfg_.offsets[i];
            const std::string name = "convergence_" + match.match_id + "_" + (off < 0 ? "m" : "p")
                                   + std::to_string(std::abs(off)) + ".csv";
            write_text_file(cfg_.output / name, grid_csv(grids[i]));
        }
        out_ << "convergence: match " << match.match_id << ", " << grids.size() << " grids\n";
    }

private:
    static std::string show(const std::optional<double>& v) {
        if (!v) return "n/a";
        std::ostringstream s;
        s.precision(4);
        s << std::fixed << *v;
        return s.str();
    }

    static const fs::path& require(const fs::path& p, const char* what) {
        if (p.empty()) throw Error(ErrorKind::ConfigInvalid, std::string("missing --") + what);
        if (!fs::exists(p)) throw Error(ErrorKind::Io, p.string() + ": no such file");
        return p;
    }

    static std::optional<TimeRange> to_range(const Period& p) {
        if (!p.from || !p.until) return std::nullopt;
        return TimeRange{*p.from, *p.until - 1};
    }

    AntennaRegistry registry() const { return load_antennas(require(cfg_.antennas, "antennas")); }

    ParsePolicy policy() const {
        if (cfg_.policy == "strict") return ParsePolicy::Strict;
        if (cfg_.policy == "skip") return ParsePolicy::SkipAndCount;
        throw Error(ErrorKind::ConfigInvalid, "policy must be 'strict' or 'skip'");
    }

    DirectionFilter direction() const {
        auto f = parse_direction_filter(cfg_.direction);
        if (!f) throw Error(ErrorKind::ConfigInvalid, "direction must be all, out or in");
        return *f;
    }

    fs::path model_path() const {
        return cfg_.model.empty() ? cfg_.output / ("model_" + cfg_.direction + ".csv") : cfg_.model;
    }
    fs::path tags_path() const { return cfg_.tags.empty() ? cfg_.output / "tags.csv" : cfg_.tags; }

    BoundingBox bbox(const AntennaRegistry& reg) const {
        if (cfg_.bbox.empty()) return reg.bounds();
        if (cfg_.bbox.size() != 4) throw Error(ErrorKind::ConfigInvalid, "bbox needs min_lat,min_lon,max_lat,max_lon");
        return {{cfg_.bbox[0], cfg_.bbox[1]}, {cfg_.bbox[2], cfg_.bbox[3]}};
    }

    std::vector<CdrRecord> load_period(const AntennaRegistry& reg, const Period& period) const {
        std::vector<CdrRecord> out;
        stream_cdrs(require(cfg_.cdrs, "cdrs"), reg, policy(), cfg_.utc_offset, [&](const CdrRecord& r) {
            if (period.contains(r.timestamp)) out.push_back(r);
        });
        return out;
    }

    const RunConfig& cfg_;
    std::ostream& out_;
};

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    RunConfig cfg;
    CLI::App app{"Mobility analytics over call detail records"};
    app.set_config("--config", "", "INI config file; command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--output", cfg.output, "Output directory");
    app.add_option("--threads", cfg.threads, "Worker thread cap")->check(CLI::PositiveNumber);
    app.add_option("--utc-offset", cfg.utc_offset, "Local time offset in hours")->check(CLI::Range(-12, 14));
    app.add_option("--antennas", cfg.antennas, "Antenna CSV");
    app.add_option("--cdrs", cfg.cdrs, "CDR CSV");
    app.add_option("--fixture", cfg.fixture, "Fixture CSV");
    app.add_option("--policy", cfg.policy, "Bad-line policy: strict or skip")->check(CLI::IsMember({"strict", "skip"}));
    app.add_option("--start-epoch", cfg.start_epoch, "Dataset start (local Monday 00:00)");
    app.add_option("--train-weeks", cfg.train_weeks, "Training weeks from the start");
    app.add_option("--test-weeks", cfg.test_weeks, "Test weeks after the training period");

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
    auto& sc = cfg.synth;
    synth->add_option("--n-users", sc.n_users);
    synth->add_option("--n-antennas", sc.n_antennas);
    synth->add_option("--weeks", sc.weeks);
    synth->add_option("--call-rate", sc.call_rate, "Mean calls per user per day");
    synth->add_option("--p-slot-adherence", sc.p_slot_adherence);
    synth->add_option("--fan-fraction", sc.fan_fraction);
    synth->add_option("--p-attend", sc.p_attend);
    synth->add_option("--seed", sc.seed);
    synth->add_option("--n-venues", sc.n_venues);
    synth->add_option("--venue-clearance-km", sc.venue_clearance_km);
    synth->add_option("--n-matches", sc.n_matches, "0 = one match per week");
    synth->add_option("--match-calls", sc.match_calls, "Mean calls per attended match (>= 1)");
    synth->add_option("--team", sc.team);
    std::vector<double> synth_bbox;
    synth->add_option("--bbox", synth_bbox, "min_lat,min_lon,max_lat,max_lon")->delimiter(',')->expected(4);

    auto* stats = app.add_subcommand("stats", "Dataset statistics");
    auto* train = app.add_subcommand("train", "Train the per-slot baseline model");
    auto* eval = app.add_subcommand("eval", "Evaluate the baseline model on the test period");
    for (auto* sub : {train, eval}) {
        sub->add_option("--direction", cfg.direction, "all, out or in")->check(CLI::IsMember({"all", "out", "in"}));
        sub->add_option("--model", cfg.model, "Model CSV (default <output>/model_<direction>.csv)");
    }
    eval->add_option("--cluster-km", cfg.cluster_km, "Score at antenna-cluster level (0 = off)");

    auto* commute = app.add_subcommand("commute", "Important places and commute radius");
    commute->add_option("--min-calls", cfg.min_calls)->check(CLI::PositiveNumber);

    auto* grid = app.add_subcommand("grid", "Hourly call-density grids");
    grid->add_option("--hours", cfg.hours)->delimiter(',');
    grid->add_option("--weekdays-only", cfg.weekdays_only);

    auto* tag = app.add_subcommand("tag-fans", "Tag users seen at consecutive fixture matches");
    auto* enriched = app.add_subcommand("eval-enriched", "Compare the baseline and fixture-enriched predictors");
    enriched->add_option("--model", cfg.model, "Model CSV (default <output>/model_all.csv)");
    enriched->add_option("--cluster-mode", cfg.cluster_mode, "zone or exact")->check(CLI::IsMember({"zone", "exact"}));
    auto* conv = app.add_subcommand("convergence", "Density grids around one match");
    conv->add_option("--match-id", cfg.match_id, "Default: first match");
    conv->add_option("--offsets", cfg.offsets, "Hours relative to kickoff")->delimiter(',');
    for (auto* sub : {tag, enriched, conv}) sub->add_option("--zone-radius-km", cfg.zone_radius_km)->check(CLI::PositiveNumber);
    for (auto* sub : {tag, enriched}) {
        sub->add_option("--k", cfg.k_consecutive)->check(CLI::PositiveNumber);
        sub->add_option("--tags", cfg.tags, "Tag CSV (default <output>/tags.csv)");
    }
    for (auto* sub : {grid, conv}) {
        sub->add_option("--bbox", cfg.bbox, "min_lat,min_lon,max_lat,max_lon")->delimiter(',')->expected(4);
        sub->add_option("--cell-deg", cfg.cell_deg)->check(CLI::PositiveNumber);
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    if (!synth_bbox.empty()) sc.bbox = {{synth_bbox[0], synth_bbox[1]}, {synth_bbox[2], synth_bbox[3]}};

    try {
        std::filesystem::create_directories(cfg.output);
        Runner runner(cfg, out);
        if (synth->parsed()) runner.synth();
        else if (stats->parsed()) runner.stats();
        else if (train->parsed()) runner.train();
        else if (eval->parsed()) runner.eval();
        else if (commute->parsed()) runner.commute();
        else if (grid->parsed()) runner.grid();
        else if (tag->parsed()) runner.tag_fans();
        else if (enriched->parsed()) {
            if (cfg.model.empty()) cfg.direction = "all";
            runner.eval_enriched();
        } else if (conv->parsed()) runner.convergence();
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: Io: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

} // namespace cdrmob::cli
