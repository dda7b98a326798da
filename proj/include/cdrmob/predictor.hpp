#pragma once

// Most-frequent-antenna location model over the 168 weekly hour slots.
//
// Training counts, for every (user, slot), how often each antenna served the
// user. The prediction for (user, slot) is the antenna with the highest
// count, ties going to the smallest AntennaId. A (user, slot) never seen in
// training gets no prediction (abstention), which is reported separately as
// coverage.

#include <array>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cdrmob/core.hpp"
#include "cdrmob/ingest.hpp"
#include "cdrmob/parallel.hpp"

namespace cdrmob {

enum class DirectionFilter { All, OutgoingOnly, IncomingOnly };

constexpr bool passes(DirectionFilter f, CallDirection d) {
    switch (f) {
    case DirectionFilter::All: return true;
    case DirectionFilter::OutgoingOnly: return d == CallDirection::Outgoing;
    case DirectionFilter::IncomingOnly: return d == CallDirection::Incoming;
    }
    return false;
}

inline const char* to_string(DirectionFilter f) {
    switch (f) {
    case DirectionFilter::All: return "all";
    case DirectionFilter::OutgoingOnly: return "out";
    case DirectionFilter::IncomingOnly: return "in";
    }
    return "?";
}

inline std::optional<DirectionFilter> parse_direction_filter(std::string_view s) {
    if (s == "all") return DirectionFilter::All;
    if (s == "out") return DirectionFilter::OutgoingOnly;
    if (s == "in") return DirectionFilter::IncomingOnly;
    return std::nullopt;
}

struct SlotKey {
    UserId user;
    TimeSlot slot;
    friend constexpr auto operator<=>(SlotKey, SlotKey) = default;
};

struct SlotKeyHash {
    std::size_t operator()(SlotKey k) const noexcept {
        return static_cast<std::size_t>(splitmix(k.user.value * kSlotsPerWeek + static_cast<std::uint64_t>(k.slot.index)));
    }
    static constexpr std::uint64_t splitmix(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }
};

struct AntennaCount {
    AntennaId antenna;
    std::uint32_t count = 0;
    friend constexpr bool operator==(AntennaCount, AntennaCount) = default;
};

/// Antenna counts for one (user, slot). Usually a handful of entries, kept
/// unsorted for cheap increments.
class AntennaCounts {
public:
    void add(AntennaId a, std::uint32_t n = 1) {
        for (auto& e : entries_) {
            if (e.antenna == a) {
                e.count += n;
                return;
            }
        }
        entries_.push_back({a, n});
    }

    /// Highest count, ties by smallest id.
    AntennaId argmax() const {
        const AntennaCount* best = &entries_.front();
        for (const auto& e : entries_)
            if (e.count > best->count || (e.count == best->count && e.antenna < best->antenna)) best = &e;
        return best->antenna;
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& e : entries_) t += e.count;
        return t;
    }

    std::span<const AntennaCount> entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }

    std::vector<AntennaCount> sorted() const {
        std::vector<AntennaCount> v = entries_;
        std::sort(v.begin(), v.end(), [](AntennaCount a, AntennaCount b) { return a.antenna < b.antenna; });
        return v;
    }

    friend bool operator==(const AntennaCounts& a, const AntennaCounts& b) { return a.sorted() == b.sorted(); }

private:
    std::vector<AntennaCount> entries_;
};

class SlotHistogram {
public:
    using Map = std::unordered_map<SlotKey, AntennaCounts, SlotKeyHash>;

    void add(UserId user, TimeSlot slot, AntennaId antenna, std::uint32_t n = 1) { map_[{user, slot}].add(antenna, n); }

    void merge(const SlotHistogram& other) {
        for (const auto& [key, counts] : other.map_) {
            auto& mine = map_[key];
            for (const auto& e : counts.entries()) mine.add(e.antenna, e.count);
        }
    }

    const AntennaCounts* find(UserId user, TimeSlot slot) const {
        auto it = map_.find({user, slot});
        return it == map_.end() ? nullptr : &it->second;
    }

    const Map& entries() const { return map_; }
    std::size_t size() const { return map_.size(); }
    bool empty() const { return map_.empty(); }

    /// Keys in ascending (user, slot) order.
    std::vector<SlotKey> sorted_keys() const {
        std::vector<SlotKey> keys;
        keys.reserve(map_.size());
        for (const auto& kv : map_) keys.push_back(kv.first);
        std::sort(keys.begin(), keys.end());
        return keys;
    }

    friend bool operator==(const SlotHistogram&, const SlotHistogram&) = default;

private:
    Map map_;
};

struct TimeRange {
    std::int64_t min = 0;
    std::int64_t max = 0;
    friend constexpr bool operator==(TimeRange, TimeRange) = default;
};

class BaselineModel {
public:
    BaselineModel() = default;

    BaselineModel(SlotHistogram histogram, DirectionFilter filter, std::optional<TimeRange> training_range)
        : histogram_(std::move(histogram)), filter_(filter), training_range_(training_range) {
        argmax_.reserve(histogram_.size());
        for (const auto& [key, counts] : histogram_.entries()) argmax_.emplace(key, counts.argmax());
    }

    std::optional<AntennaId> predict(UserId user, TimeSlot slot) const {
        auto it = argmax_.find({user, slot});
        if (it == argmax_.end()) return std::nullopt;
        return it->second;
    }

    const SlotHistogram& histogram() const { return histogram_; }
    DirectionFilter direction_filter() const { return filter_; }
    const std::optional<TimeRange>& training_range() const { return training_range_; }
    std::size_t size() const { return argmax_.size(); }

    friend bool operator==(const BaselineModel& a, const BaselineModel& b) {
        return a.histogram_ == b.histogram_ && a.filter_ == b.filter_ && a.training_range_ == b.training_range_;
    }

private:
    SlotHistogram histogram_;
    std::unordered_map<SlotKey, AntennaId, SlotKeyHash> argmax_;
    DirectionFilter filter_ = DirectionFilter::All;
    std::optional<TimeRange> training_range_;
};

inline std::optional<AntennaId> predict(const BaselineModel& model, UserId user, TimeSlot slot) {
    return model.predict(user, slot);
}

/// Incremental trainer. Batches are split over `threads` per-worker
/// histograms which are merged at the end; counts are additive, so the model
/// does not depend on the thread count or on record order.
class ModelTrainer {
public:
    ModelTrainer(DirectionFilter filter, int utc_offset, unsigned threads = 1)
        : filter_(filter), utc_offset_(utc_offset), parts_(std::max(1u, threads)) {}

    void add(const CdrRecord& r) {
        if (!passes(filter_, r.direction)) return;
        parts_[0].add(r.user, time_slot(r.timestamp, utc_offset_), r.antenna);
        note_time(r.timestamp);
    }

    void add_batch(std::span<const CdrRecord> batch) {
        const auto shards = make_shards(batch.size(), parts_.size());
        run_shards(shards, static_cast<unsigned>(parts_.size()), [&](const Shard& s) {
            auto& h = parts_[s.index];
            for (std::size_t i = s.begin; i < s.end; ++i) {
                const auto& r = batch[i];
                if (passes(filter_, r.direction)) h.add(r.user, time_slot(r.timestamp, utc_offset_), r.antenna);
            }
        });
        for (const auto& r : batch)
            if (passes(filter_, r.direction)) note_time(r.timestamp);
    }

    BaselineModel finish() {
        SlotHistogram merged = std::move(parts_[0]);
        for (std::size_t i = 1; i < parts_.size(); ++i) merged.merge(parts_[i]);
        parts_.assign(parts_.size(), SlotHistogram{});
        return BaselineModel(std::move(merged), filter_, range_);
    }

private:
    void note_time(std::int64_t t) {
        if (!range_) range_ = TimeRange{t, t};
        range_->min = std::min(range_->min, t);
        range_->max = std::max(range_->max, t);
    }

    DirectionFilter filter_;
    int utc_offset_;
    std::vector<SlotHistogram> parts_;
    std::optional<TimeRange> range_;
};

inline BaselineModel train(std::span<const CdrRecord> records, DirectionFilter filter, int utc_offset,
                           unsigned threads = 1) {
    ModelTrainer trainer(filter, utc_offset, threads);
    trainer.add_batch(records);
    return trainer.finish();
}

struct SlotCounts {
    std::uint64_t total = 0;
    std::uint64_t predicted = 0;
    std::uint64_t correct = 0;

    SlotCounts& operator+=(const SlotCounts& o) {
        total += o.total;
        predicted += o.predicted;
        correct += o.correct;
        return *this;
    }
    friend constexpr bool operator==(SlotCounts, SlotCounts) = default;
};

inline std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

struct EvalReport {
    std::array<SlotCounts, kSlotsPerWeek> per_slot{};
    bool overlaps_training = false;

    void record(TimeSlot slot, bool predicted, bool correct) {
        auto& c = per_slot[static_cast<std::size_t>(slot.index)];
        ++c.total;
        c.predicted += predicted ? 1 : 0;
        c.correct += correct ? 1 : 0;
    }

    SlotCounts totals() const {
        SlotCounts t;
        for (const auto& c : per_slot) t += c;
        return t;
    }
    std::uint64_t total_events() const { return totals().total; }
    std::uint64_t predicted_events() const { return totals().predicted; }
    std::uint64_t correct_events() const { return totals().correct; }

    /// correct / predicted; absent when nothing was predicted.
    std::optional<double> accuracy() const {
        const auto t = totals();
        return ratio(t.correct, t.predicted);
    }
    /// predicted / total; absent for an empty event set.
    std::optional<double> coverage() const {
        const auto t = totals();
        return ratio(t.predicted, t.total);
    }

    /// Mean of per-slot accuracies over slots with at least one prediction.
    std::optional<double> slot_mean_accuracy() const {
        double sum = 0.0;
        int n = 0;
        for (const auto& c : per_slot) {
            if (auto a = ratio(c.correct, c.predicted)) {
                sum += *a;
                ++n;
            }
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    }

    EvalReport& operator+=(const EvalReport& o) {
        for (std::size_t i = 0; i < per_slot.size(); ++i) per_slot[i] += o.per_slot[i];
        overlaps_training = overlaps_training || o.overlaps_training;
        return *this;
    }

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Antenna -> cluster id, where the cluster id is the smallest member id.
class AntennaClustering {
public:
    AntennaClustering() = default;
    AntennaClustering(std::unordered_map<AntennaId, AntennaId> map, double threshold_km)
        : map_(std::move(map)), threshold_km_(threshold_km) {}

    /// Antennas outside the registry map to themselves.
    AntennaId cluster_of(AntennaId a) const {
        auto it = map_.find(a);
        return it == map_.end() ? a : it->second;
    }
    bool same_cluster(AntennaId a, AntennaId b) const { return cluster_of(a) == cluster_of(b); }
    double threshold_km() const { return threshold_km_; }
    const std::unordered_map<AntennaId, AntennaId>& mapping() const { return map_; }

    std::size_t cluster_count() const {
        std::size_t n = 0;
        for (const auto& [a, c] : map_) n += (a == c) ? 1 : 0;
        return n;
    }

private:
    std::unordered_map<AntennaId, AntennaId> map_;
    double threshold_km_ = 0.0;
};

/// Single-linkage agglomeration: antennas strictly closer than threshold_km
/// are linked, clusters are the connected components. Threshold 0 yields the
/// identity clustering.
inline AntennaClustering cluster_antennas(const AntennaRegistry& registry, double threshold_km) {
    if (threshold_km < 0.0) throw Error(ErrorKind::ConfigInvalid, "cluster threshold must be >= 0");
    const auto antennas = registry.sorted();
    const std::size_t n = antennas.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t i) {
        while (parent[i] != i) {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        return i;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (haversine_km(antennas[i].position(), antennas[j].position()) < threshold_km) {
                // root is always the smaller index, i.e. the smaller id
                const auto ri = find(i), rj = find(j);
                if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
            }
        }
    }
    std::unordered_map<AntennaId, AntennaId> map;
    map.reserve(n);
    for (std::size_t i = 0; i < n; ++i) map.emplace(antennas[i].id, antennas[find(i)].id);
    return AntennaClustering(std::move(map), threshold_km);
}

inline bool overlaps(const std::optional<TimeRange>& training, std::span<const CdrRecord> test) {
    if (!training) return false;
    return std::any_of(test.begin(), test.end(),
                       [&](const CdrRecord& r) { return r.timestamp >= training->min && r.timestamp <= training->max; });
}

/// Scores every filtered test record. With a clustering, a prediction is
/// correct when it falls in the same cluster as the observed antenna.
inline EvalReport evaluate(const BaselineModel& model, std::span<const CdrRecord> test, DirectionFilter filter,
                           int utc_offset, const AntennaClustering* clustering = nullptr, unsigned threads = 1) {
    const auto shards = make_shards(test.size(), std::max(1u, threads));
    std::vector<EvalReport> parts(shards.size());
    run_shards(shards, threads, [&](const Shard& s) {
        auto& rep = parts[s.index];
        for (std::size_t i = s.begin; i < s.end; ++i) {
            const auto& r = test[i];
            if (!passes(filter, r.direction)) continue;
            const TimeSlot slot = time_slot(r.timestamp, utc_offset);
            const auto p = model.predict(r.user, slot);
            bool correct = false;
            if (p) correct = clustering ? clustering->same_cluster(*p, r.antenna) : *p == r.antenna;
            rep.record(slot, p.has_value(), correct);
        }
    });
    EvalReport report;
    for (const auto& p : parts) report += p;
    report.overlaps_training = overlaps(model.training_range(), test);
    return report;
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string{}; }

/// `slot,total,predicted,correct,accuracy,coverage`; undefined ratios are blank.
inline std::string per_slot_report(const EvalReport& report) {
    std::string out = "slot,total,predicted,correct,accuracy,coverage\n";
    for (int s = 0; s < kSlotsPerWeek; ++s) {
        const auto& c = report.per_slot[static_cast<std::size_t>(s)];
        out += std::to_string(s) + "," + std::to_string(c.total) + "," + std::to_string(c.predicted) + ","
             + std::to_string(c.correct) + "," + format_optional(ratio(c.correct, c.predicted)) + ","
             + format_optional(ratio(c.predicted, c.total)) + "\n";
    }
    return out;
}

inline void write_per_slot_report(const std::filesystem::path& path, const EvalReport& report) {
    write_text_file(path, per_slot_report(report));
}

inline constexpr std::string_view kModelHeader = "user_id,slot,antenna_id,count";

inline std::string model_csv(const BaselineModel& model) {
    std::string out(kModelHeader);
    out.push_back('\n');
    const auto& h = model.histogram();
    for (const auto& key : h.sorted_keys()) {
        for (const auto& e : h.find(key.user, key.slot)->sorted())
            out += std::to_string(key.user.value) + "," + std::to_string(key.slot.index) + ","
                 + std::to_string(e.antenna.value) + "," + std::to_string(e.count) + "\n";
    }
    return out;
}

inline void save_model(const std::filesystem::path& path, const BaselineModel& model) {
    write_text_file(path, model_csv(model));
}

/// Rebuilds a model from histogram rows; argmax is recomputed.
inline BaselineModel load_model(const std::filesystem::path& path, DirectionFilter filter = DirectionFilter::All,
                                std::optional<TimeRange> training_range = std::nullopt) {
    LineReader reader(path);
    auto header = reader.next();
    if (!header || *header != kModelHeader)
        throw Error(ErrorKind::MalformedLine, line_context(path, 1) + ": expected header '" + std::string(kModelHeader) + "'");
    SlotHistogram h;
    while (auto line = reader.next()) {
        if (line->empty()) continue;
        std::array<std::string_view, 4> f;
        std::uint64_t user = 0;
        int slot = 0;
        std::uint32_t antenna = 0, count = 0;
        if (!detail::split_exact(*line, f) || !detail::parse_number(f[0], user) || !detail::parse_number(f[1], slot)
            || !detail::parse_number(f[2], antenna) || !detail::parse_number(f[3], count) || slot < 0
            || slot >= kSlotsPerWeek || count == 0)
            throw Error(ErrorKind::MalformedLine, line_context(path, reader.line_number()));
        h.add(UserId{user}, TimeSlot{slot}, AntennaId{antenna}, count);
    }
    return BaselineModel(std::move(h), filter, training_range);
}

} // namespace cdrmob
