#include "cgmatch/cgtracker.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

#include "cgmatch/errors.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch::cgtracker {

Count count_gap(std::span<const Count> counts) {
    if (counts.size() < 2) throw InvalidInput("count_gap: need at least 2 classes");
    Count first = 0, second = 0;
    for (Count c : counts) {
        if (c > first) {
            second = first;
            first = c;
        } else if (c > second) {
            second = c;
        }
    }
    return first - second;
}

CountTracker::CountTracker(SampleId first_id, std::size_t n_samples, int classes)
    : first_(first_id), n_(n_samples), classes_(classes) {
    if (classes < 2) throw InvalidInput("CountTracker: need at least 2 classes");
    counts_.assign(n_ * static_cast<std::size_t>(classes_), 0);
}

CountTracker::CountTracker(const datasets::UnlabeledPool& pool, int classes)
    : CountTracker(pool.ids.empty() ? SampleId{} : pool.ids.front(), pool.size(), classes) {}

std::size_t CountTracker::index_of(SampleId id) const {
    if (id < first_ || id.value - first_.value >= n_)
        throw InvalidInput("unknown sample id " + std::to_string(id.value));
    return id.value - first_.value;
}

void CountTracker::record_prediction(SampleId id, int pseudo_label) {
    const std::size_t i = index_of(id);
    if (pseudo_label < 0 || pseudo_label >= classes_)
        throw InvalidInput("pseudo-label " + std::to_string(pseudo_label) + " out of range for sample " +
                           std::to_string(id.value));
    ++counts_[i * classes_ + pseudo_label];
}

std::span<const Count> CountTracker::queue(SampleId id) const {
    const std::size_t i = index_of(id);
    return {counts_.data() + i * classes_, static_cast<std::size_t>(classes_)};
}

Count CountTracker::count_gap(SampleId id) const { return cgtracker::count_gap(queue(id)); }

void CountTracker::warmup_initialize(std::span<const PredictionEntry> log,
                                     std::uint64_t warmup_end, std::uint64_t window) {
    for (const auto& e : log)
        if (e.iteration >= warmup_end)
            throw InvalidInput("warmup_initialize: log entry at iteration " +
                               std::to_string(e.iteration) + " is not a warm-up iteration (< " +
                               std::to_string(warmup_end) + ")");
    const std::uint64_t start = warmup_end > window ? warmup_end - window : 0;
    std::vector<Count> fresh(counts_.size(), 0);
    for (const auto& e : log) {
        if (e.iteration < start) continue;
        const std::size_t i = index_of(e.sample);
        if (e.predicted_class < 0 || e.predicted_class >= classes_)
            throw InvalidInput("warmup_initialize: class out of range");
        ++fresh[i * classes_ + e.predicted_class];
    }
    counts_ = std::move(fresh);
}

void write_queues(std::ostream& os, const CountTracker& tracker) {
    os << "cgmatch-queues v1\n";
    os << "classes " << tracker.classes() << '\n';
    for (std::size_t i = 0; i < tracker.size(); ++i) {
        const SampleId id{static_cast<std::uint32_t>(tracker.first_id().value + i)};
        os << id.value;
        for (Count c : tracker.queue(id)) os << ' ' << c;
        os << '\n';
    }
}

CountTracker read_queues(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "cgmatch-queues v1")
        throw InvalidInput("queue file: missing header");
    if (!std::getline(is, line) || line.rfind("classes ", 0) != 0)
        throw InvalidInput("queue file: missing classes line");
    const int classes = static_cast<int>(text_io::parse_int(std::string_view(line).substr(8)));
    std::vector<std::pair<std::uint32_t, std::vector<Count>>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto toks = text_io::split(line, ' ');
        if (toks.size() != static_cast<std::size_t>(classes) + 1)
            throw InvalidInput("queue file: malformed row");
        std::vector<Count> c;
        for (std::size_t k = 1; k < toks.size(); ++k)
            c.push_back(static_cast<Count>(text_io::parse_int(toks[k])));
        rows.emplace_back(static_cast<std::uint32_t>(text_io::parse_int(toks[0])), std::move(c));
    }
    CountTracker t(rows.empty() ? SampleId{} : SampleId{rows.front().first}, rows.size(), classes);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].first != t.first_id().value + i) throw InvalidInput("queue file: ids not contiguous");
        std::copy(rows[i].second.begin(), rows[i].second.end(), t.counts_.begin() + i * classes);
    }
    return t;
}

}  // namespace cgmatch::cgtracker
