#include "cgmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>

#include "cgmatch/errors.hpp"
#include "cgmatch/gold.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch::diagnostics {

double ece(std::span<const double> confidences, const std::vector<bool>& correct, std::size_t bins) {
    if (confidences.empty()) throw InvalidInput("ece: no predictions");
    if (confidences.size() != correct.size())
        throw InvalidInput("ece: confidence and correctness arrays differ in length");
    if (bins == 0) throw InvalidInput("ece: need at least one bin");
    std::vector<double> conf_sum(bins, 0.0), hit_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) throw InvalidInput("ece: confidence outside [0, 1]");
        const auto b = std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)));
        conf_sum[b] += c;
        hit_sum[b] += correct[i] ? 1.0 : 0.0;
        ++count[b];
    }
    const auto n = static_cast<double>(confidences.size());
    double total = 0.0;
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const auto m = static_cast<double>(count[b]);
        total += (m / n) * std::abs(hit_sum[b] / m - conf_sum[b] / m);
    }
    return total;
}

char to_char(SubsetTag t) {
    switch (t) {
        case SubsetTag::Easy: return 'e';
        case SubsetTag::Ambiguous: return 'a';
        case SubsetTag::Hard: return 'h';
        case SubsetTag::Unseen: return 'u';
    }
    return 'u';
}

SubsetTag subset_from_char(char c) {
    switch (c) {
        case 'e': return SubsetTag::Easy;
        case 'a': return SubsetTag::Ambiguous;
        case 'h': return SubsetTag::Hard;
        case 'u': return SubsetTag::Unseen;
    }
    throw InvalidInput(std::string("unknown subset tag '") + c + "'");
}

namespace {

const char* subset_name(SubsetTag t) {
    switch (t) {
        case SubsetTag::Easy: return "easy";
        case SubsetTag::Ambiguous: return "ambiguous";
        case SubsetTag::Hard: return "hard";
        case SubsetTag::Unseen: return "unseen";
    }
    return "unseen";
}

SubsetTag subset_from_name(std::string_view s) {
    if (s == "easy") return SubsetTag::Easy;
    if (s == "ambiguous") return SubsetTag::Ambiguous;
    if (s == "hard") return SubsetTag::Hard;
    if (s == "unseen") return SubsetTag::Unseen;
    throw InvalidInput("unknown subset name '" + std::string(s) + "'");
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    return out;
}

// Reads a TSV file, checks the header, and returns the data rows split into
// fields.
std::vector<std::vector<std::string>> read_table(const std::filesystem::path& path,
                                                 const std::string& header, std::size_t columns) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw InvalidInput("'" + path.string() + "': unexpected header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = text_io::split(line, '\t');
        if (fields.size() != columns)
            throw InvalidInput("'" + path.string() + "': row with " + std::to_string(fields.size()) +
                               " fields, expected " + std::to_string(columns));
        rows.emplace_back(fields.begin(), fields.end());
    }
    return rows;
}

std::uint64_t to_u64(const std::string& s) { return static_cast<std::uint64_t>(text_io::parse_int(s)); }

const std::string kDataMapHeader = "sample_id\tconfidence\tvariability\tmean_cg";
const std::string kUtilizationHeader =
    "iteration\tn_easy\tn_ambiguous\tn_used\tn_confident\tbatch_unlabeled\tused_ratio";
const std::string kSubsetHeader = "iteration\tsubset\tn\tn_correct\tfraction";
const std::string kEvalHeader = "iteration\taccuracy\tece";

}  // namespace

DataMap data_map(std::span<const DynamicsRecord> records) {
    std::map<std::uint32_t, std::vector<const DynamicsRecord*>> by_sample;
    for (const auto& r : records) by_sample[r.sample.value].push_back(&r);
    DataMap out;
    for (const auto& [id, recs] : by_sample) {
        if (recs.size() < 2) {
            ++out.omitted;
            continue;
        }
        const auto n = static_cast<double>(recs.size());
        double mean = 0.0, cg = 0.0;
        for (const auto* r : recs) {
            mean += r->reference_prob;
            cg += r->count_gap;
        }
        mean /= n;
        double var = 0.0;
        for (const auto* r : recs) var += (r->reference_prob - mean) * (r->reference_prob - mean);
        out.points.push_back({SampleId{id}, mean, std::sqrt(var / n), cg / n});
    }
    return out;
}

std::vector<UtilizationRow> utilization_series(std::span<const trainer::IterationRecord> log) {
    std::vector<UtilizationRow> rows;
    std::optional<std::uint64_t> prev;
    for (const auto& r : log) {
        if (r.warmup) continue;
        if (prev && r.iteration != *prev + 1)
            throw InvalidInput("utilization_series: log is missing iteration " +
                               std::to_string(*prev + 1));
        prev = r.iteration;
        UtilizationRow u{r.iteration, r.n_easy, r.n_ambiguous, r.n_easy + r.n_ambiguous,
                         r.n_confident, r.batch_unlabeled, 0.0};
        if (u.n_used > u.batch_unlabeled)
            throw InvalidInput("utilization_series: subset sizes exceed the batch at iteration " +
                               std::to_string(r.iteration));
        u.used_ratio = u.batch_unlabeled ? static_cast<double>(u.n_used) / u.batch_unlabeled : 0.0;
        rows.push_back(u);
    }
    return rows;
}

std::vector<SubsetAccuracyRow> subset_accuracy(std::span<const PartitionRecord> partitions,
                                               const datasets::Dataset& dataset) {
    const auto& gold = evaluation::unlabeled_gold(dataset);
    std::vector<SubsetAccuracyRow> rows;
    for (const auto& pr : partitions) {
        auto tally = [&](const std::vector<fds::Selection>& set, SubsetTag tag) {
            SubsetAccuracyRow row{pr.iteration, tag, set.size(), 0, std::nullopt};
            for (const auto& s : set)
                row.n_correct += gold[dataset.unlabeled_index(s.id)] == s.pseudo_label;
            if (row.n > 0) row.fraction = static_cast<double>(row.n_correct) / row.n;
            rows.push_back(row);
        };
        tally(pr.partition.easy, SubsetTag::Easy);
        tally(pr.partition.ambiguous, SubsetTag::Ambiguous);
        tally(pr.partition.hard, SubsetTag::Hard);
    }
    return rows;
}

std::vector<DynamicsRecord> dynamics_records(std::span<const CheckpointRow> rows,
                                             const datasets::Dataset& dataset) {
    const auto& gold = evaluation::unlabeled_gold(dataset);
    std::vector<DynamicsRecord> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
        const int y = gold[dataset.unlabeled_index(r.sample)];
        if (r.probs.size() != static_cast<std::size_t>(dataset.classes()))
            throw InvalidInput("checkpoint row has the wrong number of class probabilities");
        auto it = std::max_element(r.probs.begin(), r.probs.end());
        out.push_back({r.sample, r.iteration, static_cast<int>(it - r.probs.begin()), *it,
                       r.probs[y], r.count_gap, r.subset});
    }
    return out;
}

void export_data_map(const std::filesystem::path& path, const DataMap& map) {
    auto out = open_out(path);
    out << kDataMapHeader << '\n';
    for (const auto& p : map.points)
        out << p.sample.value << '\t' << text_io::format_double(p.confidence) << '\t'
            << text_io::format_double(p.variability) << '\t' << text_io::format_double(p.mean_cg)
            << '\n';
}

DataMap import_data_map(const std::filesystem::path& path) {
    DataMap map;
    for (const auto& f : read_table(path, kDataMapHeader, 4))
        map.points.push_back({SampleId{static_cast<std::uint32_t>(to_u64(f[0]))},
                              text_io::parse_double(f[1]), text_io::parse_double(f[2]),
                              text_io::parse_double(f[3])});
    return map;
}

void export_utilization(const std::filesystem::path& path, std::span<const UtilizationRow> rows) {
    auto out = open_out(path);
    out << kUtilizationHeader << '\n';
    for (const auto& r : rows)
        out << r.iteration << '\t' << r.n_easy << '\t' << r.n_ambiguous << '\t' << r.n_used << '\t'
            << r.n_confident << '\t' << r.batch_unlabeled << '\t'
            << text_io::format_double(r.used_ratio) << '\n';
}

std::vector<UtilizationRow> import_utilization(const std::filesystem::path& path) {
    std::vector<UtilizationRow> rows;
    for (const auto& f : read_table(path, kUtilizationHeader, 7))
        rows.push_back({to_u64(f[0]), to_u64(f[1]), to_u64(f[2]), to_u64(f[3]), to_u64(f[4]),
                        to_u64(f[5]), text_io::parse_double(f[6])});
    return rows;
}

void export_subset_accuracy(const std::filesystem::path& path,
                            std::span<const SubsetAccuracyRow> rows) {
    auto out = open_out(path);
    out << kSubsetHeader << '\n';
    for (const auto& r : rows)
        out << r.iteration << '\t' << subset_name(r.subset) << '\t' << r.n << '\t' << r.n_correct
            << '\t' << (r.fraction ? text_io::format_double(*r.fraction) : std::string("undefined"))
            << '\n';
}

std::vector<SubsetAccuracyRow> import_subset_accuracy(const std::filesystem::path& path) {
    std::vector<SubsetAccuracyRow> rows;
    for (const auto& f : read_table(path, kSubsetHeader, 5)) {
        SubsetAccuracyRow r{to_u64(f[0]), subset_from_name(f[1]), to_u64(f[2]), to_u64(f[3]),
                            std::nullopt};
        if (f[4] != "undefined") r.fraction = text_io::parse_double(f[4]);
        rows.push_back(r);
    }
    return rows;
}

void export_eval_curve(const std::filesystem::path& path,
                       std::span<const trainer::EvalRecord> rows) {
    auto out = open_out(path);
    out << kEvalHeader << '\n';
    for (const auto& r : rows)
        out << r.iteration << '\t' << text_io::format_double(r.accuracy) << '\t'
            << text_io::format_double(r.ece) << '\n';
}

std::vector<trainer::EvalRecord> import_eval_curve(const std::filesystem::path& path) {
    std::vector<trainer::EvalRecord> rows;
    for (const auto& f : read_table(path, kEvalHeader, 3))
        rows.push_back({to_u64(f[0]), text_io::parse_double(f[1]), text_io::parse_double(f[2])});
    return rows;
}

}  // namespace cgmatch::diagnostics
