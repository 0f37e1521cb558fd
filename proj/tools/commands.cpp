#include "commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <omp.h>
#include <spdlog/spdlog.h>

#include "cgmatch/diagnostics.hpp"
#include "cgmatch/errors.hpp"
#include "cgmatch/gold.hpp"
#include "cgmatch/run_io.hpp"

namespace cgmatch::cli {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InvalidInput("cannot read '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

struct Stats {
    double mean = 0.0;
    double std = 0.0;
};

// Population standard deviation: a single run reports 0.
Stats stats(const std::vector<double>& xs) {
    Stats s;
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(var / static_cast<double>(xs.size()));
    return s;
}

std::string method_label(const trainer::RunConfig& c) {
    std::string label = trainer::to_string(c.method);
    if (c.method == trainer::Method::CGMatch) label += "/" + fds::to_string(c.thresholding);
    if (c.clamp && c.method == trainer::Method::CGMatch) label += "+clamp";
    return label;
}

datasets::Dataset load_snapshot(const fs::path& run_dir) {
    std::ifstream in(run_dir / run_io::files::kDataset);
    if (!in) throw InvalidInput("cannot read '" + (run_dir / run_io::files::kDataset).string() + "'");
    return datasets::read_dataset(in);
}

// First iteration of the final quarter of post-warm-up training.
std::uint64_t final_quarter_start(const trainer::RunConfig& c) {
    return c.warmup + (3 * (c.iterations - c.warmup) + 3) / 4;
}

}  // namespace

fs::path output_root() {
    if (const char* env = std::getenv("CGMATCH_OUTPUT_ROOT"); env && *env) return env;
    return "runs";
}

trainer::RunConfig resolve_config(const std::optional<fs::path>& config_file,
                                  const std::vector<config::Override>& overrides) {
    if (config_file) return config::load_run_config(*config_file, overrides);
    return config::parse_run_config("", overrides, fs::current_path());
}

std::string default_run_name(const trainer::RunConfig& c) {
    std::string name = trainer::to_string(c.method);
    if (c.method == trainer::Method::CGMatch) name += "-" + fds::to_string(c.thresholding);
    return name + "-seed" + std::to_string(c.seed);
}

void gen_data(const trainer::RunConfig& config, const fs::path& out) {
    const auto ds = trainer::make_dataset(config.data);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ofstream os(out, std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInput("cannot write '" + out.string() + "'");
    datasets::write_dataset(os, ds);
    spdlog::info("wrote {} ({} labeled, {} unlabeled, {} test)", out.string(), ds.labeled().size(),
                 ds.unlabeled().size(), ds.test().size());
}

RunSummary summarize_run(const fs::path& dir) {
    if (!run_io::is_complete(dir)) throw InvalidInput("run directory '" + dir.string() + "' is not complete");
    RunSummary s;
    s.dir = dir;
    s.config = config::load_run_config(dir / run_io::files::kConfig);
    const auto curve = diagnostics::import_eval_curve(dir / run_io::files::kEval);
    if (curve.empty()) throw InvalidInput("'" + dir.string() + "' has an empty evaluation curve");
    s.final_accuracy = curve.back().accuracy;
    s.final_ece = curve.back().ece;
    return s;
}

bool AblationResult::all_completed() const {
    return std::all_of(cells.begin(), cells.end(), [](const auto& c) { return c.completed; });
}

std::string ablation_table(const std::vector<AblationCell>& cells) {
    std::vector<fds::ThresholdMode> modes;
    for (const auto& c : cells)
        if (std::find(modes.begin(), modes.end(), c.mode) == modes.end()) modes.push_back(c.mode);
    std::ostringstream os;
    os << "mode\truns\tcompleted\terror_mean_pct\terror_std_pct\tece_mean\tece_std\n";
    for (auto mode : modes) {
        std::vector<const AblationCell*> group;
        for (const auto& c : cells)
            if (c.mode == mode) group.push_back(&c);
        std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
        std::vector<double> err, ece;
        for (const auto* c : group) {
            if (!c->completed) continue;
            const auto s = summarize_run(c->dir);
            err.push_back(100.0 * (1.0 - s.final_accuracy));
            ece.push_back(s.final_ece);
        }
        os << fds::to_string(mode) << '\t' << group.size() << '\t' << err.size() << '\t';
        if (err.empty()) {
            os << "NA\tNA\tNA\tNA\n";
            continue;
        }
        const auto e = stats(err), c = stats(ece);
        os << fixed(e.mean, 2) << '\t' << fixed(e.std, 2) << '\t' << fixed(c.mean) << '\t'
           << fixed(c.std) << '\n';
    }
    return os.str();
}

AblationResult ablate(const trainer::RunConfig& base, const std::vector<fds::ThresholdMode>& modes,
                      const std::vector<std::uint64_t>& seeds, std::size_t jobs, const fs::path& out) {
    if (modes.empty() || seeds.empty()) throw ConfigError("ablate needs at least one mode and one seed");
    AblationResult result;
    std::set<std::pair<int, std::uint64_t>> seen;
    for (auto mode : modes)
        for (auto seed : seeds)
            if (seen.insert({static_cast<int>(mode), seed}).second)
                result.cells.push_back(
                    {mode, seed, out / (fds::to_string(mode) + "-seed" + std::to_string(seed)), false, {}});

    fs::create_directories(out);
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, result.cells.size()));
    auto work = [&] {
        if (workers > 1) omp_set_num_threads(1);
        for (std::size_t i; (i = next.fetch_add(1)) < result.cells.size();) {
            auto& cell = result.cells[i];
            auto cfg = base;
            cfg.method = trainer::Method::CGMatch;
            cfg.thresholding = cell.mode;
            cfg.seed = cell.seed;
            const auto start = std::chrono::steady_clock::now();
            try {
                run_io::execute_run(cfg, cell.dir);
                cell.completed = true;
                cell.seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                spdlog::info("cell {} done", cell.dir.filename().string());
            } catch (const std::exception& e) {
                cell.error = e.what();
                spdlog::error("cell {} failed: {}", cell.dir.filename().string(), e.what());
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    result.table = ablation_table(result.cells);
    std::ofstream os(out / "ablation.tsv", std::ios::binary | std::ios::trunc);
    if (!os) throw InvalidInput("cannot write '" + (out / "ablation.tsv").string() + "'");
    os << result.table;
    return result;
}

std::string report(std::vector<fs::path> dirs) {
    if (dirs.empty()) throw InvalidInput("report needs at least one run directory");
    std::vector<RunSummary> runs;
    for (const auto& d : dirs) runs.push_back(summarize_run(d));

    const std::string dataset_bytes = read_file(runs.front().dir / run_io::files::kDataset);
    for (const auto& r : runs)
        if (read_file(r.dir / run_io::files::kDataset) != dataset_bytes)
            throw InvalidInput("runs '" + runs.front().dir.string() + "' and '" + r.dir.string() +
                               "' use different datasets");
    const auto dataset = load_snapshot(runs.front().dir);

    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
        return std::tie(a.config.seed, a.dir) < std::tie(b.config.seed, b.dir);
    });
    std::map<std::string, std::vector<const RunSummary*>> groups;
    for (const auto& r : runs) groups[method_label(r.config)].push_back(&r);

    std::ostringstream os;
    os << "# final test metrics\n";
    os << "method\truns\terror_mean_pct\terror_std_pct\tece_mean\tece_std\n";
    for (const auto& [label, rs] : groups) {
        std::vector<double> err, ece;
        for (const auto* r : rs) {
            err.push_back(100.0 * (1.0 - r->final_accuracy));
            ece.push_back(r->final_ece);
        }
        const auto e = stats(err), c = stats(ece);
        os << label << '\t' << rs.size() << '\t' << fixed(e.mean, 2) << '\t' << fixed(e.std, 2) << '\t'
           << fixed(c.mean) << '\t' << fixed(c.std) << '\n';
    }

    os << "\n# unlabeled utilization per post-warm-up iteration\n";
    os << "method\tmean_easy\tmean_ambiguous\tmean_used_ratio\n";
    for (const auto& [label, rs] : groups) {
        if (rs.front()->config.method == trainer::Method::SupervisedOnly) continue;
        double easy = 0.0, amb = 0.0, ratio = 0.0;
        std::size_t n = 0;
        for (const auto* r : rs) {
            const auto log = run_io::read_dynamics(r->dir / run_io::files::kDynamics);
            for (const auto& u : diagnostics::utilization_series(log)) {
                easy += static_cast<double>(u.n_easy);
                amb += static_cast<double>(u.n_ambiguous);
                ratio += u.used_ratio;
                ++n;
            }
        }
        const double d = n ? static_cast<double>(n) : 1.0;
        os << label << '\t' << fixed(easy / d, 2) << '\t' << fixed(amb / d, 2) << '\t'
           << fixed(ratio / d) << '\n';
    }

    os << "\n# pseudo-label accuracy over the final quarter of training\n";
    os << "method\tsubset\tn\tn_correct\tfraction\n";
    for (const auto& [label, rs] : groups) {
        if (rs.front()->config.method == trainer::Method::SupervisedOnly) continue;
        std::map<diagnostics::SubsetTag, std::pair<std::size_t, std::size_t>> tally;
        for (const auto* r : rs) {
            const auto parts = run_io::read_partitions(r->dir / run_io::files::kPartitions);
            const auto from = final_quarter_start(r->config);
            for (const auto& row : diagnostics::subset_accuracy(parts, dataset)) {
                if (row.iteration < from) continue;
                tally[row.subset].first += row.n;
                tally[row.subset].second += row.n_correct;
            }
        }
        for (auto tag : {diagnostics::SubsetTag::Easy, diagnostics::SubsetTag::Ambiguous,
                         diagnostics::SubsetTag::Hard}) {
            const auto [n, k] = tally[tag];
            static const char* names[] = {"easy", "ambiguous", "hard"};
            os << label << '\t' << names[static_cast<int>(tag)] << '\t' << n << '\t' << k << '\t'
               << (n ? fixed(static_cast<double>(k) / static_cast<double>(n)) : std::string("undefined"))
               << '\n';
        }
    }
    return os.str();
}

void diagnose(const fs::path& run_dir, const fs::path& out) {
    const auto dataset = load_snapshot(run_dir);
    fs::create_directories(out);

    const auto rows = run_io::read_checkpoints(run_dir / run_io::files::kCheckpoints);
    const auto map = diagnostics::data_map(diagnostics::dynamics_records(rows, dataset));
    diagnostics::export_data_map(out / "data_map.tsv", map);
    if (map.omitted) spdlog::info("data map: {} samples with fewer than 2 checkpoints omitted", map.omitted);

    diagnostics::export_eval_curve(out / "ece_curve.tsv",
                                   diagnostics::import_eval_curve(run_dir / run_io::files::kEval));

    const auto log = run_io::read_dynamics(run_dir / run_io::files::kDynamics);
    diagnostics::export_utilization(out / "utilization.tsv", diagnostics::utilization_series(log));

    const auto parts = run_io::read_partitions(run_dir / run_io::files::kPartitions);
    diagnostics::export_subset_accuracy(out / "subset_accuracy.tsv",
                                        diagnostics::subset_accuracy(parts, dataset));
}

}  // namespace cgmatch::cli
