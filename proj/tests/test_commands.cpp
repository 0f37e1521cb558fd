#include <filesystem>
#include <fstream>
#include <sstream>

#include "cgmatch/errors.hpp"
#include "cgmatch/run_io.hpp"
#include "commands.hpp"
#include "doctest.h"
#include "trainer_fixture.hpp"

using namespace cgmatch;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cgmatch_cmd_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t line_count(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

}  // namespace

TEST_CASE("run directory contents round trip") {
    const auto dir = scratch("rundir");
    const auto c = testing::tiny_config();
    const auto art = run_io::execute_run(c, dir / "r");
    CHECK(run_io::is_complete(dir / "r"));
    CHECK_FALSE(fs::exists(dir / "r" / run_io::files::kPartial));

    const auto dyn = run_io::read_dynamics(dir / "r" / run_io::files::kDynamics);
    REQUIRE(dyn.size() == art.iterations.size());
    for (std::size_t i = 0; i < dyn.size(); ++i) {
        CHECK(dyn[i].iteration == art.iterations[i].iteration);
        CHECK(dyn[i].warmup == art.iterations[i].warmup);
        CHECK(dyn[i].loss.total == art.iterations[i].loss.total);
        CHECK(dyn[i].tau_e == art.iterations[i].tau_e);
        CHECK(dyn[i].n_ambiguous == art.iterations[i].n_ambiguous);
    }
    const auto parts = run_io::read_partitions(dir / "r" / run_io::files::kPartitions);
    REQUIRE_FALSE(parts.empty());
    for (const auto& p : parts) CHECK(p.partition.size() == c.batch_labeled * c.ratio);
    const auto cps = run_io::read_checkpoints(dir / "r" / run_io::files::kCheckpoints);
    CHECK(cps.size() % c.data.blobs.n_unlabeled == 0);
    CHECK_FALSE(cps.empty());

    // the persisted config alone reproduces the run
    const auto replay = config::load_run_config(dir / "r" / run_io::files::kConfig);
    run_io::execute_run(replay, dir / "again");
    for (const char* f : {run_io::files::kEval, run_io::files::kDynamics, run_io::files::kModel,
                          run_io::files::kDataset, run_io::files::kCheckpoints})
        CHECK(slurp(dir / "r" / f) == slurp(dir / "again" / f));
}

TEST_CASE("divergence leaves a partial-run marker and the logs so far") {
    const auto dir = scratch("diverge");
    auto c = testing::tiny_config();
    c.lr = 1e200;
    CHECK_THROWS_AS(run_io::execute_run(c, dir / "r"), DivergenceError);
    CHECK_FALSE(run_io::is_complete(dir / "r"));
    CHECK(fs::exists(dir / "r" / run_io::files::kPartial));
    CHECK(fs::exists(dir / "r" / run_io::files::kDynamics));
    CHECK(fs::exists(dir / "r" / run_io::files::kConfig));
}

TEST_CASE("gen-data is deterministic") {
    const auto dir = scratch("gendata");
    const auto c = cli::resolve_config(std::nullopt, {{"data.kind", "blobs"}, {"data.seed", "4"}});
    cli::gen_data(c, dir / "a.tsv");
    cli::gen_data(c, dir / "b.tsv");
    CHECK(slurp(dir / "a.tsv") == slurp(dir / "b.tsv"));
    std::ifstream in(dir / "a.tsv");
    const auto ds = datasets::read_dataset(in);
    CHECK(ds.labeled().size() == 16);
}

TEST_CASE("ablate deduplicates cells and builds a table from disk") {
    const auto dir = scratch("ablate");
    auto base = testing::tiny_config();
    base.iterations = 80;
    const auto res = cli::ablate(base,
                                 {fds::ThresholdMode::GlobalEMA, fds::ThresholdMode::SelfAdaptive,
                                  fds::ThresholdMode::GlobalEMA},
                                 {0, 1, 0}, 2, dir);
    CHECK(res.cells.size() == 4);
    CHECK(res.all_completed());
    CHECK(line_count(res.table) == 3);
    CHECK(res.table.find("GlobalEMA\t2\t2\t") != std::string::npos);
    CHECK(res.table.find("SelfAdaptive\t2\t2\t") != std::string::npos);
    CHECK(slurp(dir / "ablation.tsv") == res.table);
    CHECK(cli::ablation_table(res.cells) == res.table);
    CHECK(fs::exists(dir / "SelfAdaptive-seed1" / run_io::files::kComplete));

    SUBCASE("a failed cell is recorded and the table marks it") {
        auto cells = res.cells;
        fs::remove(cells[0].dir / run_io::files::kComplete);
        cells[0].completed = false;
        const auto t = cli::ablation_table(cells);
        CHECK(t.find("GlobalEMA\t2\t1\t") != std::string::npos);
    }
}

TEST_CASE("report") {
    const auto dir = scratch("report");
    auto c = testing::tiny_config();
    c.iterations = 80;
    run_io::execute_run(c, dir / "a");
    c.seed = 1;
    run_io::execute_run(c, dir / "b");
    c.method = trainer::Method::FixMatchBaseline;
    run_io::execute_run(c, dir / "f");

    const auto one = cli::report({dir / "a"});
    CHECK(one.find("# final test metrics") != std::string::npos);
    CHECK(one.find("# unlabeled utilization") != std::string::npos);
    CHECK(one.find("# pseudo-label accuracy") != std::string::npos);
    // a single run has zero spread
    CHECK(one.find("\t1\t") != std::string::npos);
    CHECK(one.find("\t0.00\t") != std::string::npos);
    CHECK(one.find("\t0.0000\n") != std::string::npos);

    const auto all = cli::report({dir / "f", dir / "b", dir / "a"});
    CHECK(all == cli::report({dir / "a", dir / "b", dir / "f"}));
    CHECK(all.find("CGMatch/GlobalEMA\t2\t") != std::string::npos);
    CHECK(all.find("FixMatchBaseline\t1\t") != std::string::npos);

    auto other = testing::tiny_config();
    other.iterations = 80;
    other.data.blobs.seed = 9;
    run_io::execute_run(other, dir / "x");
    CHECK_THROWS_AS(cli::report({dir / "a", dir / "x"}), InvalidInput);
    fs::remove(dir / "b" / run_io::files::kComplete);
    CHECK_THROWS_AS(cli::report({dir / "a", dir / "b"}), InvalidInput);
    CHECK_THROWS(cli::report({}));
}

TEST_CASE("diagnose writes the four tables") {
    const auto dir = scratch("diagnose");
    auto c = testing::tiny_config();
    c.iterations = 120;
    run_io::execute_run(c, dir / "r");
    cli::diagnose(dir / "r", dir / "d");
    for (const char* f : {"data_map.tsv", "ece_curve.tsv", "utilization.tsv", "subset_accuracy.tsv"})
        CHECK(fs::exists(dir / "d" / f));
    const auto util = diagnostics::import_utilization(dir / "d" / "utilization.tsv");
    CHECK(util.size() == c.iterations - c.warmup + 1);
    const auto dm = diagnostics::import_data_map(dir / "d" / "data_map.tsv");
    CHECK(dm.points.size() == c.data.blobs.n_unlabeled);
    for (const auto& p : dm.points) CHECK((p.variability >= 0.0 && p.variability <= 0.5));
}
