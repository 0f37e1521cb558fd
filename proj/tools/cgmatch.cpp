#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "cgmatch/errors.hpp"
#include "cgmatch/run_io.hpp"
#include "cgmatch/text_io.hpp"
#include "commands.hpp"

namespace fs = std::filesystem;
using namespace cgmatch;

namespace {

struct ConfigFlags {
    std::optional<std::string> config;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", config, "INI run configuration")->check(CLI::ExistingFile);
        app->add_option("--set", sets, "override as section.key=value (repeatable)");
    }

    std::vector<config::Override> overrides() const {
        std::vector<config::Override> out;
        for (const auto& s : sets) out.push_back(config::parse_override(s));
        return out;
    }

    trainer::RunConfig resolve(std::vector<config::Override> extra = {}) const {
        auto o = overrides();
        o.insert(o.end(), extra.begin(), extra.end());
        std::optional<fs::path> file;
        if (config) file = *config;
        return cli::resolve_config(file, o);
    }
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    for (auto part : text_io::split(s, ','))
        if (!part.empty()) out.emplace_back(part);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CGMatch semi-supervised training engine"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a dataset file from the [data] section");
    ConfigFlags gen_flags;
    gen_flags.attach(gen);
    std::optional<std::string> gen_out;
    gen->add_option("-o,--out", gen_out, "output file (default: <output root>/dataset.tsv)");

    // train
    auto* train = app.add_subcommand("train", "train one run into a run directory");
    ConfigFlags train_flags;
    train_flags.attach(train);
    std::optional<std::string> method, thresholding, clamp, backend, train_out;
    std::optional<std::uint64_t> seed, iterations, warmup;
    train->add_option("--method", method, "CGMatch, FixMatchBaseline or SupervisedOnly");
    train->add_option("--thresholding", thresholding, "GlobalEMA, SelfAdaptive or Fixed");
    train->add_option("--clamp", clamp, "clamp the easy threshold to lo:hi, or none");
    train->add_option("--backend", backend, "serial or openmp");
    train->add_option("--seed", seed, "run seed");
    train->add_option("--iterations", iterations, "total iterations T");
    train->add_option("--warmup", warmup, "warm-up iterations t0");
    train->add_option("-o,--out", train_out, "run directory (default: <output root>/<run name>)");

    // ablate
    auto* abl = app.add_subcommand("ablate", "CGMatch thresholding modes x seeds grid");
    ConfigFlags abl_flags;
    abl_flags.attach(abl);
    std::string modes = "GlobalEMA,SelfAdaptive", seeds = "0,1,2";
    std::size_t jobs = 1;
    std::optional<std::string> abl_out;
    abl->add_option("--modes", modes, "comma-separated thresholding modes")->capture_default_str();
    abl->add_option("--seeds", seeds, "comma-separated run seeds")->capture_default_str();
    abl->add_option("-j,--jobs", jobs, "runs in parallel")->check(CLI::PositiveNumber);
    abl->add_option("-o,--out", abl_out, "grid directory (default: <output root>/ablate)");

    // report
    auto* rep = app.add_subcommand("report", "aggregate tables over completed run directories");
    std::vector<std::string> rep_dirs;
    std::optional<std::string> rep_out;
    rep->add_option("runs", rep_dirs, "run directories")->required();
    rep->add_option("-o,--out", rep_out, "write the report here instead of stdout");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "data map, ECE curve, utilization, subset accuracy");
    std::string diag_run;
    std::optional<std::string> diag_out;
    diag->add_option("run", diag_run, "run directory")->required()->check(CLI::ExistingDirectory);
    diag->add_option("-o,--out", diag_out, "output directory (default: <run>/diagnostics)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kOk : cli::kUsage;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));

    try {
        if (*gen) {
            const auto cfg = gen_flags.resolve();
            cli::gen_data(cfg, gen_out ? fs::path(*gen_out) : cli::output_root() / "dataset.tsv");
        } else if (*train) {
            std::vector<config::Override> extra;
            if (method) extra.emplace_back("ssl.method", *method);
            if (thresholding) extra.emplace_back("ssl.thresholding", *thresholding);
            if (clamp) extra.emplace_back("ssl.clamp", *clamp);
            if (backend) extra.emplace_back("model.backend", *backend);
            if (seed) extra.emplace_back("run.seed", std::to_string(*seed));
            if (iterations) extra.emplace_back("run.iterations", std::to_string(*iterations));
            if (warmup) extra.emplace_back("run.warmup", std::to_string(*warmup));
            const auto cfg = train_flags.resolve(extra);
            const fs::path dir = train_out ? fs::path(*train_out)
                                           : cli::output_root() / cli::default_run_name(cfg);
            const auto artifacts = run_io::execute_run(cfg, dir);
            const auto& last = artifacts.eval_curve.back();
            std::cout << dir.string() << "\taccuracy=" << text_io::format_double(last.accuracy)
                      << "\tece=" << text_io::format_double(last.ece) << '\n';
        } else if (*abl) {
            const auto cfg = abl_flags.resolve();
            std::vector<fds::ThresholdMode> mode_list;
            for (const auto& m : split_list(modes)) mode_list.push_back(fds::parse_threshold_mode(m));
            std::vector<std::uint64_t> seed_list;
            for (const auto& s : split_list(seeds)) {
                const auto v = text_io::parse_int(s);
                if (v < 0) throw ConfigError("seeds must be non-negative");
                seed_list.push_back(static_cast<std::uint64_t>(v));
            }
            const auto result = cli::ablate(cfg, mode_list, seed_list, jobs,
                                            abl_out ? fs::path(*abl_out) : cli::output_root() / "ablate");
            std::cout << result.table;
            if (!result.all_completed()) {
                for (const auto& c : result.cells)
                    if (!c.completed) std::cerr << "failed: " << c.dir.string() << ": " << c.error << '\n';
                return cli::kPartialGrid;
            }
        } else if (*rep) {
            std::vector<fs::path> dirs(rep_dirs.begin(), rep_dirs.end());
            const auto text = cli::report(dirs);
            if (rep_out) {
                std::ofstream os(*rep_out, std::ios::binary | std::ios::trunc);
                if (!os) throw InvalidInput("cannot write '" + *rep_out + "'");
                os << text;
            } else {
                std::cout << text;
            }
        } else if (*diag) {
            const fs::path run(diag_run);
            cli::diagnose(run, diag_out ? fs::path(*diag_out) : run / "diagnostics");
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kUsage;
    } catch (const std::exception& e) {
        std::cerr << "aborted: " << e.what() << '\n';
        return cli::kAbort;
    }
    return cli::kOk;
}
