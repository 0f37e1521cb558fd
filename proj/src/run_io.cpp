#include "cgmatch/run_io.hpp"

#include <map>
#include <string>

#include "json.hpp"

#include "cgmatch/config.hpp"
#include "cgmatch/errors.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch::run_io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::ofstream open_log(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
    return out;
}

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot read '" + path.string() + "'");
    return in;
}

const std::string kPartitionHeader = "iteration\tsubset\tentries";

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_log(path);
    out << text;
}

}  // namespace

RunDirectory::RunDirectory(const fs::path& dir, int classes) {
    fs::create_directories(dir);
    dynamics_ = open_log(dir / files::kDynamics);
    partitions_ = open_log(dir / files::kPartitions);
    checkpoints_ = open_log(dir / files::kCheckpoints);
    eval_ = open_log(dir / files::kEval);
    partitions_ << kPartitionHeader << '\n';
    checkpoints_ << "iteration\tsample_id\tcount_gap\tsubset";
    for (int k = 0; k < classes; ++k) checkpoints_ << "\tp" << k;
    checkpoints_ << '\n';
    eval_ << "iteration\taccuracy\tece\n";
}

void RunDirectory::on_iteration(const trainer::IterationRecord& r) {
    json j;
    j["iteration"] = r.iteration;
    j["phase"] = r.warmup ? "warmup" : "train";
    j["lr"] = r.lr;
    j["L_s"] = r.loss.supervised;
    j["L_e"] = r.loss.easy;
    j["L_a"] = r.loss.ambiguous;
    j["lambda_e"] = r.loss.lambda_e;
    j["lambda_a"] = r.loss.lambda_a;
    j["total"] = r.loss.total;
    j["tau_e"] = r.tau_e;
    j["tau_a"] = r.tau_a;
    j["mu_e"] = r.mean_confidence;
    j["mu_a"] = r.mean_count_gap;
    j["n_easy"] = r.n_easy;
    j["n_ambiguous"] = r.n_ambiguous;
    j["n_hard"] = r.n_hard;
    j["n_confident"] = r.n_confident;
    j["batch_unlabeled"] = r.batch_unlabeled;
    dynamics_ << j.dump() << '\n';
}

void RunDirectory::on_partition(std::uint64_t iteration, const fds::Partition& p) {
    auto line = [&](const char* name, const std::vector<fds::Selection>& set) {
        partitions_ << iteration << '\t' << name << '\t';
        for (std::size_t i = 0; i < set.size(); ++i)
            partitions_ << (i ? " " : "") << set[i].id.value << ':' << set[i].pseudo_label;
        partitions_ << '\n';
    };
    line("easy", p.easy);
    line("ambiguous", p.ambiguous);
    line("hard", p.hard);
}

void RunDirectory::on_eval(const trainer::EvalRecord& r) {
    eval_ << r.iteration << '\t' << text_io::format_double(r.accuracy) << '\t'
          << text_io::format_double(r.ece) << '\n';
}

void RunDirectory::on_checkpoint(const trainer::CheckpointProbe& probe) {
    const auto& ids = *probe.ids;
    const auto& probs = *probe.probs;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        checkpoints_ << probe.iteration << '\t' << ids[i].value << '\t' << probe.count_gaps[i]
                     << '\t' << probe.subsets[i];
        for (double p : probs.row(i)) checkpoints_ << '\t' << text_io::format_double(p);
        checkpoints_ << '\n';
    }
}

void RunDirectory::flush() {
    dynamics_.flush();
    partitions_.flush();
    checkpoints_.flush();
    eval_.flush();
}

trainer::RunArtifacts execute_run(trainer::RunConfig config, const fs::path& dir) {
    config.validate();
    fs::create_directories(dir);
    fs::remove(dir / files::kComplete);
    fs::remove(dir / files::kPartial);

    const auto dataset = trainer::make_dataset(config.data);
    if (!config.augment) config.augment = datasets::AugmentConfig::relative_to(dataset.info().spread);
    {
        auto out = open_log(dir / files::kDataset);
        datasets::write_dataset(out, dataset);
    }
    // The persisted config points at the snapshot, relative to the run directory.
    if (!config.data.file.empty()) config.data.file = files::kDataset;
    write_text(dir / files::kConfig, config::format_run_config(config));

    RunDirectory logs(dir, dataset.classes());
    try {
        auto artifacts = trainer::run(config, dataset, &logs);
        logs.flush();
        {
            auto out = open_log(dir / files::kModel);
            diffnet::save_model(out, artifacts.model);
        }
        {
            auto out = open_log(dir / files::kQueues);
            cgtracker::write_queues(out, artifacts.tracker);
        }
        write_text(dir / files::kComplete, "complete\n");
        return artifacts;
    } catch (const std::exception& e) {
        logs.flush();
        write_text(dir / files::kPartial, std::string("aborted: ") + e.what() + "\n");
        throw;
    }
}

bool is_complete(const fs::path& dir) { return fs::exists(dir / files::kComplete); }

std::vector<trainer::IterationRecord> read_dynamics(const fs::path& file) {
    auto in = open_in(file);
    std::vector<trainer::IterationRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        trainer::IterationRecord r;
        r.iteration = j.at("iteration").get<std::uint64_t>();
        r.warmup = j.at("phase").get<std::string>() == "warmup";
        r.lr = j.at("lr").get<double>();
        r.loss.supervised = j.at("L_s").get<double>();
        r.loss.easy = j.at("L_e").get<double>();
        r.loss.ambiguous = j.at("L_a").get<double>();
        r.loss.lambda_e = j.at("lambda_e").get<double>();
        r.loss.lambda_a = j.at("lambda_a").get<double>();
        r.loss.total = j.at("total").get<double>();
        r.tau_e = j.at("tau_e").get<double>();
        r.tau_a = j.at("tau_a").get<double>();
        r.mean_confidence = j.at("mu_e").get<double>();
        r.mean_count_gap = j.at("mu_a").get<double>();
        r.n_easy = j.at("n_easy").get<std::size_t>();
        r.n_ambiguous = j.at("n_ambiguous").get<std::size_t>();
        r.n_hard = j.at("n_hard").get<std::size_t>();
        r.n_confident = j.at("n_confident").get<std::size_t>();
        r.batch_unlabeled = j.at("batch_unlabeled").get<std::size_t>();
        r.loss.n_easy = r.n_easy;
        r.loss.n_ambiguous = r.n_ambiguous;
        out.push_back(r);
    }
    return out;
}

std::vector<diagnostics::PartitionRecord> read_partitions(const fs::path& file) {
    auto in = open_in(file);
    std::string line;
    if (!std::getline(in, line) || line != kPartitionHeader)
        throw InvalidInput("'" + file.string() + "': unexpected header");
    std::vector<diagnostics::PartitionRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = text_io::split(line, '\t');
        if (f.size() != 3) throw InvalidInput("'" + file.string() + "': malformed row");
        const auto it = static_cast<std::uint64_t>(text_io::parse_int(f[0]));
        if (out.empty() || out.back().iteration != it) out.push_back({it, {}});
        auto& p = out.back().partition;
        auto& set = f[1] == "easy" ? p.easy : f[1] == "ambiguous" ? p.ambiguous : p.hard;
        if (f[2].empty()) continue;
        for (auto e : text_io::split(f[2], ' ')) {
            auto kv = text_io::split(e, ':');
            if (kv.size() != 2) throw InvalidInput("'" + file.string() + "': malformed entry");
            set.push_back({set.size(), SampleId{static_cast<std::uint32_t>(text_io::parse_int(kv[0]))},
                           static_cast<int>(text_io::parse_int(kv[1]))});
        }
    }
    return out;
}

std::vector<diagnostics::CheckpointRow> read_checkpoints(const fs::path& file) {
    auto in = open_in(file);
    std::string line;
    if (!std::getline(in, line) || line.rfind("iteration\tsample_id\tcount_gap\tsubset", 0) != 0)
        throw InvalidInput("'" + file.string() + "': unexpected header");
    std::vector<diagnostics::CheckpointRow> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = text_io::split(line, '\t');
        if (f.size() < 6 || f[3].size() != 1)
            throw InvalidInput("'" + file.string() + "': malformed row");
        diagnostics::CheckpointRow r;
        r.iteration = static_cast<std::uint64_t>(text_io::parse_int(f[0]));
        r.sample = SampleId{static_cast<std::uint32_t>(text_io::parse_int(f[1]))};
        r.count_gap = static_cast<std::uint32_t>(text_io::parse_int(f[2]));
        r.subset = diagnostics::subset_from_char(f[3][0]);
        for (std::size_t k = 4; k < f.size(); ++k) r.probs.push_back(text_io::parse_double(f[k]));
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cgmatch::run_io
