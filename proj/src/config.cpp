#include "cgmatch/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "cgmatch/errors.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch::config {

namespace pt = boost::property_tree;

namespace {

// Reads typed values out of the tree and remembers which keys were used.
class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& key) {
        used_.insert(key);
        auto v = tree_.get_optional<std::string>(key);
        if (v) return trim(*v);
        return std::nullopt;
    }

    std::string require(const std::string& key) {
        auto v = raw(key);
        if (!v || v->empty()) throw ConfigError("missing required field '" + key + "'");
        return *v;
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        auto v = raw(key);
        if (!v) return;
        try {
            if constexpr (std::is_same_v<T, double>)
                out = text_io::parse_double(*v);
            else if constexpr (std::is_same_v<T, bool>)
                out = parse_bool(key, *v);
            else if constexpr (std::is_same_v<T, std::string>)
                out = *v;
            else {
                const auto n = text_io::parse_int(*v);
                if (n < 0) throw ConfigError("'" + key + "' must be non-negative");
                out = static_cast<T>(n);
            }
        } catch (const InvalidInput& e) {
            throw ConfigError("field '" + key + "': " + e.what());
        }
    }

    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty()) throw ConfigError("unknown top-level key '" + section + "'");
            for (const auto& [key, _] : body)
                if (!used_.count(section + "." + key))
                    throw ConfigError("unknown config key '" + section + "." + key + "'");
        }
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t");
        if (b == std::string::npos) return "";
        return s.substr(b, s.find_last_not_of(" \t") - b + 1);
    }

    static bool parse_bool(const std::string& key, const std::string& v) {
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("field '" + key + "': expected true or false");
    }

    const pt::ptree& tree_;
    std::set<std::string> used_;
};

std::vector<std::size_t> parse_widths(const std::string& s) {
    std::vector<std::size_t> out;
    if (s.empty() || s == "none") return out;
    for (auto tok : text_io::split(s, ','))
        out.push_back(static_cast<std::size_t>(text_io::parse_int(tok)));
    return out;
}

std::optional<fds::ClampRange> parse_clamp(const std::string& s) {
    if (s.empty() || s == "none") return std::nullopt;
    auto parts = text_io::split(s, ':');
    if (parts.size() != 2) throw ConfigError("ssl.clamp must be 'lo:hi' or 'none'");
    return fds::ClampRange{text_io::parse_double(parts[0]), text_io::parse_double(parts[1])};
}

kernels::Backend parse_backend(const std::string& s) {
    if (s == "openmp") return kernels::Backend::OpenMP;
    if (s == "serial") return kernels::Backend::Serial;
    throw ConfigError("model.backend must be 'openmp' or 'serial'");
}

}  // namespace

Override parse_override(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override '" + text + "' is not of the form section.key=value");
    const std::string key = text.substr(0, eq);
    if (key.find('.') == std::string::npos)
        throw ConfigError("override key '" + key + "' must be section.key");
    return {key, text.substr(eq + 1)};
}

trainer::RunConfig parse_run_config(const std::string& ini_text,
                                    const std::vector<Override>& overrides,
                                    const std::filesystem::path& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(ini_text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    for (const auto& [k, v] : overrides) tree.put(k, v);

    Reader r(tree);
    trainer::RunConfig c;
    auto& d = c.data;
    r.read("data.file", d.file);
    if (!d.file.empty() && std::filesystem::path(d.file).is_relative() && !base_dir.empty())
        d.file = (base_dir / d.file).string();
    if (auto kind = r.raw("data.kind"); kind && !kind->empty())
        d.kind = datasets::parse_kind(*kind);
    else if (d.file.empty())
        r.require("data.kind");
    r.read("data.seed", d.blobs.seed);
    d.moons.seed = d.blobs.seed;
    r.read("data.classes", d.blobs.classes);
    r.read("data.labels_per_class", d.blobs.labels_per_class);
    r.read("data.dim", d.blobs.dim);
    r.read("data.spread", d.blobs.spread);
    r.read("data.unlabeled", d.blobs.n_unlabeled);
    r.read("data.test", d.blobs.n_test);
    d.moons.n_unlabeled = d.blobs.n_unlabeled;
    d.moons.n_test = d.blobs.n_test;
    r.read("data.labeled", d.moons.n_labeled);
    r.read("data.noise", d.moons.noise);

    if (auto h = r.raw("model.hidden")) c.hidden = parse_widths(*h);
    if (auto b = r.raw("model.backend")) c.backend = parse_backend(*b);

    r.read("optim.lr", c.lr);
    r.read("optim.momentum", c.momentum);

    if (auto m = r.raw("ssl.method")) c.method = trainer::parse_method(*m);
    if (auto t = r.raw("ssl.thresholding")) c.thresholding = fds::parse_threshold_mode(*t);
    r.read("ssl.fixed_tau", c.fixed_tau);
    r.read("ssl.fixmatch_tau", c.fixmatch_tau);
    r.read("ssl.ema_momentum", c.ema_momentum);
    r.read("ssl.q", c.q);
    r.read("ssl.lambda_e", c.lambda_e);
    r.read("ssl.lambda_u", c.lambda_u);
    if (auto cl = r.raw("ssl.clamp")) c.clamp = parse_clamp(*cl);
    r.read("ssl.detach_weak", c.detach_weak);
    r.read("ssl.warmup_window", c.warmup_window);

    auto weak = r.raw("augment.weak_sigma");
    auto strong = r.raw("augment.strong_sigma");
    auto drop = r.raw("augment.dropout");
    if (weak || strong || drop) {
        if (!weak || !strong || !drop)
            throw ConfigError("augment section needs weak_sigma, strong_sigma and dropout together");
        c.augment = datasets::AugmentConfig{text_io::parse_double(*weak),
                                            text_io::parse_double(*strong),
                                            text_io::parse_double(*drop)};
    }

    r.read("run.seed", c.seed);
    r.read("run.iterations", c.iterations);
    r.read("run.warmup", c.warmup);
    r.read("run.batch_labeled", c.batch_labeled);
    r.read("run.ratio", c.ratio);
    r.read("run.eval_every", c.eval_every);
    r.read("run.checkpoint_every", c.checkpoint_every);
    r.read("run.partition_log_every", c.partition_log_every);

    r.reject_unknown();
    c.validate();
    return c;
}

trainer::RunConfig load_run_config(const std::filesystem::path& file,
                                   const std::vector<Override>& overrides) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config file '" + file.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), overrides, file.parent_path());
}

std::string format_run_config(const trainer::RunConfig& c) {
    using text_io::format_double;
    std::ostringstream os;
    os << "[data]\n";
    os << "kind=" << datasets::to_string(c.data.kind) << '\n';
    if (!c.data.file.empty()) os << "file=" << c.data.file << '\n';
    os << "seed=" << c.data.blobs.seed << '\n';
    if (c.data.kind == datasets::Kind::Blobs) {
        const auto& b = c.data.blobs;
        os << "classes=" << b.classes << '\n';
        os << "labels_per_class=" << b.labels_per_class << '\n';
        os << "dim=" << b.dim << '\n';
        os << "spread=" << format_double(b.spread) << '\n';
        os << "unlabeled=" << b.n_unlabeled << '\n';
        os << "test=" << b.n_test << '\n';
    } else {
        const auto& m = c.data.moons;
        os << "labeled=" << m.n_labeled << '\n';
        os << "noise=" << format_double(m.noise) << '\n';
        os << "unlabeled=" << m.n_unlabeled << '\n';
        os << "test=" << m.n_test << '\n';
    }
    os << "\n[model]\n";
    os << "hidden=";
    if (c.hidden.empty()) os << "none";
    for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
    os << '\n';
    os << "backend=" << (c.backend == kernels::Backend::OpenMP ? "openmp" : "serial") << '\n';
    os << "\n[optim]\n";
    os << "lr=" << format_double(c.lr) << '\n';
    os << "momentum=" << format_double(c.momentum) << '\n';
    os << "\n[ssl]\n";
    os << "method=" << trainer::to_string(c.method) << '\n';
    os << "thresholding=" << fds::to_string(c.thresholding) << '\n';
    os << "fixed_tau=" << format_double(c.fixed_tau) << '\n';
    os << "fixmatch_tau=" << format_double(c.fixmatch_tau) << '\n';
    os << "ema_momentum=" << format_double(c.ema_momentum) << '\n';
    os << "q=" << format_double(c.q) << '\n';
    os << "lambda_e=" << format_double(c.lambda_e) << '\n';
    os << "lambda_u=" << format_double(c.lambda_u) << '\n';
    os << "clamp="
       << (c.clamp ? format_double(c.clamp->lo) + ":" + format_double(c.clamp->hi) : "none") << '\n';
    os << "detach_weak=" << (c.detach_weak ? "true" : "false") << '\n';
    os << "warmup_window=" << c.warmup_window << '\n';
    if (c.augment) {
        os << "\n[augment]\n";
        os << "weak_sigma=" << format_double(c.augment->weak_sigma) << '\n';
        os << "strong_sigma=" << format_double(c.augment->strong_sigma) << '\n';
        os << "dropout=" << format_double(c.augment->strong_dropout) << '\n';
    }
    os << "\n[run]\n";
    os << "seed=" << c.seed << '\n';
    os << "iterations=" << c.iterations << '\n';
    os << "warmup=" << c.warmup << '\n';
    os << "batch_labeled=" << c.batch_labeled << '\n';
    os << "ratio=" << c.ratio << '\n';
    os << "eval_every=" << c.eval_every << '\n';
    os << "checkpoint_every=" << c.checkpoint_every << '\n';
    os << "partition_log_every=" << c.partition_log_every << '\n';
    return os.str();
}

}  // namespace cgmatch::config
