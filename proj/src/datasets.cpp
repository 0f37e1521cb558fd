#include "cgmatch/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <string>

#include <spdlog/spdlog.h>

#include "cgmatch/errors.hpp"
#include "cgmatch/gold.hpp"
#include "cgmatch/text_io.hpp"

namespace cgmatch {

namespace evaluation {
const std::vector<int>& unlabeled_gold(const datasets::Dataset& dataset) {
    return dataset.unlabeled_gold_;
}
}  // namespace evaluation

namespace datasets {

std::string to_string(Split s) {
    switch (s) {
        case Split::Labeled: return "labeled";
        case Split::Unlabeled: return "unlabeled";
        case Split::Test: return "test";
    }
    return "?";
}

std::string to_string(Kind k) { return k == Kind::Blobs ? "blobs" : "two_moons"; }

Kind parse_kind(const std::string& s) {
    if (s == "blobs") return Kind::Blobs;
    if (s == "two_moons") return Kind::TwoMoons;
    throw ConfigError("unknown dataset kind '" + s + "' (expected blobs or two_moons)");
}

Dataset::Dataset(DatasetInfo info, LabeledPool labeled, UnlabeledPool unlabeled,
                 std::vector<int> unlabeled_gold, LabeledPool test)
    : info_(info),
      labeled_(std::move(labeled)),
      unlabeled_(std::move(unlabeled)),
      unlabeled_gold_(std::move(unlabeled_gold)),
      test_(std::move(test)) {
    if (info_.classes < 2) throw InvalidInput("dataset needs at least 2 classes");
    if (labeled_.size() == 0) throw InvalidInput("dataset has no labeled samples");
    if (unlabeled_gold_.size() != unlabeled_.size())
        throw InvalidInput("unlabeled gold labels do not match the unlabeled pool");

    auto check_pool = [&](const std::vector<SampleId>& ids, const Matrix& x, std::uint32_t start,
                          const char* name) {
        if (x.rows() != ids.size() || (!ids.empty() && x.cols() != info_.dim))
            throw InvalidInput(std::string(name) + " pool has inconsistent feature shape");
        for (std::size_t i = 0; i < ids.size(); ++i)
            if (ids[i].value != start + i)
                throw InvalidInput(std::string(name) + " pool ids are not contiguous");
    };
    check_pool(labeled_.ids, labeled_.features, 0, "labeled");
    check_pool(unlabeled_.ids, unlabeled_.features, static_cast<std::uint32_t>(labeled_.size()),
               "unlabeled");
    check_pool(test_.ids, test_.features,
               static_cast<std::uint32_t>(labeled_.size() + unlabeled_.size()), "test");

    auto check_labels = [&](const std::vector<int>& labels) {
        for (int y : labels)
            if (y < 0 || y >= info_.classes) throw InvalidInput("label out of range");
    };
    check_labels(labeled_.labels);
    check_labels(unlabeled_gold_);
    check_labels(test_.labels);
    std::vector<bool> seen(info_.classes, false);
    for (int y : labeled_.labels) seen[y] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end())
        throw InvalidInput("every class needs at least one labeled example");
}

std::size_t Dataset::unlabeled_index(SampleId id) const {
    if (!is_unlabeled(id))
        throw InvalidInput("sample id " + std::to_string(id.value) + " is not in the unlabeled pool");
    return id.value - unlabeled_.ids.front().value;
}

bool Dataset::is_unlabeled(SampleId id) const {
    return !unlabeled_.ids.empty() && id >= unlabeled_.ids.front() && id <= unlabeled_.ids.back();
}

namespace {

// Pool of (class, features) assembled before ids are assigned.
struct RawPool {
    std::vector<int> labels;
    Matrix features;
};

std::vector<SampleId> make_ids(std::size_t start, std::size_t n) {
    std::vector<SampleId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = SampleId{static_cast<std::uint32_t>(start + i)};
    return ids;
}

Dataset assemble(const DatasetInfo& info, RawPool labeled, RawPool unlabeled, RawPool test) {
    const std::size_t nl = labeled.labels.size();
    const std::size_t nu = unlabeled.labels.size();
    const std::size_t nt = test.labels.size();
    LabeledPool lp{make_ids(0, nl), std::move(labeled.features), std::move(labeled.labels)};
    UnlabeledPool up{make_ids(nl, nu), std::move(unlabeled.features)};
    LabeledPool tp{make_ids(nl + nu, nt), std::move(test.features), std::move(test.labels)};
    return Dataset(info, std::move(lp), std::move(up), std::move(unlabeled.labels), std::move(tp));
}

// Balanced class assignment in shuffled order.
std::vector<int> balanced_labels(std::size_t n, int classes, std::mt19937_64& rng) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
    std::shuffle(labels.begin(), labels.end(), rng);
    return labels;
}

// Orthonormal columns via Gram-Schmidt on Gaussian draws: [rows x cols].
Matrix random_orthonormal(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    Matrix q(rows, cols);
    for (std::size_t c = 0; c < cols; ++c) {
        while (true) {
            std::vector<double> v(rows);
            for (double& x : v) x = n01(rng);
            for (std::size_t p = 0; p < c; ++p) {
                double dot = 0.0;
                for (std::size_t r = 0; r < rows; ++r) dot += v[r] * q(r, p);
                for (std::size_t r = 0; r < rows; ++r) v[r] -= dot * q(r, p);
            }
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-8) continue;
            for (std::size_t r = 0; r < rows; ++r) q(r, c) = v[r] / norm;
            break;
        }
    }
    return q;
}

// Regular simplex with unit edge length, centred at the origin, in K-1 dims.
Matrix unit_simplex(int classes) {
    const auto k = static_cast<std::size_t>(classes);
    // Centred one-hot vectors e_i - 1/K, orthonormalised basis of their span.
    Matrix centred(k, k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) centred(i, j) = (i == j ? 1.0 : 0.0) - 1.0 / k;
    std::vector<std::vector<double>> basis;
    for (std::size_t i = 0; i + 1 < k; ++i) {
        std::vector<double> v(centred.row(i).begin(), centred.row(i).end());
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += v[j] * b[j];
            for (std::size_t j = 0; j < k; ++j) v[j] -= dot * b[j];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        basis.push_back(std::move(v));
    }
    Matrix coords(k, k - 1);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t b = 0; b + 1 < k; ++b) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += centred(i, j) * basis[b][j];
            coords(i, b) = dot / std::numbers::sqrt2;  // one-hot edges have length sqrt(2)
        }
    return coords;
}

}  // namespace

Dataset make_blobs(const BlobsSpec& spec) {
    if (spec.classes < 2) throw ConfigError("blobs: need at least 2 classes");
    if (spec.labels_per_class < 1) throw ConfigError("blobs: labels_per_class must be >= 1");
    if (spec.dim + 1 < static_cast<std::size_t>(spec.classes))
        throw ConfigError("blobs: dim must be at least classes - 1");
    if (!(spec.spread >= 0.0) || !std::isfinite(spec.spread))
        throw ConfigError("blobs: spread must be finite and non-negative");

    std::mt19937_64 rng(spec.seed);
    const auto k = static_cast<std::size_t>(spec.classes);
    const Matrix simplex = unit_simplex(spec.classes);
    const Matrix rotation = random_orthonormal(spec.dim, k - 1, rng);
    Matrix means(k, spec.dim);
    for (std::size_t c = 0; c < k; ++c)
        for (std::size_t d = 0; d < spec.dim; ++d) {
            double v = 0.0;
            for (std::size_t b = 0; b + 1 < k; ++b) v += rotation(d, b) * simplex(c, b);
            means(c, d) = spec.spread * v;
        }

    std::normal_distribution<double> n01(0.0, 1.0);
    auto sample_pool = [&](std::vector<int> labels) {
        RawPool pool{std::move(labels), Matrix(0, 0)};
        pool.features = Matrix(pool.labels.size(), spec.dim);
        for (std::size_t i = 0; i < pool.labels.size(); ++i)
            for (std::size_t d = 0; d < spec.dim; ++d)
                pool.features(i, d) = means(pool.labels[i], d) + n01(rng);
        return pool;
    };

    std::vector<int> labeled_labels;
    for (int c = 0; c < spec.classes; ++c)
        labeled_labels.insert(labeled_labels.end(), spec.labels_per_class, c);
    RawPool labeled = sample_pool(std::move(labeled_labels));
    RawPool unlabeled = sample_pool(balanced_labels(spec.n_unlabeled, spec.classes, rng));
    RawPool test = sample_pool(balanced_labels(spec.n_test, spec.classes, rng));

    DatasetInfo info{Kind::Blobs, spec.classes, spec.dim, spec.seed, spec.spread};
    return assemble(info, std::move(labeled), std::move(unlabeled), std::move(test));
}

Dataset make_two_moons(const TwoMoonsSpec& spec) {
    if (spec.n_labeled < 2) throw ConfigError("two_moons: need at least one labeled sample per class");
    if (!(spec.noise >= 0.0) || !std::isfinite(spec.noise))
        throw ConfigError("two_moons: noise must be finite and non-negative");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> n01(0.0, 1.0);
    auto sample_pool = [&](std::vector<int> labels) {
        RawPool pool{std::move(labels), Matrix(0, 0)};
        pool.features = Matrix(pool.labels.size(), 2);
        for (std::size_t i = 0; i < pool.labels.size(); ++i) {
            const double a = angle(rng);
            double x = 0.0, y = 0.0;
            if (pool.labels[i] == 0) {
                x = std::cos(a);
                y = std::sin(a);
            } else {
                x = 1.0 - std::cos(a);
                y = 0.5 - std::sin(a);
            }
            if (spec.noise > 0.0) {
                x += spec.noise * n01(rng);
                y += spec.noise * n01(rng);
            }
            pool.features(i, 0) = x;
            pool.features(i, 1) = y;
        }
        return pool;
    };
    std::vector<int> labeled_labels(spec.n_labeled);
    for (std::size_t i = 0; i < spec.n_labeled; ++i) labeled_labels[i] = static_cast<int>(i % 2);
    RawPool labeled = sample_pool(std::move(labeled_labels));
    RawPool unlabeled = sample_pool(balanced_labels(spec.n_unlabeled, 2, rng));
    RawPool test = sample_pool(balanced_labels(spec.n_test, 2, rng));

    DatasetInfo info{Kind::TwoMoons, 2, 2, spec.seed, 1.0};
    return assemble(info, std::move(labeled), std::move(unlabeled), std::move(test));
}

void AugmentConfig::validate() const {
    if (!(weak_sigma > 0.0 && weak_sigma < strong_sigma))
        throw ConfigError("augmentation needs 0 < weak_sigma < strong_sigma");
    if (!(strong_dropout >= 0.0 && strong_dropout < 1.0))
        throw ConfigError("augmentation needs 0 <= strong_dropout < 1");
}

AugmentConfig AugmentConfig::relative_to(double spread) {
    return AugmentConfig{0.05 * spread, 0.25 * spread, 0.2};
}

std::vector<double> weak_augment(std::span<const double> x, double sigma, std::mt19937_64& rng) {
    std::vector<double> out(x.begin(), x.end());
    if (sigma == 0.0) return out;
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : out) v += n(rng);
    return out;
}

std::vector<double> strong_augment(std::span<const double> x, double sigma, double dropout,
                                   std::mt19937_64& rng) {
    std::vector<double> out(x.begin(), x.end());
    std::normal_distribution<double> n(0.0, sigma);
    std::bernoulli_distribution drop(dropout);
    for (double& v : out) {
        v += sigma > 0.0 ? n(rng) : 0.0;
        if (drop(rng)) v = 0.0;
    }
    return out;
}

BatchRng BatchRng::from_seed(std::uint64_t seed) {
    auto stream = [seed](std::uint64_t id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(id)};
        return std::mt19937_64(seq);
    };
    return BatchRng{stream(1), stream(2), stream(3), stream(4)};
}

namespace {

// Indices for one batch: distinct when the pool allows, otherwise i.i.d.
std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n, std::mt19937_64& rng,
                                        bool& with_replacement) {
    std::vector<std::size_t> out(n);
    with_replacement = n > pool;
    if (with_replacement) {
        std::uniform_int_distribution<std::size_t> u(0, pool - 1);
        for (auto& i : out) i = u(rng);
        return out;
    }
    std::vector<std::size_t> perm(pool);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> u(i, pool - 1);
        std::swap(perm[i], perm[u(rng)]);
        out[i] = perm[i];
    }
    return out;
}

}  // namespace

Batch draw_batch(const Dataset& dataset, const BatchRequest& request,
                 const AugmentConfig& augment, BatchRng& rng) {
    const auto& lp = dataset.labeled();
    const auto& up = dataset.unlabeled();
    const std::size_t dim = dataset.dim();
    const std::size_t n_unlabeled = request.labeled * request.ratio;
    if (request.labeled == 0) throw InvalidInput("draw_batch: labeled batch size must be positive");
    if (n_unlabeled > 0 && up.size() == 0)
        throw InvalidInput("draw_batch: unlabeled pool is empty");

    Batch b;
    auto li = sample_indices(lp.size(), request.labeled, rng.labeled, b.labeled_with_replacement);
    if (b.labeled_with_replacement) {
        static bool warned = false;
        if (!warned) {
            spdlog::info("labeled batch {} exceeds pool {}; sampling with replacement",
                         request.labeled, lp.size());
            warned = true;
        }
    }
    b.labeled_features = Matrix(li.size(), dim);
    for (std::size_t i = 0; i < li.size(); ++i) {
        b.labeled_ids.push_back(lp.ids[li[i]]);
        b.labels.push_back(lp.labels[li[i]]);
        auto v = weak_augment(lp.features.row(li[i]), augment.weak_sigma, rng.labeled_augment);
        std::copy(v.begin(), v.end(), b.labeled_features.row(i).begin());
    }

    if (n_unlabeled == 0) return b;
    auto ui = sample_indices(up.size(), n_unlabeled, rng.unlabeled, b.unlabeled_with_replacement);
    b.unlabeled_weak = Matrix(ui.size(), dim);
    if (request.strong_view) b.unlabeled_strong = Matrix(ui.size(), dim);
    for (std::size_t i = 0; i < ui.size(); ++i) {
        b.unlabeled_ids.push_back(up.ids[ui[i]]);
        auto x = up.features.row(ui[i]);
        auto w = weak_augment(x, augment.weak_sigma, rng.unlabeled_augment);
        std::copy(w.begin(), w.end(), b.unlabeled_weak.row(i).begin());
        if (request.strong_view) {
            auto s = strong_augment(x, augment.strong_sigma, augment.strong_dropout,
                                    rng.unlabeled_augment);
            std::copy(s.begin(), s.end(), b.unlabeled_strong.row(i).begin());
        }
    }
    return b;
}

void write_dataset(std::ostream& os, const Dataset& ds) {
    const auto& info = ds.info();
    os << "cgmatch-dataset v1\n";
    os << "kind " << to_string(info.kind) << '\n';
    os << "classes " << info.classes << '\n';
    os << "dim " << info.dim << '\n';
    os << "seed " << info.seed << '\n';
    os << "spread " << text_io::format_double(info.spread) << '\n';
    os << "columns id split label";
    for (std::size_t d = 0; d < info.dim; ++d) os << " x" << d;
    os << '\n';
    auto write_rows = [&](const std::vector<SampleId>& ids, const Matrix& x,
                          const std::vector<int>& labels, Split split) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            os << ids[i].value << ' ' << to_string(split) << ' ' << labels[i];
            for (double v : x.row(i)) os << ' ' << text_io::format_double(v);
            os << '\n';
        }
    };
    write_rows(ds.labeled_.ids, ds.labeled_.features, ds.labeled_.labels, Split::Labeled);
    write_rows(ds.unlabeled_.ids, ds.unlabeled_.features, ds.unlabeled_gold_, Split::Unlabeled);
    write_rows(ds.test_.ids, ds.test_.features, ds.test_.labels, Split::Test);
}

Dataset read_dataset(std::istream& is) {
    std::string line;
    auto expect = [&](const std::string& key) -> std::string {
        if (!std::getline(is, line) || line.rfind(key + " ", 0) != 0)
            throw InvalidInput("dataset file: expected '" + key + "' header line");
        return line.substr(key.size() + 1);
    };
    if (!std::getline(is, line) || line != "cgmatch-dataset v1")
        throw InvalidInput("dataset file: missing 'cgmatch-dataset v1' header");
    DatasetInfo info;
    info.kind = parse_kind(expect("kind"));
    info.classes = static_cast<int>(text_io::parse_int(expect("classes")));
    info.dim = static_cast<std::size_t>(text_io::parse_int(expect("dim")));
    info.seed = static_cast<std::uint64_t>(text_io::parse_int(expect("seed")));
    info.spread = text_io::parse_double(expect("spread"));
    expect("columns");

    struct Row {
        std::uint32_t id;
        int label;
        std::vector<double> x;
    };
    std::vector<Row> rows[3];
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto toks = text_io::split(line, ' ');
        if (toks.size() != 3 + info.dim)
            throw InvalidInput("dataset file: row has " + std::to_string(toks.size()) +
                               " columns, expected " + std::to_string(3 + info.dim));
        int split = toks[1] == "labeled" ? 0 : toks[1] == "unlabeled" ? 1 : toks[1] == "test" ? 2 : -1;
        if (split < 0) throw InvalidInput("dataset file: unknown split '" + std::string(toks[1]) + "'");
        Row r{static_cast<std::uint32_t>(text_io::parse_int(toks[0])),
              static_cast<int>(text_io::parse_int(toks[2])), {}};
        for (std::size_t d = 0; d < info.dim; ++d) r.x.push_back(text_io::parse_double(toks[3 + d]));
        rows[split].push_back(std::move(r));
    }
    auto to_matrix = [&](const std::vector<Row>& rs) {
        Matrix m(rs.size(), info.dim);
        for (std::size_t i = 0; i < rs.size(); ++i)
            std::copy(rs[i].x.begin(), rs[i].x.end(), m.row(i).begin());
        return m;
    };
    auto ids_of = [](const std::vector<Row>& rs) {
        std::vector<SampleId> ids;
        for (const auto& r : rs) ids.push_back(SampleId{r.id});
        return ids;
    };
    auto labels_of = [](const std::vector<Row>& rs) {
        std::vector<int> l;
        for (const auto& r : rs) l.push_back(r.label);
        return l;
    };
    LabeledPool lp{ids_of(rows[0]), to_matrix(rows[0]), labels_of(rows[0])};
    UnlabeledPool up{ids_of(rows[1]), to_matrix(rows[1])};
    LabeledPool tp{ids_of(rows[2]), to_matrix(rows[2]), labels_of(rows[2])};
    return Dataset(info, std::move(lp), std::move(up), labels_of(rows[1]), std::move(tp));
}

}  // namespace datasets
}  // namespace cgmatch
