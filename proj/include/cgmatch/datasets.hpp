#pragma once

// Seeded synthetic classification datasets with labeled / unlabeled / test
// splits, weak and strong stochastic augmentation, and batch sampling.
//
// Gold labels of the unlabeled pool are stored inside Dataset but are not
// reachable through its public interface; evaluation code obtains them via
// cgmatch/gold.hpp, which the training path never includes.

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cgmatch/matrix.hpp"

namespace cgmatch {

struct SampleId {
    std::uint32_t value = 0;
    auto operator<=>(const SampleId&) const = default;
};

namespace datasets {

class Dataset;

}  // namespace datasets

namespace evaluation {
const std::vector<int>& unlabeled_gold(const datasets::Dataset& dataset);
}  // namespace evaluation

namespace datasets {

enum class Split { Labeled, Unlabeled, Test };
enum class Kind { Blobs, TwoMoons };

std::string to_string(Split s);
std::string to_string(Kind k);
Kind parse_kind(const std::string& s);

struct LabeledPool {
    std::vector<SampleId> ids;
    Matrix features;
    std::vector<int> labels;

    std::size_t size() const { return ids.size(); }
    bool operator==(const LabeledPool&) const = default;
};

// Features and ids only.
struct UnlabeledPool {
    std::vector<SampleId> ids;
    Matrix features;

    std::size_t size() const { return ids.size(); }
    bool operator==(const UnlabeledPool&) const = default;
};

struct DatasetInfo {
    Kind kind = Kind::Blobs;
    int classes = 0;
    std::size_t dim = 0;
    std::uint64_t seed = 0;
    // Length scale of the data; augmentation noise defaults are relative to it.
    double spread = 1.0;

    bool operator==(const DatasetInfo&) const = default;
};

class Dataset {
public:
    Dataset(DatasetInfo info, LabeledPool labeled, UnlabeledPool unlabeled,
            std::vector<int> unlabeled_gold, LabeledPool test);

    const DatasetInfo& info() const { return info_; }
    int classes() const { return info_.classes; }
    std::size_t dim() const { return info_.dim; }

    const LabeledPool& labeled() const { return labeled_; }
    const UnlabeledPool& unlabeled() const { return unlabeled_; }
    const LabeledPool& test() const { return test_; }

    // Position of an unlabeled id within the unlabeled pool.
    std::size_t unlabeled_index(SampleId id) const;
    bool is_unlabeled(SampleId id) const;

    bool operator==(const Dataset&) const = default;

private:
    DatasetInfo info_;
    LabeledPool labeled_;
    UnlabeledPool unlabeled_;
    std::vector<int> unlabeled_gold_;
    LabeledPool test_;

    friend const std::vector<int>& evaluation::unlabeled_gold(const Dataset& dataset);
    friend void write_dataset(std::ostream& os, const Dataset& dataset);
};

struct BlobsSpec {
    int classes = 4;
    int labels_per_class = 4;
    std::size_t n_unlabeled = 2000;
    std::size_t n_test = 2000;
    std::size_t dim = 8;
    // Distance between any two cluster means, in units of the unit-variance
    // cluster noise.
    double spread = 3.0;
    std::uint64_t seed = 0;
};

struct TwoMoonsSpec {
    std::size_t n_labeled = 8;
    std::size_t n_unlabeled = 1000;
    std::size_t n_test = 1000;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

// Gaussian clusters centred on the vertices of a randomly rotated regular
// simplex. Requires dim >= classes - 1.
Dataset make_blobs(const BlobsSpec& spec);
Dataset make_two_moons(const TwoMoonsSpec& spec);

struct AugmentConfig {
    double weak_sigma = 0.05;
    double strong_sigma = 0.25;
    double strong_dropout = 0.2;

    // 0 < weak < strong, 0 <= dropout < 1.
    void validate() const;
    static AugmentConfig relative_to(double spread);
};

std::vector<double> weak_augment(std::span<const double> x, double sigma, std::mt19937_64& rng);
std::vector<double> strong_augment(std::span<const double> x, double sigma, double dropout,
                                   std::mt19937_64& rng);

// Independent random streams so that labeled sampling is unaffected by
// whether unlabeled batches are drawn.
struct BatchRng {
    std::mt19937_64 labeled;
    std::mt19937_64 labeled_augment;
    std::mt19937_64 unlabeled;
    std::mt19937_64 unlabeled_augment;

    static BatchRng from_seed(std::uint64_t seed);
};

struct Batch {
    std::vector<SampleId> labeled_ids;
    Matrix labeled_features;  // weak view
    std::vector<int> labels;

    std::vector<SampleId> unlabeled_ids;
    Matrix unlabeled_weak;
    Matrix unlabeled_strong;  // empty when not requested

    bool labeled_with_replacement = false;
    bool unlabeled_with_replacement = false;
};

struct BatchRequest {
    std::size_t labeled = 64;
    std::size_t ratio = 7;
    bool strong_view = true;
};

// Uniform sampling; without replacement inside a batch whenever the pool is
// large enough, otherwise with replacement (and the batch says so).
Batch draw_batch(const Dataset& dataset, const BatchRequest& request,
                 const AugmentConfig& augment, BatchRng& rng);

// Columnar text format:
//   cgmatch-dataset v1
//   kind <blobs|two_moons>
//   classes <K>
//   dim <D>
//   seed <seed>
//   spread <spread>
//   columns id split label x0 .. x{D-1}
//   <id> <labeled|unlabeled|test> <label or hidden gold> <features...>
void write_dataset(std::ostream& os, const Dataset& dataset);
Dataset read_dataset(std::istream& is);

}  // namespace datasets
}  // namespace cgmatch
