#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eimtd/tensor.hpp"

namespace eimtd {

struct Example {
    Vec x;
    std::size_t y = 0;  // zero-based class index
};

struct FeatureBounds {
    double lo = 0.0;
    double hi = 1.0;
};

struct LabeledSet {
    std::vector<Example> examples;
    // Teacher soft labels, parallel to `examples` when present.
    std::optional<std::vector<Vec>> soft_labels;
    FeatureBounds bounds;
    std::size_t num_classes = 0;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    std::size_t dim() const { return examples.empty() ? 0 : examples.front().x.size(); }

    // Throws ValidationError on ragged rows, out-of-box features, bad labels or
    // soft labels that are not on the simplex.
    void validate() const;
};

enum class DatasetKind { blobs, rings };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::blobs;
    std::size_t dim = 16;
    std::size_t num_classes = 4;
    std::size_t n_train = 400;
    std::size_t n_test = 200;
    double noise = 0.08;
};

struct SplitData {
    LabeledSet train;
    LabeledSet test;
    // Class centres in the unit box (blobs only; empty for rings).
    std::vector<Vec> centroids;
};

SplitData generate_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Header `x0,...,x{d-1},y`; 17 significant digits.
std::string to_csv(const LabeledSet& data);
LabeledSet from_csv(const std::string& text, std::size_t num_classes);
void write_csv(const std::string& path, const LabeledSet& data);
LabeledSet read_csv(const std::string& path, std::size_t num_classes);

double accuracy(const DenseNet& net, const LabeledSet& data);

}  // namespace eimtd
