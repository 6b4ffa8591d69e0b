#include "eimtd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eimtd/error.hpp"
#include "eimtd/io.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

void LabeledSet::validate() const {
    require(num_classes > 0, "dataset has no classes");
    require(bounds.lo < bounds.hi, "feature bounds are empty");
    const std::size_t d = dim();
    for (std::size_t n = 0; n < examples.size(); ++n) {
        const Example& e = examples[n];
        const std::string where = "example " + std::to_string(n);
        require(e.x.size() == d, where + ": ragged feature vector");
        require(e.y < num_classes, where + ": label out of range");
        for (double v : e.x) require(v >= bounds.lo && v <= bounds.hi, where + ": feature outside bounds");
    }
    if (soft_labels) {
        require(soft_labels->size() == examples.size(), "soft labels not parallel to examples");
        for (const Vec& s : *soft_labels) {
            require(s.size() == num_classes, "soft label length mismatch");
            double total = 0.0;
            for (double p : s) {
                require(p >= 0.0, "negative soft label entry");
                total += p;
            }
            require(std::abs(total - 1.0) <= 1e-9, "soft label does not sum to 1");
        }
    }
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

SplitData generate_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    require(spec.dim >= 1, "dataset dimension must be positive");
    require(spec.num_classes >= 2, "dataset needs at least two classes");
    require(spec.n_train >= 1 && spec.n_test >= 1, "dataset splits must be non-empty");
    require(spec.noise >= 0.0, "noise must be non-negative");
    require(spec.kind == DatasetKind::blobs || spec.dim >= 2, "rings need at least two dimensions");

    SplitData out;
    Rng layout(derive_seed(seed, 0));
    if (spec.kind == DatasetKind::blobs) {
        out.centroids.resize(spec.num_classes);
        for (Vec& c : out.centroids) {
            c.resize(spec.dim);
            for (double& v : c) v = layout.uniform(0.2, 0.8);
        }
    }

    auto sample = [&](Rng& rng, std::size_t n) {
        LabeledSet set;
        set.num_classes = spec.num_classes;
        set.examples.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            Example e;
            e.y = i % spec.num_classes;
            e.x.resize(spec.dim);
            if (spec.kind == DatasetKind::blobs) {
                for (std::size_t j = 0; j < spec.dim; ++j)
                    e.x[j] = clamp01(out.centroids[e.y][j] + spec.noise * rng.normal());
            } else {
                const double radius = 0.08 + 0.34 * (static_cast<double>(e.y) + 0.5) /
                                                 static_cast<double>(spec.num_classes);
                const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
                const double r = radius + spec.noise * rng.normal();
                e.x[0] = clamp01(0.5 + r * std::cos(angle));
                e.x[1] = clamp01(0.5 + r * std::sin(angle));
                for (std::size_t j = 2; j < spec.dim; ++j) e.x[j] = rng.uniform01();
            }
            set.examples.push_back(std::move(e));
        }
        rng.shuffle(set.examples);
        return set;
    };

    Rng train_rng(derive_seed(seed, 1));
    Rng test_rng(derive_seed(seed, 2));
    out.train = sample(train_rng, spec.n_train);
    out.test = sample(test_rng, spec.n_test);
    return out;
}

std::string to_csv(const LabeledSet& data) {
    std::ostringstream os;
    const std::size_t d = data.dim();
    for (std::size_t j = 0; j < d; ++j) os << 'x' << j << ',';
    os << "y\n";
    for (const Example& e : data.examples) {
        for (double v : e.x) os << format_double(v) << ',';
        os << e.y << '\n';
    }
    return os.str();
}

LabeledSet from_csv(const std::string& text, std::size_t num_classes) {
    std::istringstream is(text);
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "CSV is empty");
    std::size_t columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    require(columns >= 2, "CSV header needs at least one feature and a label");
    LabeledSet set;
    set.num_classes = num_classes;
    std::size_t row = 1;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream cells(line);
        std::string cell;
        Example e;
        std::size_t col = 0;
        while (std::getline(cells, cell, ',')) {
            try {
                if (col + 1 < columns)
                    e.x.push_back(std::stod(cell));
                else
                    e.y = static_cast<std::size_t>(std::stoul(cell));
            } catch (const std::exception&) {
                throw ValidationError("CSV row " + std::to_string(row) + ": bad value '" + cell + "'");
            }
            ++col;
        }
        require(col == columns, "CSV row " + std::to_string(row) + ": expected " + std::to_string(columns) +
                                    " columns");
        set.examples.push_back(std::move(e));
    }
    set.validate();
    return set;
}

void write_csv(const std::string& path, const LabeledSet& data) { write_text(path, to_csv(data)); }

LabeledSet read_csv(const std::string& path, std::size_t num_classes) {
    return from_csv(read_text(path), num_classes);
}

double accuracy(const DenseNet& net, const LabeledSet& data) {
    require(!data.empty(), "accuracy of an empty set");
    std::size_t correct = 0;
    for (const Example& e : data.examples)
        if (predict(net, e.x) == e.y) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace eimtd
