#pragma once

#include "fedsl/rng.hpp"
#include "fedsl/types.hpp"

#include <vector>

namespace fedsl {

struct Dataset {
  Matrix features;  // samples x dim
  Labels labels;

  Index size() const { return features.rows(); }
};

struct BlobSpec {
  int classes = 3;
  Index dim = 16;
  Index train_samples = 200;
  Index eval_samples = 100;
  double sigma = 1.0;        // within-class standard deviation
  double center_range = 3.0; // class centers drawn uniform in [-range, range]^dim
};

struct BlobData {
  Dataset train;
  Dataset eval;
};

// Deterministic Gaussian-blob classification task; labels cycle round-robin
// so every class is populated.
BlobData make_blobs(const BlobSpec& spec, std::uint64_t seed);

// Even IID split; the first (size mod k) shards get one extra sample.
std::vector<Dataset> iid_partition(const Dataset& data, int k, std::uint64_t seed);

}  // namespace fedsl
