#include "fedsl/data.hpp"

#include "fedsl/errors.hpp"

#include <numeric>

namespace fedsl {

namespace {

Dataset sample_blobs(const Matrix& centers, Index samples, double sigma, Rng& rng) {
  const Index dim = centers.cols();
  const auto classes = static_cast<int>(centers.rows());
  Dataset d;
  d.features.resize(samples, dim);
  d.labels.resize(static_cast<std::size_t>(samples));
  for (Index i = 0; i < samples; ++i) {
    const int label = static_cast<int>(i) % classes;
    d.labels[static_cast<std::size_t>(i)] = label;
    for (Index j = 0; j < dim; ++j) {
      d.features(i, j) = centers(label, j) + sigma * rng.normal();
    }
  }
  return d;
}

}  // namespace

BlobData make_blobs(const BlobSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) throw InputError("make_blobs: need at least 2 classes");
  if (spec.dim < 1 || spec.train_samples < 1) {
    throw InputError("make_blobs: dim and train_samples must be positive");
  }
  Rng rng = derive_rng(seed, stream::kData);
  Matrix centers(spec.classes, spec.dim);
  for (Index r = 0; r < centers.rows(); ++r)
    for (Index c = 0; c < centers.cols(); ++c)
      centers(r, c) = rng.uniform(-spec.center_range, spec.center_range);

  BlobData data;
  data.train = sample_blobs(centers, spec.train_samples, spec.sigma, rng);
  data.eval = sample_blobs(centers, spec.eval_samples, spec.sigma, rng);
  return data;
}

std::vector<Dataset> iid_partition(const Dataset& data, int k, std::uint64_t seed) {
  if (k < 1) throw InputError("iid_partition: need at least one shard");
  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = derive_rng(seed, stream::kData, std::uint64_t{1});
  rng.shuffle(order);

  std::vector<Dataset> shards(static_cast<std::size_t>(k));
  const Index base = data.size() / k;
  const Index extra = data.size() % k;
  std::size_t pos = 0;
  for (int s = 0; s < k; ++s) {
    const Index count = base + (s < extra ? 1 : 0);
    Dataset& shard = shards[static_cast<std::size_t>(s)];
    shard.features.resize(count, data.features.cols());
    shard.labels.resize(static_cast<std::size_t>(count));
    for (Index i = 0; i < count; ++i, ++pos) {
      const Index src = order[pos];
      shard.features.row(i) = data.features.row(src);
      shard.labels[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(src)];
    }
  }
  return shards;
}

}  // namespace fedsl
