#ifndef CELU_DATAIO_HPP
#define CELU_DATAIO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "celu/matrix.hpp"

namespace celu {

// Vertically partitioned dataset: row k of features_a and features_b
// describe the same instance; labels belong to party B.
struct AlignedDataset {
  Matrix features_a;        // n x d_a
  Matrix features_b;        // n x d_b
  std::vector<int> labels;  // n entries in {0,1}

  std::size_t size() const { return labels.size(); }
  std::size_t dim_a() const { return features_a.cols(); }
  std::size_t dim_b() const { return features_b.cols(); }
};

// Standard-normal features with label = 1 iff
//   <v, x> + 0.5 * sin(<u, x>) + noise > 0,
// where x = [x_a; x_b], v and u are fixed seeded directions, and the noise
// is Gaussian with sd 0.1. Separable but nonlinear, so both parties'
// features matter. Deterministic in seed.
AlignedDataset generate_synthetic(std::size_t n, std::size_t d_a,
                                  std::size_t d_b, std::uint64_t seed);

// Headered comma-separated file, decimal-point reals, no quoting. Rows keep
// file order. Labels must be 0 or 1.
AlignedDataset load_csv(const std::string& path, const std::string& label_col,
                        const std::vector<std::string>& party_a_cols,
                        const std::vector<std::string>& party_b_cols);

// Shared-seed mini-batch plan. Epoch e shuffles 0..n-1 with a permutation
// seeded by (seed, e); step s within an epoch is the slice [sB, (s+1)B).
// The trailing remainder of each epoch is dropped, so every batch holds
// exactly B indices. Two plans built from equal (seed, n, B) produce
// identical sequences -- this is what keeps the two parties aligned.
class BatchPlan {
 public:
  BatchPlan(std::uint64_t seed, std::size_t n, std::size_t batch_size,
            std::size_t epochs);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return steps_per_epoch_ * epochs_; }
  std::size_t batch_size() const { return batch_size_; }

  std::vector<std::size_t> batch_indices(std::size_t step) const;

 private:
  std::uint64_t seed_;
  std::size_t n_;
  std::size_t batch_size_;
  std::size_t epochs_;
  std::size_t steps_per_epoch_;
  // Lazily built permutation for the epoch most recently asked for. Plans
  // are per-party value objects, not shared across workers.
  mutable std::size_t cached_epoch_;
  mutable std::vector<std::size_t> order_;
};

std::vector<int> take_labels(const std::vector<int>& labels,
                             const std::vector<std::size_t>& indices);

}  // namespace celu

#endif  // CELU_DATAIO_HPP
