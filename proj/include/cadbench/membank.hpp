#pragma once

// Spatially-indexed memory bank: one greedy k-center coreset per patch-grid
// cell, a CLS prototype and a calibrated image-score threshold per task.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cadbench/featstore.hpp"

namespace cadbench {

inline constexpr std::uint32_t kBankFormatVersion = 1;
inline constexpr std::size_t kMinCoresetSize = 20;
inline constexpr double kThresholdQuantile = 0.975;

// Indices into `pool` (row-major [P][dim]) in selection order. The first pick
// is the point farthest from the pool mean; each later pick maximises the
// distance to its nearest already-selected point. Ties go to the lowest index.
// Returns min(target, P) indices.
std::vector<std::size_t> greedy_coreset_indices(std::span<const float> pool, std::size_t dim, std::size_t target);

struct LocationCoreset {
  std::size_t dim = 0;
  std::vector<float> vectors;                 // [size][dim]
  std::vector<std::uint32_t> source_indices;  // pool index of each vector

  std::size_t size() const { return dim == 0 ? 0 : vectors.size() / dim; }
};

LocationCoreset greedy_coreset(std::span<const float> pool, std::size_t dim, std::size_t target);

// max(kMinCoresetSize, floor(D * rho)), capped at D.
std::size_t coreset_size(std::size_t train_count, double rho);

class TaskMemoryBank {
 public:
  TaskMemoryBank(std::string task_id, GridShape shape, std::size_t m, std::vector<float> coresets,
                 std::vector<float> prototype, double threshold, double rho, std::size_t train_count,
                 std::vector<std::uint32_t> source_indices = {});

  const std::string& task_id() const { return task_id_; }
  const GridShape& shape() const { return shape_; }
  std::size_t m() const { return m_; }
  double threshold() const { return threshold_; }
  double rho() const { return rho_; }
  std::size_t train_count() const { return train_count_; }
  std::span<const float> prototype() const { return prototype_; }

  // All M vectors of one cell, [M][dim].
  std::span<const float> cell(std::size_t index) const {
    return {coresets_.data() + index * m_ * shape_.dim, m_ * shape_.dim};
  }
  std::span<const float> cell(std::size_t row, std::size_t col) const { return cell(row * shape_.grid_w + col); }
  std::span<const float> coresets() const { return coresets_; }

  // Training-image index of every stored vector, [cells][M]. Fit-time
  // provenance only: empty for banks read back from disk.
  std::span<const std::uint32_t> source_indices() const { return source_indices_; }
  LocationCoreset coreset(std::size_t row, std::size_t col) const;

  // Tensor and metadata equality; provenance is not compared.
  bool same_content(const TaskMemoryBank& other) const;

 private:
  std::string task_id_;
  GridShape shape_;
  std::size_t m_;
  std::vector<float> coresets_;
  std::vector<float> prototype_;
  double threshold_;
  double rho_;
  std::size_t train_count_;
  std::vector<std::uint32_t> source_indices_;
};

struct FitOptions {
  std::size_t workers = 0;  // 0 = default_workers()
  std::string task_id;      // overrides train.task_id when non-empty
};

// Builds a task bank from normal training grids: per-cell coresets of size
// coreset_size(D, rho), CLS mean prototype, and the 97.5th percentile of the
// training images' own scores against the new bank at `radius`.
TaskMemoryBank fit_task(const TaskDataset& train, double rho, std::size_t radius, const FitOptions& options = {});

// Banks for all tasks seen so far, in training order.
class BankRegistry {
 public:
  void add(TaskMemoryBank bank);
  std::size_t size() const { return banks_.size(); }
  bool empty() const { return banks_.empty(); }
  const TaskMemoryBank& operator[](std::size_t i) const { return banks_.at(i); }
  const std::vector<TaskMemoryBank>& banks() const { return banks_; }
  const GridShape& shape() const { return shape_; }
  // Index of task_id; throws if absent.
  std::size_t index_of(const std::string& task_id) const;

 private:
  std::vector<TaskMemoryBank> banks_;
  GridShape shape_;
};

struct StorageReport {
  std::size_t payload_bytes = 0;     // cells * M * dim * 4 + dim * 4
  std::size_t serialized_bytes = 0;  // size of the CADB encoding
};

StorageReport storage_bytes(const TaskMemoryBank& bank);

// CADB layout (little-endian):
//   magic "CADB" 4 | version u32 | grid_h u16 | grid_w u16 | dim u16 | M u32 |
//   train_count u32 | rho f64 | threshold f64 | task_id u16 len + bytes |
//   prototype dim x f32 | coresets cells x M x dim f32 (row-major cells)
std::vector<std::uint8_t> encode_bank(const TaskMemoryBank& bank);
TaskMemoryBank decode_bank(std::span<const std::uint8_t> bytes);
std::size_t save_bank(const TaskMemoryBank& bank, const std::filesystem::path& path);
TaskMemoryBank load_bank(const std::filesystem::path& path);

// FNV-1a 64 over encode_bank(bank).
std::uint64_t bank_hash(const TaskMemoryBank& bank);

}  // namespace cadbench
