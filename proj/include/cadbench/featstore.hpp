#pragma once

// Feature tensors, the CADF binary feature-file format, and task manifests.
//
// CADF layout (all integers and floats little-endian, floats IEEE binary32):
//
//   magic        "CADF"            4 B
//   version      u32               4 B   (kFeatureFormatVersion)
//   split        u8                1 B   (0 = train, 1 = test)
//   grid_h       u16               2 B
//   grid_w       u16               2 B
//   dim          u16               2 B
//   count        u32               4 B
//   count records:
//     label      u8                      (0 = normal, 1 = anomalous)
//     image_id   u16 length + UTF-8 bytes
//     cls        dim x f32
//     patches    grid_h * grid_w * dim x f32, row-major (row, col, channel)
//
// The file must end exactly after the last record.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cadbench {

inline constexpr std::uint32_t kFeatureFormatVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 19;

enum class Label : std::uint8_t { normal = 0, anomalous = 1 };
enum class Split : std::uint8_t { train = 0, test = 1 };

struct GridShape {
  std::uint16_t grid_h = 0;
  std::uint16_t grid_w = 0;
  std::uint16_t dim = 0;

  std::size_t cells() const { return std::size_t{grid_h} * grid_w; }
  std::size_t patch_floats() const { return cells() * dim; }
  bool operator==(const GridShape&) const = default;
};

std::string to_string(const GridShape& shape);

// One image's patch-token tensor plus its CLS token.
struct FeatureGrid {
  GridShape shape;
  std::vector<float> patches;  // [grid_h][grid_w][dim]
  std::vector<float> cls;      // [dim]
  Label label = Label::normal;
  std::string image_id;

  std::span<const float> patch(std::size_t row, std::size_t col) const {
    return {patches.data() + (row * shape.grid_w + col) * shape.dim, shape.dim};
  }
  std::span<const float> patch(std::size_t cell) const {
    return {patches.data() + cell * shape.dim, shape.dim};
  }

  // Throws if tensor sizes disagree with shape or any entry is non-finite.
  void validate() const;

  bool operator==(const FeatureGrid&) const = default;
};

struct TaskDataset {
  std::string task_id;
  Split split = Split::train;
  std::vector<FeatureGrid> features;
  std::filesystem::path source_manifest;

  GridShape shape() const { return features.empty() ? GridShape{} : features.front().shape; }
  std::size_t size() const { return features.size(); }

  // Non-empty, homogeneous shapes, valid grids; train splits must be all normal.
  void validate() const;
};

// Size in bytes of the encoded file for this dataset.
std::size_t encoded_size(const TaskDataset& dataset);

// Writes the CADF file; returns the number of bytes written.
std::size_t write_feature_file(const TaskDataset& dataset, const std::filesystem::path& path);

// Reads a CADF file. task_id is set to the file stem.
TaskDataset read_feature_file(const std::filesystem::path& path);

// In-memory codec, used by the file functions above.
std::vector<std::uint8_t> encode_features(const TaskDataset& dataset);
TaskDataset decode_features(std::span<const std::uint8_t> bytes);

// Ordered task list. Order in the document is the continual training order.
struct TaskEntry {
  std::string task_id;
  std::filesystem::path train_file;
  std::filesystem::path test_file;
};

struct Manifest {
  std::vector<TaskEntry> tasks;
  // Directory relative paths are resolved against (the manifest's directory).
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
};

// JSON: {"tasks": [{"task_id": ..., "train_file": ..., "test_file": ...}, ...]}
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

}  // namespace cadbench
