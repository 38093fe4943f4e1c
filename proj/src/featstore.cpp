#include "cadbench/featstore.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "binio.hpp"
#include "cadbench/error.hpp"

namespace cadbench {

namespace binio {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error("read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace binio

namespace {

constexpr char kMagic[4] = {'C', 'A', 'D', 'F'};

}  // namespace

std::string to_string(const GridShape& shape) {
  return std::to_string(shape.grid_h) + "x" + std::to_string(shape.grid_w) + "x" + std::to_string(shape.dim);
}

void FeatureGrid::validate() const {
  if (shape.grid_h == 0 || shape.grid_w == 0 || shape.dim == 0) throw Error("empty grid shape");
  if (patches.size() != shape.patch_floats() || cls.size() != shape.dim) throw Error("shape mismatch");
  for (float f : patches) {
    if (!std::isfinite(f)) throw Error("non-finite float");
  }
  for (float f : cls) {
    if (!std::isfinite(f)) throw Error("non-finite float");
  }
  if (image_id.size() > 0xFFFF) throw Error("image_id too long");
}

void TaskDataset::validate() const {
  if (features.empty()) throw Error("empty dataset");
  const GridShape s = features.front().shape;
  for (const FeatureGrid& g : features) {
    if (g.shape != s) throw Error("shape mismatch");
    g.validate();
    if (split == Split::train && g.label != Label::normal) throw Error("anomalous label in train split");
  }
}

std::size_t encoded_size(const TaskDataset& dataset) {
  std::size_t total = kFeatureHeaderBytes;
  for (const FeatureGrid& g : dataset.features) {
    total += 1 + 2 + g.image_id.size() + 4 * (g.cls.size() + g.patches.size());
  }
  return total;
}

std::vector<std::uint8_t> encode_features(const TaskDataset& dataset) {
  dataset.validate();
  const GridShape s = dataset.shape();
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kFeatureFormatVersion);
  w.u8(static_cast<std::uint8_t>(dataset.split));
  w.u16(s.grid_h);
  w.u16(s.grid_w);
  w.u16(s.dim);
  w.u32(static_cast<std::uint32_t>(dataset.features.size()));
  for (const FeatureGrid& g : dataset.features) {
    w.u8(static_cast<std::uint8_t>(g.label));
    w.str16(g.image_id);
    w.f32s(g.cls);
    w.f32s(g.patches);
  }
  return w.take();
}

TaskDataset decode_features(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw Error("bad magic");
  if (r.u32() != kFeatureFormatVersion) throw Error("version mismatch");
  TaskDataset out;
  const std::uint8_t split = r.u8();
  if (split > 1) throw Error("bad split");
  out.split = static_cast<Split>(split);
  GridShape s;
  s.grid_h = r.u16();
  s.grid_w = r.u16();
  s.dim = r.u16();
  if (s.grid_h == 0 || s.grid_w == 0 || s.dim == 0) throw Error("empty grid shape");
  const std::uint32_t count = r.u32();
  // Every record is at least this large; bounds the reserve below.
  const std::size_t min_record = 3 + 4 * (s.dim + s.patch_floats());
  if (std::size_t{count} * min_record > bytes.size()) throw Error("truncated");
  out.features.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    FeatureGrid g;
    g.shape = s;
    const std::uint8_t label = r.u8();
    if (label > 1) throw Error("bad label");
    g.label = static_cast<Label>(label);
    g.image_id = r.str16();
    g.cls.resize(s.dim);
    r.f32s(g.cls);
    g.patches.resize(s.patch_floats());
    r.f32s(g.patches);
    out.features.push_back(std::move(g));
  }
  if (!r.at_end()) throw Error("trailing bytes");
  return out;
}

std::size_t write_feature_file(const TaskDataset& dataset, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = encode_features(dataset);
  binio::write_file(path, bytes);
  return bytes.size();
}

TaskDataset read_feature_file(const std::filesystem::path& path) {
  TaskDataset out = decode_features(binio::read_file(path));
  out.task_id = path.stem().string();
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad manifest: ") + e.what());
  }
  if (!doc.contains("tasks") || !doc["tasks"].is_array()) throw Error("bad manifest: missing tasks array");
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> seen;
  for (const auto& t : doc["tasks"]) {
    TaskEntry e;
    try {
      e.task_id = t.at("task_id").get<std::string>();
      e.train_file = t.at("train_file").get<std::string>();
      e.test_file = t.at("test_file").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(std::string("bad manifest: ") + ex.what());
    }
    if (!seen.insert(e.task_id).second) throw Error("bad manifest: duplicate task_id " + e.task_id);
    m.tasks.push_back(std::move(e));
  }
  if (m.tasks.empty()) throw Error("bad manifest: no tasks");
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["tasks"] = nlohmann::json::array();
  for (const TaskEntry& e : manifest.tasks) {
    doc["tasks"].push_back({{"task_id", e.task_id},
                            {"train_file", e.train_file.generic_string()},
                            {"test_file", e.test_file.generic_string()}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
}

}  // namespace cadbench
