#include "cadbench/membank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "binio.hpp"
#include "cadbench/distance.hpp"
#include "cadbench/error.hpp"
#include "cadbench/metrics.hpp"
#include "cadbench/parallel.hpp"
#include "cadbench/scoring.hpp"

namespace cadbench {

std::vector<std::size_t> greedy_coreset_indices(std::span<const float> pool, std::size_t dim, std::size_t target) {
  if (dim == 0 || pool.empty()) throw Error("empty pool");
  if (pool.size() % dim != 0) throw Error("pool size is not a multiple of dim");
  if (target == 0) throw Error("coreset target must be positive");
  const std::size_t count = pool.size() / dim;
  const std::size_t picks = std::min(target, count);
  auto point = [&](std::size_t p) { return pool.data() + p * dim; };

  std::vector<double> mean(dim, 0.0);
  for (std::size_t p = 0; p < count; ++p) {
    const float* v = point(p);
    for (std::size_t d = 0; d < dim; ++d) mean[d] += v[d];
  }
  for (double& m : mean) m /= static_cast<double>(count);

  std::size_t seed = 0;
  double best = -1.0;
  for (std::size_t p = 0; p < count; ++p) {
    const double dist = squared_l2(mean.data(), point(p), dim);
    if (dist > best) {
      best = dist;
      seed = p;
    }
  }

  std::vector<std::size_t> selected;
  selected.reserve(picks);
  std::vector<char> taken(count, 0);
  std::vector<double> nearest(count, 0.0);  // squared distance to the selected set
  selected.push_back(seed);
  taken[seed] = 1;
  for (std::size_t p = 0; p < count; ++p) {
    if (!taken[p]) nearest[p] = squared_l2(point(seed), point(p), dim);
  }

  while (selected.size() < picks) {
    std::size_t next = count;
    double farthest = -1.0;
    for (std::size_t p = 0; p < count; ++p) {
      if (!taken[p] && nearest[p] > farthest) {
        farthest = nearest[p];
        next = p;
      }
    }
    selected.push_back(next);
    taken[next] = 1;
    for (std::size_t p = 0; p < count; ++p) {
      if (taken[p]) continue;
      const double dist = squared_l2(point(next), point(p), dim);
      if (dist < nearest[p]) nearest[p] = dist;
    }
  }
  return selected;
}

LocationCoreset greedy_coreset(std::span<const float> pool, std::size_t dim, std::size_t target) {
  const std::vector<std::size_t> picks = greedy_coreset_indices(pool, dim, target);
  LocationCoreset out;
  out.dim = dim;
  out.vectors.reserve(picks.size() * dim);
  out.source_indices.reserve(picks.size());
  for (std::size_t p : picks) {
    out.vectors.insert(out.vectors.end(), pool.begin() + p * dim, pool.begin() + (p + 1) * dim);
    out.source_indices.push_back(static_cast<std::uint32_t>(p));
  }
  return out;
}

std::size_t coreset_size(std::size_t train_count, double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error("rho must be in (0,1]");
  if (train_count == 0) throw Error("empty training set");
  // Absorb representation error so that e.g. 70 * 0.1 floors to 7, not 6.
  const double scaled = static_cast<double>(train_count) * rho;
  const double floored = std::floor(scaled + 1e-9 * std::max(1.0, scaled));
  const std::size_t m = std::max(kMinCoresetSize, static_cast<std::size_t>(floored));
  return std::min(m, train_count);
}

TaskMemoryBank::TaskMemoryBank(std::string task_id, GridShape shape, std::size_t m, std::vector<float> coresets,
                               std::vector<float> prototype, double threshold, double rho, std::size_t train_count,
                               std::vector<std::uint32_t> source_indices)
    : task_id_(std::move(task_id)),
      shape_(shape),
      m_(m),
      coresets_(std::move(coresets)),
      prototype_(std::move(prototype)),
      threshold_(threshold),
      rho_(rho),
      train_count_(train_count),
      source_indices_(std::move(source_indices)) {
  if (shape_.cells() == 0 || shape_.dim == 0) throw Error("empty grid shape");
  if (m_ == 0) throw Error("coreset size must be positive");
  if (coresets_.size() != shape_.cells() * m_ * shape_.dim) throw Error("bank tensor size mismatch");
  if (prototype_.size() != shape_.dim) throw Error("prototype size mismatch");
  if (!source_indices_.empty() && source_indices_.size() != shape_.cells() * m_) {
    throw Error("provenance size mismatch");
  }
  if (task_id_.size() > 1024) throw Error("task_id too long");
}

LocationCoreset TaskMemoryBank::coreset(std::size_t row, std::size_t col) const {
  const std::size_t index = row * shape_.grid_w + col;
  const auto v = cell(index);
  LocationCoreset out;
  out.dim = shape_.dim;
  out.vectors.assign(v.begin(), v.end());
  if (!source_indices_.empty()) {
    out.source_indices.assign(source_indices_.begin() + index * m_, source_indices_.begin() + (index + 1) * m_);
  }
  return out;
}

bool TaskMemoryBank::same_content(const TaskMemoryBank& o) const {
  return task_id_ == o.task_id_ && shape_ == o.shape_ && m_ == o.m_ && coresets_ == o.coresets_ &&
         prototype_ == o.prototype_ && threshold_ == o.threshold_ && rho_ == o.rho_ &&
         train_count_ == o.train_count_;
}

TaskMemoryBank fit_task(const TaskDataset& train, double rho, std::size_t radius, const FitOptions& options) {
  if (train.features.empty()) throw Error("empty training set");
  for (const FeatureGrid& g : train.features) {
    if (g.label != Label::normal) throw Error("anomalous label in train");
  }
  train.validate();
  const GridShape shape = train.shape();
  const std::size_t count = train.size();
  const std::size_t dim = shape.dim;
  const std::size_t cells = shape.cells();
  const std::size_t m = coreset_size(count, rho);
  const std::size_t workers = options.workers ? options.workers : default_workers();

  std::vector<float> coresets(cells * m * dim);
  std::vector<std::uint32_t> provenance(cells * m);
  parallel_for(cells, workers, [&](std::size_t cell) {
    std::vector<float> pool(count * dim);
    for (std::size_t k = 0; k < count; ++k) {
      const auto p = train.features[k].patch(cell);
      std::copy(p.begin(), p.end(), pool.begin() + k * dim);
    }
    const std::vector<std::size_t> picks = greedy_coreset_indices(pool, dim, m);
    for (std::size_t s = 0; s < m; ++s) {
      std::copy_n(pool.begin() + picks[s] * dim, dim, coresets.begin() + (cell * m + s) * dim);
      provenance[cell * m + s] = static_cast<std::uint32_t>(picks[s]);
    }
  });

  std::vector<double> mean(dim, 0.0);
  for (const FeatureGrid& g : train.features) {
    for (std::size_t d = 0; d < dim; ++d) mean[d] += g.cls[d];
  }
  std::vector<float> prototype(dim);
  for (std::size_t d = 0; d < dim; ++d) prototype[d] = static_cast<float>(mean[d] / static_cast<double>(count));

  // Calibrate against the finished bank; the threshold does not affect scores.
  const std::string& task_id = options.task_id.empty() ? train.task_id : options.task_id;
  TaskMemoryBank draft(task_id, shape, m, std::move(coresets), std::move(prototype), 0.0, rho, count,
                       std::move(provenance));
  const std::vector<double> self_scores = score_images(train.features, draft, radius, workers);
  const double threshold = percentile(self_scores, kThresholdQuantile);

  auto cs = draft.coresets();
  auto pr = draft.prototype();
  auto si = draft.source_indices();
  return TaskMemoryBank(task_id, shape, m, {cs.begin(), cs.end()}, {pr.begin(), pr.end()}, threshold, rho,
                        count, {si.begin(), si.end()});
}

void BankRegistry::add(TaskMemoryBank bank) {
  if (banks_.empty()) {
    shape_ = bank.shape();
  } else if (bank.shape() != shape_) {
    throw Error("shape mismatch: registry " + to_string(shape_) + ", bank " + to_string(bank.shape()));
  }
  for (const TaskMemoryBank& b : banks_) {
    if (b.task_id() == bank.task_id()) throw Error("duplicate task_id " + bank.task_id());
  }
  banks_.push_back(std::move(bank));
}

std::size_t BankRegistry::index_of(const std::string& task_id) const {
  for (std::size_t i = 0; i < banks_.size(); ++i) {
    if (banks_[i].task_id() == task_id) return i;
  }
  throw Error("unknown task " + task_id);
}

namespace {

constexpr char kBankMagic[4] = {'C', 'A', 'D', 'B'};

}  // namespace

std::vector<std::uint8_t> encode_bank(const TaskMemoryBank& bank) {
  binio::Writer w;
  w.bytes(kBankMagic, 4);
  w.u32(kBankFormatVersion);
  w.u16(bank.shape().grid_h);
  w.u16(bank.shape().grid_w);
  w.u16(bank.shape().dim);
  w.u32(static_cast<std::uint32_t>(bank.m()));
  w.u32(static_cast<std::uint32_t>(bank.train_count()));
  w.f64(bank.rho());
  w.f64(bank.threshold());
  w.str16(bank.task_id());
  w.f32s(bank.prototype());
  w.f32s(bank.coresets());
  return w.take();
}

TaskMemoryBank decode_bank(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kBankMagic, 4) != 0) throw Error("bad magic");
  if (r.u32() != kBankFormatVersion) throw Error("version mismatch");
  GridShape shape;
  shape.grid_h = r.u16();
  shape.grid_w = r.u16();
  shape.dim = r.u16();
  const std::size_t m = r.u32();
  const std::size_t train_count = r.u32();
  const double rho = r.f64();
  const double threshold = r.f64();
  std::string task_id = r.str16();
  if (shape.cells() == 0 || shape.dim == 0 || m == 0) throw Error("empty bank");
  std::vector<float> prototype(shape.dim);
  r.f32s(prototype);
  r.need(shape.cells() * m * shape.dim * sizeof(float));
  std::vector<float> coresets(shape.cells() * m * shape.dim);
  r.f32s(coresets);
  if (!r.at_end()) throw Error("trailing bytes");
  return TaskMemoryBank(std::move(task_id), shape, m, std::move(coresets), std::move(prototype), threshold, rho,
                        train_count);
}

std::size_t save_bank(const TaskMemoryBank& bank, const std::filesystem::path& path) {
  const auto bytes = encode_bank(bank);
  binio::write_file(path, bytes);
  return bytes.size();
}

TaskMemoryBank load_bank(const std::filesystem::path& path) { return decode_bank(binio::read_file(path)); }

StorageReport storage_bytes(const TaskMemoryBank& bank) {
  StorageReport out;
  const std::size_t dim = bank.shape().dim;
  out.payload_bytes = bank.shape().cells() * bank.m() * dim * 4 + dim * 4;
  // Fixed header plus the task id; equals encode_bank(bank).size().
  out.serialized_bytes = 4 + 4 + 3 * 2 + 4 + 4 + 8 + 8 + 2 + bank.task_id().size() + out.payload_bytes;
  return out;
}

std::uint64_t bank_hash(const TaskMemoryBank& bank) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : encode_bank(bank)) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cadbench
