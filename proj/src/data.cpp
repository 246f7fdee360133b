#include "fairforest/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "fairforest/error.hpp"
#include "fairforest/serialize.hpp"

namespace fairforest {

OnlineStandardizer::OnlineStandardizer(std::size_t dim)
    : mean_(dim, 0.0), m2_(dim, 0.0) {}

std::vector<double> OnlineStandardizer::standardize(std::span<const double> x) {
  if (x.size() != mean_.size())
    fail(ErrorKind::kShape, "standardizer dimension mismatch");
  ++count_;
  const double n = static_cast<double>(count_);
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double delta = x[k] - mean_[k];
    mean_[k] += delta / n;
    m2_[k] += delta * (x[k] - mean_[k]);
    const double sd = std::sqrt(m2_[k] / n);
    out[k] = sd > 1e-12 ? (x[k] - mean_[k]) / sd : x[k] - mean_[k];
  }
  return out;
}

std::vector<double> OnlineStandardizer::variance() const {
  std::vector<double> v(m2_.size(), 0.0);
  if (count_ == 0) return v;
  for (std::size_t k = 0; k < v.size(); ++k)
    v[k] = m2_[k] / static_cast<double>(count_);
  return v;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  for (auto& c : cells) {
    const auto first = c.find_first_not_of(" \t");
    const auto last = c.find_last_not_of(" \t");
    c = first == std::string::npos ? "" : c.substr(first, last - first + 1);
  }
  return cells;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

}  // namespace

CsvStreamReader::CsvStreamReader(const std::string& path, DatasetSchema schema)
    : path_(path), schema_(std::move(schema)), in_(path) {
  if (!in_) fail(ErrorKind::kIo, "cannot open '" + path + "'");
  require(schema_.classes >= 1 && schema_.groups >= 1, ErrorKind::kConfig,
          "schema needs at least one class and one group");
  std::string line;
  if (!read_line(in_, line)) fail(ErrorKind::kData, path + ": empty file");
  line_ = 1;
  header_ = split_line(line);

  auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end())
      fail(ErrorKind::kData, path + ": header has no column '" + name + "'");
    return static_cast<std::size_t>(it - header_.begin());
  };
  label_column_ = column_of(schema_.label);
  group_column_ = column_of(schema_.group);
  require(label_column_ != group_column_, ErrorKind::kConfig,
          "label and group columns must differ");
  if (schema_.features.empty()) {
    for (std::size_t c = 0; c < header_.size(); ++c)
      if (c != label_column_ && c != group_column_) feature_columns_.push_back(c);
  } else {
    for (const auto& name : schema_.features) {
      const std::size_t c = column_of(name);
      if (c == label_column_ || c == group_column_)
        fail(ErrorKind::kConfig, "feature '" + name +
                                     "' is also the label or group column");
      feature_columns_.push_back(c);
    }
  }
  if (feature_columns_.empty())
    fail(ErrorKind::kData, path + ": no feature columns");
  for (std::size_t c : feature_columns_) names_.push_back(header_[c]);
  if (schema_.normalization == Normalization::kOnline)
    standardizer_.emplace(feature_columns_.size());
}

std::optional<Instance> CsvStreamReader::next() {
  std::string line;
  while (true) {
    if (!read_line(in_, line)) return std::nullopt;
    ++line_;
    if (!line.empty()) break;
  }
  const auto cells = split_line(line);
  auto where = [&](std::size_t column) {
    return path_ + ": row " + std::to_string(line_) + ", column '" +
           header_[column] + "'";
  };
  if (cells.size() != header_.size())
    fail(ErrorKind::kData, path_ + ": row " + std::to_string(line_) + " has " +
                               std::to_string(cells.size()) +
                               " cells, header has " +
                               std::to_string(header_.size()));

  auto parse_real = [&](std::size_t column) {
    const std::string& cell = cells[column];
    double v = 0.0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v))
      fail(ErrorKind::kData, where(column) + ": '" + cell + "' is not a number");
    return v;
  };
  auto parse_index = [&](std::size_t column, std::size_t limit) {
    const std::string& cell = cells[column];
    std::size_t v = 0;
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
    if (cell.empty() || ec != std::errc() || ptr != end)
      fail(ErrorKind::kData, where(column) + ": '" + cell +
                                 "' is not a nonnegative integer");
    if (v >= limit)
      fail(ErrorKind::kDomain, where(column) + ": value " + cell +
                                   " outside [0, " + std::to_string(limit) +
                                   ")");
    return v;
  };

  Instance inst;
  inst.x.reserve(feature_columns_.size());
  for (std::size_t c : feature_columns_) inst.x.push_back(parse_real(c));
  inst.y = parse_index(label_column_, schema_.classes);
  inst.a = parse_index(group_column_, schema_.groups);
  if (standardizer_) inst.x = standardizer_->standardize(inst.x);
  return inst;
}

void SyntheticConfig::validate() const {
  require(n >= 1, ErrorKind::kConfig, "synthetic stream length must be >= 1");
  require(dim >= 1, ErrorKind::kConfig, "synthetic dimension must be >= 1");
  require(bias >= 0.0 && bias <= 1.0, ErrorKind::kConfig,
          "bias must be in [0, 1]");
  require(noise >= 0.0 && noise <= 0.5, ErrorKind::kConfig,
          "label noise must be in [0, 0.5]");
  require(std::isfinite(separation) && std::isfinite(group_shift),
          ErrorKind::kConfig, "separation and group shift must be finite");
  require(bound >= 0.0 && std::isfinite(bound), ErrorKind::kConfig,
          "bound must be >= 0");
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

SyntheticStream::SyntheticStream(const SyntheticConfig& config)
    : config_(config), rng_(config.seed) {
  config_.validate();
  if (config_.bound > 0.0) {
    SyntheticConfig raw = config_;
    raw.bound = 0.0;
    SyntheticStream pass(raw);
    const double top = max_norm(pass);
    if (top > 0.0) scale_ = config_.bound / top;
  }
}

Instance SyntheticStream::draw() {
  Instance inst;
  inst.a = uniform01(rng_) < 0.5 ? 0 : 1;
  const bool agree = uniform01(rng_) < 0.5 * (1.0 + config_.bias);
  const std::size_t y0 = agree ? inst.a : 1 - inst.a;
  const bool flip = uniform01(rng_) < config_.noise;
  inst.y = flip ? 1 - y0 : y0;
  const std::size_t label_dims = (config_.dim + 1) / 2;
  inst.x.resize(config_.dim);
  for (std::size_t k = 0; k < config_.dim; ++k) {
    const double shift = k < label_dims
                             ? (y0 == 1 ? 0.5 : -0.5) * config_.separation
                             : (inst.a == 1 ? 0.5 : -0.5) * config_.group_shift;
    inst.x[k] = (normal_(rng_) + shift) * scale_;
  }
  return inst;
}

std::optional<Instance> SyntheticStream::next() {
  if (emitted_ >= config_.n) return std::nullopt;
  ++emitted_;
  return draw();
}

std::vector<Instance> generate_synthetic(const SyntheticConfig& config) {
  SyntheticStream stream(config);
  std::vector<Instance> out;
  out.reserve(config.n);
  while (auto inst = stream.next()) out.push_back(std::move(*inst));
  return out;
}

std::optional<Instance> VectorSource::next() {
  if (pos_ >= instances_.size()) return std::nullopt;
  return instances_[pos_++];
}

std::optional<Instance> ScaledSource::next() {
  auto inst = inner_->next();
  if (inst)
    for (double& v : inst->x) v *= factor_;
  return inst;
}

namespace {

double norm(std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  return std::sqrt(sq);
}

}  // namespace

double max_norm(std::span<const Instance> instances) {
  double top = 0.0;
  for (const auto& inst : instances) top = std::max(top, norm(inst.x));
  return top;
}

double max_norm(InstanceSource& source) {
  double top = 0.0;
  while (auto inst = source.next()) top = std::max(top, norm(inst->x));
  return top;
}

void rescale_to_bound(std::vector<Instance>& instances, double bound) {
  require(bound > 0.0, ErrorKind::kConfig, "bound must be positive");
  const double top = max_norm(instances);
  if (top == 0.0) return;
  const double factor = bound / top;
  for (auto& inst : instances)
    for (double& v : inst.x) v *= factor;
}

void write_csv(std::ostream& out, std::span<const Instance> instances) {
  const std::size_t d = instances.empty() ? 0 : instances.front().x.size();
  for (std::size_t k = 0; k < d; ++k) out << 'x' << k << ',';
  out << "y,a\n";
  for (const auto& inst : instances) {
    for (double v : inst.x) out << format_double(v) << ',';
    out << inst.y << ',' << inst.a << '\n';
  }
}

void write_csv(const std::string& path, std::span<const Instance> instances) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write '" + path + "'");
  write_csv(out, instances);
  if (!out) fail(ErrorKind::kIo, "write to '" + path + "' failed");
}

}  // namespace fairforest
