#pragma once

// Instance streams: CSV files, a seeded synthetic biased stream, and small
// adapters (in-memory vectors, rescaling, online standardization).

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fairforest/instance.hpp"

namespace fairforest {

enum class Normalization { kNone, kOnline };

struct DatasetSchema {
  /// Empty means every column other than label and group, in file order.
  std::vector<std::string> features;
  std::string label = "y";
  std::string group = "a";
  std::size_t classes = 2;  // labels must lie in [0, classes)
  std::size_t groups = 2;   // groups must lie in [0, groups)
  Normalization normalization = Normalization::kNone;
};

/// Welford running mean and variance per feature. standardize() folds x in
/// first, so row t is scaled with statistics of rows 0..t.
class OnlineStandardizer {
 public:
  explicit OnlineStandardizer(std::size_t dim);

  std::vector<double> standardize(std::span<const double> x);

  std::size_t count() const { return count_; }
  const std::vector<double>& mean() const { return mean_; }
  std::vector<double> variance() const;

 private:
  std::size_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// Reads one row at a time. Format: UTF-8, comma separated, header first,
/// no quoting, no missing values.
class CsvStreamReader : public InstanceSource {
 public:
  CsvStreamReader(const std::string& path, DatasetSchema schema);

  std::optional<Instance> next() override;

  std::size_t dim() const { return feature_columns_.size(); }
  const std::vector<std::string>& feature_names() const { return names_; }
  /// 1-based line number of the last row read (header is line 1).
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  DatasetSchema schema_;
  std::ifstream in_;
  std::vector<std::string> header_;
  std::vector<std::size_t> feature_columns_;
  std::vector<std::string> names_;
  std::size_t label_column_ = 0;
  std::size_t group_column_ = 0;
  std::size_t line_ = 0;
  std::optional<OnlineStandardizer> standardizer_;
};

struct SyntheticConfig {
  std::size_t n = 5000;
  std::size_t dim = 10;
  double bias = 0.6;          // beta: P(y = a) = (1 + beta) / 2 before noise
  double separation = 0.4;    // mu_sep: label shift on the first ceil(d/2) features
  double group_shift = 2.0;   // group shift on the remaining features
  double noise = 0.0;         // eta: label flip probability
  std::uint64_t seed = 7;
  double bound = 0.0;         // > 0: rescale so max ||x|| equals bound

  void validate() const;
};

/// a ~ Bernoulli(0.5); y0 = a w.p. (1 + beta) / 2, else 1 - a; features are
/// N(0, 1) plus +-separation/2 (sign of y0) on the first ceil(d/2)
/// coordinates and +-group_shift/2 (sign of a) on the rest; y = y0 flipped
/// w.p. eta. With bound > 0 the stream is generated twice, once to find the
/// max norm.
class SyntheticStream : public InstanceSource {
 public:
  explicit SyntheticStream(const SyntheticConfig& config);

  std::optional<Instance> next() override;

  double scale() const { return scale_; }

 private:
  Instance draw();

  SyntheticConfig config_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  std::size_t emitted_ = 0;
  double scale_ = 1.0;
};

std::vector<Instance> generate_synthetic(const SyntheticConfig& config);

class VectorSource : public InstanceSource {
 public:
  explicit VectorSource(std::vector<Instance> instances)
      : instances_(std::move(instances)) {}
  std::optional<Instance> next() override;

 private:
  std::vector<Instance> instances_;
  std::size_t pos_ = 0;
};

/// Multiplies every feature vector by `factor`.
class ScaledSource : public InstanceSource {
 public:
  ScaledSource(std::unique_ptr<InstanceSource> inner, double factor)
      : inner_(std::move(inner)), factor_(factor) {}
  std::optional<Instance> next() override;

 private:
  std::unique_ptr<InstanceSource> inner_;
  double factor_;
};

double max_norm(std::span<const Instance> instances);
/// Consumes the source.
double max_norm(InstanceSource& source);
/// Divides every x by max_norm / bound so the largest norm equals bound.
void rescale_to_bound(std::vector<Instance>& instances, double bound);

/// Header x0..x{d-1},y,a then one row per instance.
void write_csv(std::ostream& out, std::span<const Instance> instances);
void write_csv(const std::string& path, std::span<const Instance> instances);

}  // namespace fairforest
