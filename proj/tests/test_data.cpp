#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fairforest/data.hpp"
#include "fairforest/error.hpp"
#include "helpers.hpp"

using namespace fairforest;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("fairforest_data_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }

  std::string write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::vector<Instance> read_all(const std::string& path, DatasetSchema schema = {}) {
  CsvStreamReader reader(path, std::move(schema));
  std::vector<Instance> out;
  while (auto inst = reader.next()) out.push_back(std::move(*inst));
  return out;
}

Error error_from(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e;
  }
  ADD_FAILURE() << "no error thrown";
  return Error(ErrorKind::kIo, "");
}

}  // namespace

TEST(Csv, EchoesKnownRows) {
  TempDir dir;
  const auto path = dir.write("two.csv", "f1,a,f2,y\r\n1.5, 0 ,-2,1\r\n\n3e-2,1,4,0\n");
  CsvStreamReader reader(path, {});
  EXPECT_EQ(reader.dim(), 2u);
  EXPECT_EQ(reader.feature_names(), (std::vector<std::string>{"f1", "f2"}));
  const auto rows = read_all(path);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].x, (std::vector<double>{1.5, -2.0}));
  EXPECT_EQ(rows[0].y, 1u);
  EXPECT_EQ(rows[0].a, 0u);
  EXPECT_EQ(rows[1].x, (std::vector<double>{0.03, 4.0}));
  EXPECT_EQ(rows[1].y, 0u);
  EXPECT_EQ(rows[1].a, 1u);
}

TEST(Csv, SelectedFeatureSubset) {
  TempDir dir;
  const auto path = dir.write("sub.csv", "p,q,r,y,a\n1,2,3,0,1\n");
  DatasetSchema schema;
  schema.features = {"r", "p"};
  const auto rows = read_all(path, schema);
  EXPECT_EQ(rows[0].x, (std::vector<double>{3.0, 1.0}));
}

TEST(Csv, BadCellNamesRowAndColumn) {
  TempDir dir;
  const auto path = dir.write("bad.csv", "x0,x1,y,a\n1,2,0,0\n1,oops,0,1\n");
  CsvStreamReader reader(path, {});
  ASSERT_TRUE(reader.next().has_value());
  const Error e = error_from([&] { reader.next(); });
  EXPECT_EQ(e.kind(), ErrorKind::kData);
  const std::string what = e.what();
  EXPECT_NE(what.find("row 3"), std::string::npos) << what;
  EXPECT_NE(what.find("x1"), std::string::npos) << what;
}

TEST(Csv, OutOfRangeLabelAndGroupAreDomainErrors) {
  TempDir dir;
  const auto label = dir.write("label.csv", "x0,y,a\n1,2,0\n");
  EXPECT_EQ(error_from([&] { read_all(label); }).kind(), ErrorKind::kDomain);
  const auto group = dir.write("group.csv", "x0,y,a\n1,0,3\n");
  EXPECT_EQ(error_from([&] { read_all(group); }).kind(), ErrorKind::kDomain);
  DatasetSchema wide;
  wide.groups = 4;
  EXPECT_EQ(read_all(group, wide).at(0).a, 3u);
}

TEST(Csv, StructuralErrors) {
  TempDir dir;
  EXPECT_EQ(error_from([&] { read_all(dir.file("missing.csv")); }).kind(), ErrorKind::kIo);
  const auto ragged = dir.write("ragged.csv", "x0,y,a\n1,0\n");
  EXPECT_EQ(error_from([&] { read_all(ragged); }).kind(), ErrorKind::kData);
  const auto no_label = dir.write("nolabel.csv", "x0,a\n1,0\n");
  EXPECT_EQ(error_from([&] { read_all(no_label); }).kind(), ErrorKind::kData);
  const auto inf = dir.write("inf.csv", "x0,y,a\ninf,0,0\n");
  EXPECT_EQ(error_from([&] { read_all(inf); }).kind(), ErrorKind::kData);
}

TEST(Csv, WriteThenReadIsExact) {
  TempDir dir;
  SyntheticConfig sc;
  sc.n = 50;
  sc.dim = 3;
  const auto data = generate_synthetic(sc);
  write_csv(dir.file("s.csv"), data);
  const auto back = read_all(dir.file("s.csv"));
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].x, data[i].x);
    EXPECT_EQ(back[i].y, data[i].y);
    EXPECT_EQ(back[i].a, data[i].a);
  }
}

TEST(Standardizer, MatchesTwoPassStatistics) {
  TempDir dir;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<Instance> raw;
  for (int i = 0; i < 1000; ++i)
    raw.push_back({{3.0 + 2.0 * normal(rng), -5.0 + 0.5 * normal(rng)}, 0, std::size_t(i % 2)});
  write_csv(dir.file("n.csv"), raw);

  double mean[2] = {0, 0}, var[2] = {0, 0};
  for (const auto& r : raw)
    for (int k = 0; k < 2; ++k) mean[k] += r.x[k] / 1000.0;
  for (const auto& r : raw)
    for (int k = 0; k < 2; ++k) var[k] += (r.x[k] - mean[k]) * (r.x[k] - mean[k]) / 1000.0;

  OnlineStandardizer st(2);
  for (const auto& r : raw) st.standardize(r.x);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(st.mean()[k], mean[k], 1e-9);
    EXPECT_NEAR(st.variance()[k], var[k], 1e-9);
  }

  DatasetSchema schema;
  schema.normalization = Normalization::kOnline;
  const auto z = read_all(dir.file("n.csv"), schema);
  double zm[2] = {0, 0}, zv[2] = {0, 0};
  const std::size_t tail = 500;
  for (std::size_t i = z.size() - tail; i < z.size(); ++i)
    for (int k = 0; k < 2; ++k) zm[k] += z[i].x[k] / tail;
  for (std::size_t i = z.size() - tail; i < z.size(); ++i)
    for (int k = 0; k < 2; ++k) zv[k] += (z[i].x[k] - zm[k]) * (z[i].x[k] - zm[k]) / tail;
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(zm[k], 0.0, 0.1);
    EXPECT_NEAR(zv[k], 1.0, 0.1);
  }
  // The last row is scaled with the full-data statistics.
  for (int k = 0; k < 2; ++k)
    EXPECT_NEAR(z.back().x[k], (raw.back().x[k] - mean[k]) / std::sqrt(var[k]), 1e-9);
}

TEST(Standardizer, PrefixIsUnaffectedByLaterRows) {
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 100; ++i) rows.push_back(testutil::random_vector(rng, 3, -4, 4));
  OnlineStandardizer full(3), prefix(3);
  std::vector<std::vector<double>> out_full, out_prefix;
  for (const auto& r : rows) out_full.push_back(full.standardize(r));
  for (int i = 0; i < 40; ++i) out_prefix.push_back(prefix.standardize(rows[i]));
  for (int i = 0; i < 40; ++i) EXPECT_EQ(out_full[i], out_prefix[i]);
}

TEST(Standardizer, ConstantFeatureIsCentredOnly) {
  OnlineStandardizer st(1);
  for (int i = 0; i < 5; ++i) {
    const auto z = st.standardize(std::vector<double>{4.0});
    EXPECT_EQ(z[0], 0.0);
  }
}

TEST(Synthetic, NoBiasIsIndependent) {
  SyntheticConfig sc;
  sc.bias = 0.0;
  const auto data = generate_synthetic(sc);
  double my = 0, ma = 0;
  for (const auto& d : data) {
    my += d.y;
    ma += d.a;
  }
  my /= data.size();
  ma /= data.size();
  double cov = 0, vy = 0, va = 0;
  for (const auto& d : data) {
    cov += (d.y - my) * (d.a - ma);
    vy += (d.y - my) * (d.y - my);
    va += (d.a - ma) * (d.a - ma);
  }
  EXPECT_NEAR(cov / std::sqrt(vy * va), 0.0, 0.05);
}

TEST(Synthetic, FullBiasMeansLabelEqualsGroup) {
  SyntheticConfig sc;
  sc.bias = 1.0;
  for (const auto& d : generate_synthetic(sc)) EXPECT_EQ(d.y, d.a);
}

TEST(Synthetic, DefaultTally) {
  SyntheticConfig sc;
  sc.bias = 0.6;
  sc.n = 5000;
  sc.seed = 7;
  const auto data = generate_synthetic(sc);
  ASSERT_EQ(data.size(), 5000u);
  std::size_t same = 0;
  for (const auto& d : data) same += d.y == d.a;
  EXPECT_NEAR(same / 5000.0, 0.8, 0.02);
}

TEST(Synthetic, NoiseFlipsLabels) {
  SyntheticConfig clean, noisy;
  noisy.noise = 0.1;
  const auto a = generate_synthetic(clean);
  const auto b = generate_synthetic(noisy);
  std::size_t flips = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    flips += a[i].y != b[i].y;
  }
  EXPECT_NEAR(flips / double(a.size()), 0.1, 0.015);
}

TEST(Synthetic, DeterministicBytes) {
  SyntheticConfig sc;
  sc.n = 500;
  std::ostringstream a, b;
  write_csv(a, generate_synthetic(sc));
  write_csv(b, generate_synthetic(sc));
  EXPECT_EQ(a.str(), b.str());
  sc.seed = 8;
  std::ostringstream c;
  write_csv(c, generate_synthetic(sc));
  EXPECT_NE(a.str(), c.str());
}

TEST(Synthetic, BoundRescalesToMaxNorm) {
  SyntheticConfig sc;
  sc.n = 300;
  sc.bound = 1.0;
  const auto data = generate_synthetic(sc);
  EXPECT_NEAR(max_norm(data), 1.0, 1e-12);

  sc.bound = 0.0;
  auto raw = generate_synthetic(sc);
  rescale_to_bound(raw, 1.0);
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t k = 0; k < raw[i].x.size(); ++k)
      EXPECT_NEAR(raw[i].x[k], data[i].x[k], 1e-12);
}

TEST(Synthetic, InvalidConfig) {
  SyntheticConfig sc;
  sc.bias = 1.5;
  EXPECT_EQ(error_from([&] { generate_synthetic(sc); }).kind(), ErrorKind::kConfig);
  sc.bias = 0.5;
  sc.n = 0;
  EXPECT_EQ(error_from([&] { generate_synthetic(sc); }).kind(), ErrorKind::kConfig);
}
