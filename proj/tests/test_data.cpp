#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "fact/dataset.hpp"
#include "fact/errors.hpp"
#include "test_util.hpp"

using namespace fact;

TEST_CASE("make_domain is deterministic and balanced") {
  DomainSpec spec;
  spec.name = "d";
  spec.base = circular_base_task(3, 0.35);
  spec.n_samples = 100;
  spec.seed = 42;

  Dataset a = make_domain(spec);
  Dataset b = make_domain(spec);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  std::map<int, int> counts;
  for (int y : a.labels) counts[y]++;
  CHECK(counts.size() == 3);
  // 100 over 3 classes: 34, 33, 33.
  CHECK(counts[0] == 34);
  CHECK(counts[1] == 33);
  CHECK(counts[2] == 33);
}

TEST_CASE("rotation by 2 pi is the identity within 1e-9") {
  DomainSpec id;
  id.name = "id";
  id.base = circular_base_task(3, 0.35);
  id.n_samples = 60;
  id.seed = 7;
  DomainSpec turned = id;
  turned.transform.rotation = 2.0 * std::numbers::pi;

  Dataset a = make_domain(id);
  Dataset b = make_domain(turned);
  REQUIRE(a.size() == b.size());
  CHECK(a.labels == b.labels);
  for (size_t i = 0; i < a.features.size(); ++i) {
    CHECK(std::abs(a.features[i] - b.features[i]) < 1e-9);
  }
}

TEST_CASE("rotation by pi reflects every sample about the translation center") {
  DomainSpec id;
  id.name = "id";
  id.base = circular_base_task(3, 0.35);
  id.n_samples = 50;
  id.seed = 9;
  DomainSpec mirrored = id;
  mirrored.transform.rotation = std::numbers::pi;
  mirrored.transform.translation = {0.8, -0.4};

  Dataset a = make_domain(id);
  Dataset b = make_domain(mirrored);
  // Independent affine oracle, applied per sample: y = -x + t.
  for (size_t i = 0; i < a.size(); ++i) {
    for (size_t j = 0; j < 2; ++j) {
      double expected = -a.features.at(i, j) + mirrored.transform.translation[j];
      CHECK(b.features.at(i, j) == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("label marginals are transform-invariant") {
  DomainSpec s1;
  s1.name = "x";
  s1.base = circular_base_task(4, 0.3);
  s1.n_samples = 101;
  s1.seed = 11;
  DomainSpec s2 = s1;
  s2.transform.rotation = 1.0;
  s2.transform.scale = {2.0, 0.5};
  s2.transform.translation = {5.0, -3.0};

  std::map<int, int> c1, c2;
  for (int y : make_domain(s1).labels) c1[y]++;
  for (int y : make_domain(s2).labels) c2[y]++;
  CHECK(c1 == c2);
}

TEST_CASE("degenerate transforms are rejected") {
  DomainSpec spec;
  spec.name = "bad";
  spec.base = circular_base_task(3, 0.35);
  spec.n_samples = 30;
  spec.transform.scale = {0.0, 1.0};
  CHECK_THROWS_AS(make_domain(spec), ConfigError);

  spec.transform.scale = {1.0, 1.0};
  spec.transform.permutation = {0, 0};
  CHECK_THROWS_AS(make_domain(spec), ConfigError);

  spec.transform.permutation.clear();
  spec.n_samples = 2;  // below one per class
  CHECK_THROWS_AS(make_domain(spec), ConfigError);
}

TEST_CASE("split_domain produces balanced disjoint shards covering the input") {
  Dataset ds = testing::make_blobs(2, 10, 5);
  Rng rng(1);
  std::vector<Dataset> shards = split_domain(ds, 3, rng);
  REQUIRE(shards.size() == 3);
  CHECK(shards[0].size() == 4);
  CHECK(shards[1].size() == 3);
  CHECK(shards[2].size() == 3);

  // The concatenation is a permutation of the original rows.
  std::multiset<std::pair<double, double>> original, recovered;
  for (size_t i = 0; i < ds.size(); ++i) {
    original.insert({ds.features.at(i, 0), ds.features.at(i, 1)});
  }
  for (const Dataset& s : shards) {
    for (size_t i = 0; i < s.size(); ++i) {
      recovered.insert({s.features.at(i, 0), s.features.at(i, 1)});
    }
  }
  CHECK(original == recovered);
}

TEST_CASE("split_domain edge cases") {
  Dataset ds = testing::make_blobs(2, 6, 3);
  Rng rng(2);
  std::vector<Dataset> one = split_domain(ds, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].features == ds.features);
  CHECK(one[0].labels == ds.labels);
  CHECK(one[0].domain_tag == ds.domain_tag);

  CHECK_THROWS_AS(split_domain(ds, 7, rng), InputError);
  CHECK_THROWS_AS(split_domain(ds, 0, rng), InputError);
}

TEST_CASE("train_test_split is stratified, disjoint and deterministic") {
  Dataset ds = testing::make_blobs(2, 10, 21);
  Rng r1(3), r2(3);
  auto [train1, test1] = train_test_split(ds, 0.5, r1);
  auto [train2, test2] = train_test_split(ds, 0.5, r2);
  CHECK(train1.features == train2.features);
  CHECK(test1.labels == test2.labels);

  CHECK(train1.size() == 5);
  CHECK(test1.size() == 5);
  std::map<int, int> train_counts, test_counts;
  for (int y : train1.labels) train_counts[y]++;
  for (int y : test1.labels) test_counts[y]++;
  for (int c = 0; c < 2; ++c) {
    CHECK(std::abs(train_counts[c] - test_counts[c]) <= 1);
  }

  // Union equals the input as a multiset of feature rows.
  std::multiset<double> original, recovered;
  for (size_t i = 0; i < ds.features.size(); ++i) original.insert(ds.features[i]);
  for (size_t i = 0; i < train1.features.size(); ++i) recovered.insert(train1.features[i]);
  for (size_t i = 0; i < test1.features.size(); ++i) recovered.insert(test1.features[i]);
  CHECK(original == recovered);
}

TEST_CASE("train_test_split rejects splits that empty a class") {
  Dataset ds = testing::make_blobs(3, 6, 2);  // two samples per class
  Rng rng(4);
  CHECK_THROWS_AS(train_test_split(ds, 0.01, rng), ConfigError);
  CHECK_THROWS_AS(train_test_split(ds, 0.0, rng), InputError);
  CHECK_THROWS_AS(train_test_split(ds, 1.0, rng), InputError);
  Dataset unlabeled = ds.without_labels();
  CHECK_THROWS_AS(train_test_split(unlabeled, 0.5, rng), InputError);
}

TEST_CASE("standardization zeroes means and unit-scales features") {
  Dataset ds = testing::make_blobs(3, 90, 17, 0.0, 0.5);
  standardize_features(ds);
  for (size_t j = 0; j < ds.dim(); ++j) {
    double mean = 0.0, var = 0.0;
    for (size_t i = 0; i < ds.size(); ++i) mean += ds.features.at(i, j);
    mean /= double(ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
      double c = ds.features.at(i, j) - mean;
      var += c * c;
    }
    var /= double(ds.size());
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("csv export writes a parsable header and rows") {
  Dataset ds = testing::make_blobs(2, 4, 8);
  std::string path = "test_dataset_out.csv";
  write_csv(ds, path);
  std::ifstream in(path);
  REQUIRE(in.good());
  std::string header;
  std::getline(in, header);
  CHECK(header == "f0,f1,label");
  size_t rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4);
  in.close();
  std::remove(path.c_str());
}
