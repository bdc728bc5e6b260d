#include <doctest.h>

#include <numeric>

#include "histmap/membank.hpp"

using namespace histmap;

namespace {

MemoryEntry<int> entry(Vec v, double conf = 0.9, int src = 0) {
  MemoryEntry<int> e;
  e.pooled = std::move(v);
  e.confidence = conf;
  e.source_index = src;
  return e;
}

}  // namespace

TEST_SUITE("membank") {
  TEST_CASE("total dissimilarity") {
    CHECK(total_dissimilarity(std::vector<Vec>{{1, 2}}) == std::vector<double>{0});
    CHECK(total_dissimilarity(std::vector<Vec>{{1, 0}, {0, 1}}) == std::vector<double>{1, 1});
    CHECK(total_dissimilarity(std::vector<Vec>{{1, 0}, {0, 1}, {1, 0}}) == std::vector<double>{1, 2, 1});
    CHECK_THROWS(total_dissimilarity(std::vector<Vec>{{1, 0}, {0, 0}}));
  }

  TEST_CASE("self-sorting update") {
    MemoryBank<int> bank(BankPolicy::self_sorting, 2);
    CHECK_FALSE(bank.update_self_sorting(entry({1, 0}, 0.5), 0.7));
    CHECK(bank.empty());
    CHECK(bank.update_self_sorting(entry({1, 0}, 0.9, 1), 0.7));
    CHECK(bank.update_self_sorting(entry({0, 1}, 0.9, 2), 0.7));
    CHECK(bank.size() == 2);
    // the duplicate of e1 ties with e1 at D = 1; the older one stays
    CHECK_FALSE(bank.update_self_sorting(entry({1, 0}, 0.9, 3), 0.7));
    REQUIRE(bank.size() == 2);
    CHECK(bank.entries()[0].source_index == 1);
    CHECK(bank.entries()[1].source_index == 2);
  }

  TEST_CASE("fifo") {
    MemoryBank<int> bank(BankPolicy::fifo, 4);
    for (int i = 1; i <= 3; ++i) bank.update_fifo(entry({1, double(i)}, 0, i));
    CHECK(bank.size() == 3);
    for (int i = 4; i <= 5; ++i) bank.update_fifo(entry({1, double(i)}, 0, i));
    REQUIRE(bank.size() == 4);
    for (int i = 0; i < 4; ++i) CHECK(bank.entries()[i].source_index == i + 2);
    Rng rng(0);
    const auto got = bank.retrieve(Vec{1, 0}, 2, RetrieveMode::recent_k, rng);
    REQUIRE(got.size() == 2);
    CHECK(got[0].source_index == 4);
    CHECK(got[1].source_index == 5);
    CHECK_THROWS(bank.update_self_sorting(entry({1, 0}), 0.0));
  }

  TEST_CASE("retrieval probabilities") {
    const std::vector<Vec> same{{1, 1}, {1, 1}, {1, 1}};
    for (double p : retrieval_probabilities(same, Vec{0.3, 2})) CHECK(p == doctest::Approx(1.0 / 3));
    const auto p = retrieval_probabilities(std::vector<Vec>{{1, 0}, {0, 1}}, Vec{1, 0});
    CHECK(p[0] == doctest::Approx(1.0 / (1.0 + 1e-6)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(1e-6 / (1.0 + 1e-6)).epsilon(1e-9));
  }

  TEST_CASE("retrieve") {
    MemoryBank<int> bank(BankPolicy::self_sorting, 8);
    Rng rng(3);
    CHECK(bank.retrieve(Vec{1, 0}, 2, RetrieveMode::weighted_sample, rng).empty());
    for (int i = 0; i < 5; ++i) bank.update(entry({std::cos(i * 0.3), std::sin(i * 0.3)}, 0.9, i), 0.7);
    for (auto mode : {RetrieveMode::weighted_sample, RetrieveMode::top_k, RetrieveMode::recent_k}) {
      const auto all = bank.retrieve(Vec{1, 0}, 9, mode, rng);
      REQUIRE(all.size() == 5);
      for (int i = 0; i < 5; ++i) CHECK(all[i].source_index == i);
      const auto some = bank.retrieve(Vec{1, 0}, 3, mode, rng);
      CHECK(some.size() == 3);
    }
    const auto top = bank.retrieve(Vec{1, 0}, 2, RetrieveMode::top_k, rng);
    CHECK(top[0].source_index == 0);
    CHECK(top[1].source_index == 1);
  }

  TEST_CASE("sampling without replacement") {
    Rng rng(11);
    const std::vector<double> w{0.1, 0.0, 5.0, 1.0};
    for (int rep = 0; rep < 50; ++rep) {
      auto s = sample_without_replacement(w, 3, rng);
      std::sort(s.begin(), s.end());
      CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
      CHECK(s.size() == 3);
    }
    std::vector<int> hits(4, 0);
    for (int rep = 0; rep < 4000; ++rep) ++hits[sample_without_replacement(w, 1, rng)[0]];
    CHECK(hits[1] == 0);
    CHECK(hits[2] / 4000.0 == doctest::Approx(5.0 / 6.1).epsilon(0.05));
  }
}
