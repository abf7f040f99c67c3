#include <doctest.h>

#include "oracles.hpp"
#include "uds/diversity_buffer.hpp"

using namespace uds;

namespace {

Embedding<double> embed(std::initializer_list<double> values) {
  Embedding<double> e;
  e.data = VectorXd(static_cast<Index>(values.size()));
  Index i = 0;
  for (double v : values) e.data(i++) = v;
  return e;
}

}  // namespace

TEST_CASE("empty buffer scores zero for any candidate") {
  MemoryBuffer<double> buffer(8, 2);
  CHECK(diversity_distance(embed({5.0, -3.0}), buffer) == 0.0);
}

TEST_CASE("distance to itself is zero, 3-4-5 triangle averages to 2.5") {
  MemoryBuffer<double> buffer(8, 2);
  push_selected(buffer, {embed({1.0, 2.0})});
  CHECK(diversity_distance(embed({1.0, 2.0}), buffer) == 0.0);

  MemoryBuffer<double> triangle(8, 2);
  push_selected(triangle, {embed({0.0, 0.0}), embed({3.0, 4.0})});
  CHECK(diversity_distance(embed({0.0, 0.0}), triangle) ==
        doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("push evicts oldest entries exactly like the while loop") {
  MemoryBuffer<double> buffer(3, 1);
  push_selected(buffer, {embed({1}), embed({2}), embed({3})});
  push_selected(buffer, {embed({4}), embed({5})});
  REQUIRE(buffer.size() == 3);
  CHECK(buffer.entries()[0].data(0) == 3.0);
  CHECK(buffer.entries()[1].data(0) == 4.0);
  CHECK(buffer.entries()[2].data(0) == 5.0);
  CHECK(buffer.total_pushed() == 5);

  MemoryBuffer<double> fresh(3, 1);
  push_selected(fresh, {embed({7})});
  CHECK(fresh.size() == 1);
  CHECK(fresh.entries()[0].data(0) == 7.0);
}

TEST_CASE("a batch larger than the capacity is a configuration error") {
  MemoryBuffer<double> buffer(2, 1);
  CHECK_THROWS_AS(push_selected(buffer, {embed({1}), embed({2}), embed({3})}),
                  std::invalid_argument);
}

TEST_CASE("dimension mismatches are rejected") {
  MemoryBuffer<double> buffer(4, 3);
  push_selected(buffer, {embed({1, 2, 3})});
  CHECK_THROWS_AS(diversity_distance(embed({1, 2}), buffer), std::invalid_argument);
  CHECK_THROWS_AS(push_selected(buffer, {embed({1, 2})}), std::invalid_argument);
}

TEST_CASE("random push sequences match the replay oracle") {
  Rng rng(300);
  MemoryBuffer<double> buffer(16, 2);
  oracles::ReplayQueue replay{16, {}};
  double counter = 0;
  for (int step = 0; step < 500; ++step) {
    const Index k = 1 + Index(rng.below(5));
    std::vector<Embedding<double>> batch;
    std::vector<VectorXd> raw;
    for (Index i = 0; i < k; ++i) {
      VectorXd v(2);
      v << counter, -counter;
      counter += 1;
      Embedding<double> e;
      e.data = v;
      batch.push_back(e);
      raw.push_back(v);
    }
    push_selected(buffer, batch);
    replay.push_batch(raw);
    REQUIRE(buffer.size() == static_cast<Index>(replay.items.size()));
    REQUIRE(buffer.size() <= buffer.capacity());
    for (Index i = 0; i < buffer.size(); ++i)
      CHECK(buffer.entries()[static_cast<std::size_t>(i)].data ==
            replay.items[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("occupancy follows min(capacity, pushed) under fixed-size batches") {
  MemoryBuffer<double> buffer(64, 1);
  for (int step = 1; step <= 50; ++step) {
    std::vector<Embedding<double>> batch(4, embed({double(step)}));
    push_selected(buffer, batch);
    CHECK(buffer.size() == std::min<Index>(64, 4 * step));
  }
}

TEST_CASE("diversity distance is translation equivariant") {
  Rng rng(301);
  MemoryBuffer<double> buffer(8, 5);
  std::vector<Embedding<double>> batch;
  for (int i = 0; i < 6; ++i) {
    Embedding<double> e;
    e.data = oracles::random_matrix(5, 1, rng);
    batch.push_back(e);
  }
  push_selected(buffer, batch);
  Embedding<double> candidate;
  candidate.data = oracles::random_matrix(5, 1, rng);
  const double before = diversity_distance(candidate, buffer);

  const VectorXd shift = oracles::random_matrix(5, 1, rng);
  MemoryBuffer<double> shifted(8, 5);
  std::vector<Embedding<double>> moved;
  for (auto e : batch) {
    e.data += shift;
    moved.push_back(e);
  }
  push_selected(shifted, moved);
  Embedding<double> shifted_candidate = candidate;
  shifted_candidate.data += shift;
  const double after = diversity_distance(shifted_candidate, shifted);
  CHECK(std::abs(before - after) <= 1e-9 * std::max(1.0, before));
}

TEST_CASE("appending a duplicate of the candidate never raises its score") {
  Rng rng(302);
  MemoryBuffer<double> buffer(16, 3);
  std::vector<Embedding<double>> batch;
  for (int i = 0; i < 5; ++i) {
    Embedding<double> e;
    e.data = oracles::random_matrix(3, 1, rng);
    batch.push_back(e);
  }
  push_selected(buffer, batch);
  Embedding<double> candidate;
  candidate.data = oracles::random_matrix(3, 1, rng);
  const double before = diversity_distance(candidate, buffer);
  CHECK(before >= 0.0);
  push_selected(buffer, {candidate});
  CHECK(diversity_distance(candidate, buffer) <= before);
}
