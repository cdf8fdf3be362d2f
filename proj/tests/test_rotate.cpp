#include <doctest.h>

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include "lesr/rotate.hpp"
#include "testkit.hpp"

using namespace lesr;

namespace {

double oracle_score(const RotatEModel& m, std::size_t h, std::size_t r, std::size_t t) {
  const std::size_t d = m.dim();
  double dist = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const std::complex<double> he(m.entity(h)[k], m.entity(h)[d + k]);
    const std::complex<double> te(m.entity(t)[k], m.entity(t)[d + k]);
    const std::complex<double> rot = std::polar(1.0, m.phase(r)[k]);
    dist += std::abs(he * rot - te);
  }
  return m.gamma() - dist;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::max(std::sqrt(na), std::sqrt(nb));
  return scale == 0 ? 0 : std::sqrt(diff) / scale;
}

}  // namespace

TEST_CASE("identity rotation of equal embeddings scores gamma") {
  RotatEModel m(2, 1, 4, 6.0);
  for (std::size_t k = 0; k < 8; ++k) {
    m.entity(0)[k] = 0.1 * static_cast<double>(k);
    m.entity(1)[k] = 0.1 * static_cast<double>(k);
  }
  CHECK(m.score(entity(0), relation(0), entity(1)) == 6.0);
}

TEST_CASE("score matches a complex-number oracle and is pure") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto m = RotatEModel::initialize(6, 3, 4, 6.0, seed);
    for (std::size_t h = 0; h < 6; ++h)
      for (std::size_t r = 0; r < 3; ++r) {
        const auto row = m.score_tails(entity(h), relation(r));
        for (std::size_t t = 0; t < 6; ++t) {
          const double s = m.score(entity(h), relation(r), entity(t));
          CHECK(s == doctest::Approx(oracle_score(m, h, r, t)).epsilon(1e-12));
          CHECK(s == m.score(entity(h), relation(r), entity(t)));
          CHECK(row[t] == doctest::Approx(s).epsilon(1e-12));
        }
      }
  }
  const auto m = RotatEModel::initialize(2, 1, 4, 6.0, 0);
  CHECK_THROWS_AS(m.score(entity(2), relation(0), entity(0)), Error);
  CHECK_THROWS_AS(m.score(entity(0), relation(1), entity(0)), Error);
}

TEST_CASE("initialization ranges") {
  const auto m = RotatEModel::initialize(10, 4, 8, 6.0, 3);
  const double range = 8.0 / 8.0;
  for (double x : m.entity_table()) CHECK(std::abs(x) <= range);
  for (double p : m.phase_table()) {
    CHECK(p > -std::numbers::pi);
    CHECK(p <= std::numbers::pi);
  }
  CHECK(RotatEModel::initialize(10, 4, 8, 6.0, 3) == m);
}

TEST_CASE("margin loss gradient matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    auto m = RotatEModel::initialize(5, 2, 3, 2.0, seed);
    const Triple pos{entity(rng.below(5)), relation(rng.below(2)), entity(rng.below(5))};
    std::vector<EntityId> negs;
    for (int k = 0; k < 4; ++k) negs.push_back(entity(rng.below(5)));
    RotatEGrad grad;
    rotate_loss(m, pos, negs, &grad);

    std::vector<double> analytic, numeric;
    const double h = 1e-6;
    auto probe = [&](double& x, double g) {
      const double saved = x;
      x = saved + h;
      const double up = rotate_loss(m, pos, negs);
      x = saved - h;
      const double down = rotate_loss(m, pos, negs);
      x = saved;
      analytic.push_back(g);
      numeric.push_back((up - down) / (2 * h));
    };
    for (std::size_t e = 0; e < 5; ++e)
      for (std::size_t k = 0; k < 6; ++k) {
        const double g = grad.entity.contains(e) ? grad.entity[e][k] : 0.0;
        probe(m.entity(e)[k], g);
      }
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t k = 0; k < 3; ++k) {
        const double g = grad.relation.contains(r) ? grad.relation[r][k] : 0.0;
        probe(m.phase(r)[k], g);
      }
    CHECK(relative_error(analytic, numeric) < 1e-4);
  }
}

TEST_CASE("training") {
  SUBCASE("zero epochs returns the seeded initialization") {
    const auto kb = testkit::kb_from({{"a", "r", "b"}, {"b", "r", "c"}});
    RotatEConfig cfg;
    cfg.epochs = 0;
    cfg.dim = 8;
    cfg.seed = 4;
    const auto out = rotate_train(kb, cfg);
    CHECK(out.loss_trace.empty());
    CHECK(out.model == RotatEModel::initialize(3, 1, 8, cfg.gamma, derive_seed(4, "rotate:init")));
  }
  SUBCASE("one-triple KB separates the positive from corruptions") {
    const auto kb = testkit::kb_from({{"a", "r", "b"}}, {}, {{"c", "r", "d"}, {"e", "r", "f"}});
    RotatEConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 300;
    cfg.negatives = 8;
    cfg.lr = 0.01;
    const auto m = rotate_train(kb, cfg).model;
    const auto a = *kb.find_entity("a"), b = *kb.find_entity("b");
    const auto r = *kb.find_relation("r");
    for (std::size_t t = 0; t < kb.num_entities(); ++t) {
      if (entity(t) != b) CHECK(m.score(a, r, b) > m.score(a, r, entity(t)));
    }
  }
  SUBCASE("toy loss trends down and training is deterministic") {
    const auto dir = testkit::toy_dir();
    const auto kb = load_kb(dir / "train.txt", dir / "valid.txt", dir / "test.txt");
    RotatEConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 60;
    cfg.negatives = 16;
    cfg.lr = 0.01;
    const auto out = rotate_train(kb, cfg);
    REQUIRE(out.loss_trace.size() == 60);
    std::vector<double> avg;
    for (std::size_t i = 10; i <= out.loss_trace.size(); ++i) {
      double s = 0;
      for (std::size_t k = i - 10; k < i; ++k) s += out.loss_trace[k];
      avg.push_back(s / 10);
    }
    for (std::size_t i = 1; i < avg.size(); ++i) CHECK(avg[i] <= avg[i - 1] + 1e-12);
    CHECK(rotate_train(kb, cfg).model == out.model);
    for (double p : out.model.phase_table()) {
      CHECK(p > -std::numbers::pi);
      CHECK(p <= std::numbers::pi);
    }
  }
}

TEST_CASE("checkpoint round-trip") {
  const auto m = RotatEModel::initialize(7, 3, 5, 6.0, 11);
  const auto path = testkit::fresh_dir("rotate") / "model.bin";
  m.save(path);
  CHECK(RotatEModel::load(path) == m);
  CHECK(std::filesystem::file_size(path) == 8 + 4 * 8 + (7 * 10 + 3 * 5) * 8);
  {
    std::ofstream(path, std::ios::binary) << "not a model";
  }
  CHECK_THROWS_AS(RotatEModel::load(path), Error);
}
