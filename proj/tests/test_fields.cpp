#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <random>

#include "rdmc/fields.hpp"

using namespace rdmc;

TEST_CASE("make_grid computes spacings") {
  const auto g = make_grid(1, 5e-4, 100, 3.0, 300);
  CHECK(g.dx == Catch::Approx(1e-5).epsilon(1e-14));
  CHECK(g.dt == Catch::Approx(0.01).epsilon(1e-14));
  const auto g3 = make_grid(3, 1e-3, 64, 10.0, 100);
  CHECK(g3.dx == Catch::Approx(3.125e-5).epsilon(1e-14));
  CHECK(g3.dt == Catch::Approx(0.1).epsilon(1e-14));
}

TEST_CASE("make_grid rejects bad arguments") {
  CHECK_THROWS_AS(make_grid(1, 0, 100, 3, 300), NonPositiveExtent);
  CHECK_THROWS_AS(make_grid(1, 1e-3, 100, -1, 300), NonPositiveExtent);
  CHECK_THROWS_AS(make_grid(1, 1e-3, 1, 3, 300), TooFewSamples);
  CHECK_THROWS_AS(make_grid(4, 1e-3, 10, 3, 300), TooFewSamples);
}

TEST_CASE("delta renders as a single-cell point mass") {
  const auto g = make_grid(1, 5e-4, 100, 3.0, 300);
  Waveform w;
  w.deltas.push_back({0.0, 5e8, {0, 0, 0}});
  const Field f = discretize_waveform(w, g);
  const std::int64_t origin = g.node_index(0.0);
  CHECK(f.at(0, origin) == Catch::Approx(5e8 / (g.dx * g.dt)).epsilon(1e-12));
  double sum = 0;
  for (double v : f.values) sum += v;
  CHECK(sum * g.dx * g.dt == Catch::Approx(5e8).epsilon(1e-12));
}

TEST_CASE("empty waveform renders to zero") {
  const auto g = make_grid(2, 1e-4, 16, 1.0, 10);
  const Field f = discretize_waveform(Waveform{}, g);
  CHECK(f.max_abs() == 0.0);
}

TEST_CASE("two deltas in one cell add") {
  const auto g = make_grid(1, 5e-4, 100, 3.0, 300);
  Waveform w;
  w.deltas.push_back({1.0, 2e8, {1e-5, 0, 0}});
  w.deltas.push_back({1.0, 3e8, {1e-5, 0, 0}});
  const Field f = discretize_waveform(w, g);
  CHECK(f.at(100, g.node_index(1e-5)) == Catch::Approx(5e8 / (g.dx * g.dt)));
}

TEST_CASE("delta outside the box is rejected") {
  const auto g = make_grid(1, 5e-4, 100, 3.0, 300);
  Waveform w;
  w.deltas.push_back({0.0, 1.0, {6e-4, 0, 0}});
  CHECK_THROWS_AS(discretize_waveform(w, g), LocationOutsideGrid);
}

TEST_CASE("mass conservation for random delta placements") {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> ux(-4e-4, 4e-4), ut(0, 3.0), uw(0, 1e9);
  const auto g = make_grid(1, 5e-4, 128, 3.0, 250);
  for (int rep = 0; rep < 50; ++rep) {
    Waveform w;
    const int n = 1 + int(rng() % 5);
    for (int i = 0; i < n; ++i) w.deltas.push_back({ut(rng), uw(rng), {ux(rng), 0, 0}});
    const Field f = discretize_waveform(w, g);
    CHECK(f.integral() == Catch::Approx(w.total_mass()).epsilon(1e-6));
  }
}

TEST_CASE("envelope rendering conserves mass, including refinement") {
  const auto g = make_grid(1, 5e-4, 64, 2.0, 100);
  Waveform w;
  w.envelope = {1e6, 3e6, 2e6, 5e6, 0.5e6};
  w.envelope_t_end = 2.0;
  w.envelope_location = {1e-4, 0, 0};
  const Field f = discretize_waveform(w, g);
  const double mass = w.total_mass();
  CHECK(f.integral() == Catch::Approx(mass).epsilon(1e-9));

  const auto g2 = make_grid(1, 5e-4, 128, 2.0, 200);  // halve dx and dt
  CHECK(discretize_waveform(w, g2).integral() == Catch::Approx(mass).epsilon(1e-9));
}

TEST_CASE("snap report records off-grid placements") {
  const auto g = make_grid(1, 5e-4, 100, 3.0, 300);
  Waveform w;
  w.deltas.push_back({0.0049, 1.0, {1.4e-6, 0, 0}});
  SnapReport rep;
  discretize_waveform(w, g, &rep);
  CHECK(rep.snapped > 0);
  CHECK(rep.max_space_snap > 0);
  CHECK(rep.max_space_snap <= 0.5 * g.dx * 1.0001);
  CHECK(rep.max_time_snap <= 0.5 * g.dt * 1.0001);
}

TEST_CASE("budget validation") {
  Waveform w;
  w.mass_budget = 1e6;
  w.deltas.push_back({0.5, 9e5, {0, 0, 0}});
  CHECK_NOTHROW(w.validate(1.0));
  w.deltas.push_back({0.6, 2e5, {0, 0, 0}});
  CHECK_THROWS_AS(w.validate(1.0), ValidationError);
}

TEST_CASE("concentration validation flags and errors") {
  const auto g = make_grid(1, 1e-4, 8, 1.0, 2);
  Field f(g, "X");
  f.values.assign(f.values.size(), 1.0);
  f.values[3] = -5e-7;  // small overshoot: flagged
  CHECK(validate_concentration(f) == 1);
  f.values[3] = -1e-3;  // beyond tolerance: error
  CHECK_THROWS_AS(validate_concentration(f), NegativeConcentration);
  f.values[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_concentration(f), NonFiniteField);
}

TEST_CASE("binary round trip preserves a field") {
  const auto g = make_grid(2, 1e-4, 12, 1.0, 5);
  Field f(g, "X");
  std::mt19937 rng(7);
  for (auto& v : f.values) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  const std::string path = "roundtrip_field.bin";
  write_field_binary(f, path);
  const Field r = read_field_binary(path);
  REQUIRE(r.values.size() == f.values.size());
  for (std::size_t i = 0; i < f.values.size(); ++i) CHECK(r.values[i] == f.values[i]);
  std::remove(path.c_str());
}

TEST_CASE("csv dump has one row per cell") {
  const auto g = make_grid(1, 1e-4, 4, 1.0, 2);
  Field f(g, "X");
  const std::string path = "dump_field.csv";
  write_field_csv(f, path);
  std::ifstream is(path);
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 1 + 3 * 4);
  std::remove(path.c_str());
}
