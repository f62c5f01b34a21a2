#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "mflq/errors.hpp"
#include "mflq/model.hpp"
#include "test_models.hpp"

using namespace mflq;

TEST_CASE("bundled model validates and carries the documented values") {
  const ModelParams p = table1_model();
  CHECK(validate(p).empty());
  CHECK(p.dims.n0 == 1);
  CHECK(p.leader_dyn.A0(0, 0) == -10.0);
  CHECK(p.leader_dyn.D0(0, 0) == 0.5);
  CHECK(p.follower_dyn.A(0, 0) == -2.0);
  CHECK(p.follower_dyn.Fbar(0, 0) == 0.2);
  CHECK(p.follower_cost.H(0, 0) == 2.0);
  CHECK(p.init.leader_mean(0) == 10.0);
  CHECK(p.init.leader_cov(0, 0) == 2.0);
  CHECK(p.init.follower_mean(0) == 5.0);
  CHECK(p.init.follower_cov(0, 0) == 1.0);
  CHECK(p.T == 1.0);
  CHECK(p.grid_steps == 2000);
}

TEST_CASE("weight aggregates, bundled model") {
  const WeightAggregates w = weight_aggregates(table1_model().follower_cost);
  CHECK(w.Q_Gamma(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.H_Ghat(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(w.Q_Gamma1(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(w.H_Ghat1(0, 0) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("weight aggregates, general scalar model") {
  const WeightAggregates w = weight_aggregates(testing::general_scalar_model().follower_cost);
  // Q=1.2, Gamma=0.55: 2*1.2*0.55 - 0.55*1.2*0.55; similarly for H, Ghat.
  CHECK(w.Q_Gamma(0, 0) == doctest::Approx(0.957).epsilon(1e-12));
  CHECK(w.H_Ghat(0, 0) == doctest::Approx(0.675).epsilon(1e-12));
  CHECK(w.Q_Gamma1(0, 0) == doctest::Approx(0.351).epsilon(1e-12));
  CHECK(w.H_Ghat1(0, 0) == doctest::Approx(0.18).epsilon(1e-12));
}

TEST_CASE("bundled model file matches the built-in constructor") {
  const auto path =
      std::filesystem::path(__FILE__).parent_path().parent_path() / "models" / "table1.json";
  const ModelParams from_file = load_model(path.string());
  CHECK(model_to_json(from_file) == model_to_json(table1_model()));
}

TEST_CASE("model JSON round trip on a nonscalar model") {
  const ModelParams p = testing::nonscalar_model();
  const ModelParams back = parse_model(model_to_json(p));
  CHECK(model_to_json(back) == model_to_json(p));
  CHECK(validate(back).empty());
}

TEST_CASE("validate reports shape and sign problems") {
  ModelParams p = table1_model();
  p.leader_cost.Q0 = Mat::Identity(2, 2);
  CHECK(!validate(p).empty());

  p = table1_model();
  p.init.follower_cov = Mat::Constant(1, 1, -1.0);
  CHECK(!validate(p).empty());

  p = testing::nonscalar_model();
  p.leader_cost.H0(0, 1) += 0.3;  // asymmetric weight
  CHECK(!validate(p).empty());
}

TEST_CASE("parse errors carry the parse exit code") {
  CHECK_THROWS_AS(parse_model("{"), ParseError);
  CHECK_THROWS_AS(parse_model("{\"dims\": {\"n0\": 1}}"), ParseError);

  // ragged matrix rows
  const std::string good = model_to_json(table1_model());
  CHECK_THROWS_AS(parse_model("{\"dims\": {\"n0\": 1, \"n\": 1, \"m0\": 1, \"m\": 1}, "
                              "\"leader_dyn\": {\"A0\": [[1], [2, 3]]}}"),
                  ParseError);
  try {
    load_model("/nonexistent/model.json");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(e.code() == ExitCode::parse_error);
  }
}
