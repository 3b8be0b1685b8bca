#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "idm/models.hpp"

using namespace idm;
using models::ArchKind;
using models::ArchSpec;
using models::Model;
using models::Role;
using models::StateFormat;

namespace {

ArchSpec spec_of(ArchKind k, Role r, StateFormat f, bool goal = false) {
  ArchSpec s;
  s.kind = k;
  s.role = r;
  s.format = f;
  s.goal_conditioned = goal;
  return s;
}

}  // namespace

TEST_CASE("validate rejects arch/format mismatches") {
  CHECK_THROWS_AS(
      spec_of(ArchKind::LC, Role::Policy, StateFormat::Img).validate(),
      models::SpecError);
  CHECK_THROWS_AS(
      spec_of(ArchKind::MLP5, Role::Idm, StateFormat::Img).validate(),
      models::SpecError);
  CHECK_THROWS_AS(
      spec_of(ArchKind::CNN1, Role::Policy, StateFormat::Pos).validate(),
      models::SpecError);
  CHECK_THROWS_AS(
      spec_of(ArchKind::CNN5, Role::Idm, StateFormat::Pos).validate(),
      models::SpecError);
  CHECK_NOTHROW(spec_of(ArchKind::LC, Role::Idm, StateFormat::Pos).validate());
  CHECK_NOTHROW(
      spec_of(ArchKind::CNN5, Role::Policy, StateFormat::Img).validate());
}

TEST_CASE("input widths follow the role and goal conditioning") {
  CHECK(spec_of(ArchKind::LC, Role::Policy, StateFormat::Pos).pos_input_dim() ==
        2);
  CHECK(spec_of(ArchKind::LC, Role::Idm, StateFormat::Pos).pos_input_dim() ==
        4);
  CHECK(spec_of(ArchKind::MLP5, Role::Policy, StateFormat::Pos, true)
            .pos_input_dim() == 4);
  CHECK(spec_of(ArchKind::MLP5, Role::Idm, StateFormat::Pos, true)
            .pos_input_dim() == 6);
  CHECK(spec_of(ArchKind::CNN1, Role::Policy, StateFormat::Img)
            .img_channels() == 3);
  CHECK(spec_of(ArchKind::CNN1, Role::Idm, StateFormat::Img).img_channels() ==
        6);
}

TEST_CASE("LC pos policy has exactly 12 parameters") {
  Model m = models::build(spec_of(ArchKind::LC, Role::Policy, StateFormat::Pos),
                          10, 10, 1);
  CHECK(m.param_count() == 12);
}

TEST_CASE("build is deterministic per seed") {
  ArchSpec s = spec_of(ArchKind::MLP5, Role::Policy, StateFormat::Pos);
  Model a = models::build(s, 10, 10, 42);
  Model b = models::build(s, 10, 10, 42);
  Model c = models::build(s, 10, 10, 43);
  REQUIRE(a.params.size() == b.params.size());
  bool same = true, differs = false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].value.values != b.params[i].value.values) same = false;
    if (a.params[i].value.values != c.params[i].value.values) differs = true;
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("predict rows are distributions") {
  grid::Grid g = grid::generate_maze(10, 3);
  auto e = grid::solve_expert(g);
  auto test = data::build_test_set(g, e);
  for (ArchKind k : {ArchKind::LC, ArchKind::MLP5}) {
    Model m = models::build(spec_of(k, Role::Idm, StateFormat::Pos), g.height,
                            g.width, 5);
    ad::Tensor in = models::encode_batch(m.spec, g, test);
    ad::Tensor p = models::predict(m, in);
    REQUIRE(p.shape ==
            std::vector<int>{static_cast<int>(test.size()), 4});
    for (int b = 0; b < p.shape[0]; ++b) {
      double s = 0.0;
      for (int a = 0; a < 4; ++a) {
        CHECK(p.values[b * 4 + a] >= 0.0);
        s += p.values[b * 4 + a];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("analytic pos IDM recovers every expert action exactly") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    grid::Grid g = grid::generate_maze(10, seed);
    auto e = grid::solve_expert(g);
    Model m = models::analytic_idm_pos(0.05);
    for (const auto& t : data::build_test_set(g, e))
      CHECK(models::argmax_action(models::predict_one(m, g, t)) == *t.a);
  }
}

TEST_CASE("analytic img IDM recovers every expert action exactly") {
  grid::Grid g = grid::generate_maze(10, 7);
  auto e = grid::solve_expert(g);
  Model m = models::analytic_idm_img(g, 0.05);
  for (const auto& t : data::build_test_set(g, e))
    CHECK(models::argmax_action(models::predict_one(m, g, t)) == *t.a);
}

TEST_CASE("lower temperature sharpens the analytic IDM distribution") {
  grid::Grid g = grid::make_open_grid(5);
  data::Transition t = data::labeled({1, 1}, 0, {2, 1});
  auto sharp = models::predict_one(models::analytic_idm_pos(0.05), g, t);
  auto flat = models::predict_one(models::analytic_idm_pos(5.0), g, t);
  CHECK(sharp[0] > flat[0]);
  CHECK(flat[0] < 0.9);
  CHECK(sharp[0] > 0.98);
}

TEST_CASE("encode_batch rejects empty batches") {
  grid::Grid g = grid::make_open_grid(5);
  ArchSpec s = spec_of(ArchKind::LC, Role::Policy, StateFormat::Pos);
  CHECK_THROWS_AS(models::encode_batch(s, g, {}), models::SpecError);
}

TEST_CASE("goal-conditioned encoding requires a goal on every record") {
  grid::Grid g = grid::make_open_grid(5);
  ArchSpec s = spec_of(ArchKind::MLP5, Role::Policy, StateFormat::Pos, true);
  std::vector<data::Transition> recs = {data::labeled({1, 1}, 0, {2, 1})};
  CHECK_THROWS_AS(models::encode_batch(s, g, recs), models::SpecError);
  recs[0].goal = grid::PosState{4, 0};
  CHECK_NOTHROW(models::encode_batch(s, g, recs));
}

TEST_CASE("pos encodings are scaled into the unit square") {
  grid::Grid g = grid::make_open_grid(20);
  ArchSpec s = spec_of(ArchKind::LC, Role::Idm, StateFormat::Pos);
  std::vector<data::Transition> recs = {data::labeled({19, 19}, 0, {19, 19}),
                                        data::labeled({0, 0}, 0, {1, 0})};
  ad::Tensor in = models::encode_batch(s, g, recs);
  for (double v : in.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(in.values[0] == doctest::Approx(1.0));
  CHECK(in.values[4] == doctest::Approx(0.0));
}

TEST_CASE("labels_of requires actions") {
  std::vector<data::Transition> recs = {data::labeled({1, 1}, 2, {1, 2})};
  CHECK(models::labels_of(recs) == std::vector<int>{2});
  recs[0].a.reset();
  CHECK_THROWS_AS(models::labels_of(recs), models::SpecError);
}
