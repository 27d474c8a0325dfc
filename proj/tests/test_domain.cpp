#include <catch_amalgamated.hpp>

#include <algorithm>

#include "gfn4rec/domain.hpp"
#include "gfn4rec/rng.hpp"

using namespace gfn4rec;

namespace {

BehaviorSpec ml_spec() { return BehaviorSpec::uniform({"click", "like", "star"}); }

BehaviorSpec kr_spec() {
  return {{"click", "view", "like", "comment", "forward", "follow", "hate"}, {1, 1, 1, 1, 1, 1, -1}};
}

MultiBehaviorResponse random_response(std::size_t nb, std::size_t k, Rng& rng) {
  MultiBehaviorResponse r(nb, k);
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t i = 0; i < k; ++i) r.set(b, i, uniform01(rng) < 0.5 ? 1 : 0);
  return r;
}

}  // namespace

TEST_CASE("item reward is the weighted behavior sum", "[domain]") {
  const std::vector<std::uint8_t> click_like{1, 1, 0};
  CHECK(compute_item_reward(click_like, ml_spec()) == 2.0);
  const std::vector<std::uint8_t> none{0, 0, 0};
  CHECK(compute_item_reward(none, ml_spec()) == 0.0);
  const std::vector<std::uint8_t> hate{0, 0, 0, 0, 0, 0, 1};
  CHECK(compute_item_reward(hate, kr_spec()) == -1.0);
  CHECK(kr_spec().reward_range() == std::pair<double, double>{-1.0, 6.0});
  CHECK(ml_spec().reward_range() == std::pair<double, double>{0.0, 3.0});
  const std::vector<std::uint8_t> short_resp{1, 0};
  CHECK_THROWS_AS(compute_item_reward(short_resp, ml_spec()), ShapeError);
}

TEST_CASE("list reward is the mean item reward", "[domain]") {
  MultiBehaviorResponse r(3, 2);
  r.set(0, 0, 1);
  r.set(1, 0, 1);
  CHECK(compute_list_reward(r, ml_spec()) == 1.0);
  CHECK(compute_list_reward(MultiBehaviorResponse(3, 2), ml_spec()) == 0.0);

  MultiBehaviorResponse full(3, 6);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t k = 0; k < 6; ++k) full.set(b, k, 1);
  CHECK(compute_list_reward(full, ml_spec()) == 3.0);
  CHECK_THROWS_AS(compute_list_reward(MultiBehaviorResponse(2, 2), ml_spec()), ShapeError);
  CHECK_THROWS_AS(r.set(0, 0, 2), ShapeError);
}

TEST_CASE("list reward is symmetric and monotone in responses", "[domain][property]") {
  Rng rng(11);
  const auto spec = kr_spec();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 6);
    auto r = random_response(spec.size(), k, rng);
    const double base = compute_list_reward(r, spec);

    std::vector<std::size_t> perm(k);
    for (std::size_t i = 0; i < k; ++i) perm[i] = i;
    for (std::size_t i = k; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
    MultiBehaviorResponse permuted(spec.size(), k);
    for (std::size_t i = 0; i < k; ++i) permuted.set_column(i, r.column(perm[i]));
    CHECK(compute_list_reward(permuted, spec) == Catch::Approx(base).epsilon(1e-15));

    const std::size_t b = uniform_index(rng, spec.size());
    const std::size_t pos = uniform_index(rng, k);
    auto flipped = r;
    flipped.set(b, pos, 1);
    const double up = compute_list_reward(flipped, spec);
    if (spec.weights[b] > 0) CHECK(up >= base);
    if (spec.weights[b] < 0) CHECK(up <= base);
  }
}

TEST_CASE("behavior spec validation", "[domain]") {
  CHECK_THROWS_AS(BehaviorSpec::uniform({}), ConfigError);
  CHECK_THROWS_AS(BehaviorSpec::uniform({"a", "a"}), ConfigError);
  BehaviorSpec bad{{"a"}, {std::nan("")}};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  BehaviorSpec mismatched{{"a", "b"}, {1.0}};
  CHECK_THROWS_AS(mismatched.validate(), ConfigError);
}

TEST_CASE("slate invariants are enforced", "[domain]") {
  UserRequest req;
  req.candidates = make_candidates({5, 3, 1, 3});
  CHECK(*req.candidates == std::vector<ItemId>{1, 3, 5});
  CHECK_NOTHROW(validate_slate(Slate{{3, 1}}, req, 2));
  CHECK_THROWS_AS(validate_slate(Slate{{3}}, req, 2), PreconditionError);
  CHECK_THROWS_AS(validate_slate(Slate{{3, 3}}, req, 2), PreconditionError);
  CHECK_THROWS_AS(validate_slate(Slate{{3, 2}}, req, 2), PreconditionError);
  UserRequest empty;
  CHECK_THROWS_AS(empty.candidate_items(), PreconditionError);
}
