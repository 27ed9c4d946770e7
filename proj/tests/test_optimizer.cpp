#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>

#include "test_util.hpp"
#include "vnlg/checkpoint.hpp"
#include "vnlg/optimizer.hpp"

using namespace vnlg;
using Catch::Approx;

TEST_CASE("adam leaves parameters with zero gradients unchanged") {
  ParameterStore store(1);
  auto& p = store.create("p", {3}, Init::xavier);
  const auto before = p.value().values;
  Adam adam;
  for (int i = 0; i < 10; ++i) adam.step(store, 1e-3);
  REQUIRE(p.value().values == before);
}

TEST_CASE("first adam step on unit gradient") {
  ParameterStore store(1);
  auto& p = store.create("p", {1}, Init::zeros);
  p.value().values[0] = 0.5;
  p.grad().values[0] = 1.0;
  Adam adam;
  adam.step(store, 1e-3);
  // bias correction makes mhat = vhat = 1 at t=1
  REQUIRE(p.value().values[0] == Approx(0.5 - 1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
  REQUIRE(p.grad().values[0] == 0.0);  // grads zeroed after the step
}

TEST_CASE("identical parameters stay identical under adam") {
  ParameterStore store(5);
  auto& a = store.create("a", {4}, Init::zeros);
  auto& b = store.create("b", {4}, Init::zeros);
  Rng rng(9);
  Adam adam;
  for (int step = 0; step < 25; ++step) {
    for (std::size_t i = 0; i < 4; ++i) {
      const double g = rng.normal();
      a.grad().values[i] = g;
      b.grad().values[i] = g;
    }
    adam.step(store, 1e-2);
    REQUIRE(a.value().values == b.value().values);
  }
}

TEST_CASE("adam aborts on non-finite gradient with the parameter name") {
  ParameterStore store(1);
  auto& p = store.create("culprit", {2}, Init::zeros);
  p.grad().values[1] = std::nan("");
  Adam adam;
  REQUIRE_THROWS_WITH(adam.step(store, 1e-3),
                      Catch::Matchers::ContainsSubstring("culprit"));
}

TEST_CASE("learning rate schedule") {
  REQUIRE(lr_schedule(1) == Approx(1e-3));
  REQUIRE(lr_schedule(3) == Approx(1e-3));
  REQUIRE(lr_schedule(5) == Approx(1e-3));
  REQUIRE(lr_schedule(6) == Approx(0.00095));
  REQUIRE(lr_schedule(7) == Approx(0.0009025));
  REQUIRE_THROWS_AS(lr_schedule(0), std::invalid_argument);
}

TEST_CASE("global norm clipping") {
  ParameterStore store(1);
  auto& p = store.create("p", {2}, Init::zeros);
  p.grad().values = {3.0, 4.0};  // norm 5
  REQUIRE(clip_global_norm(store, 10.0) == Approx(5.0));
  REQUIRE(p.grad().values[0] == Approx(3.0));

  p.grad().values = {6.0, 8.0};  // norm 10
  REQUIRE(clip_global_norm(store, 5.0) == Approx(10.0));
  const double norm_after =
      std::sqrt(p.grad().values[0] * p.grad().values[0] +
                p.grad().values[1] * p.grad().values[1]);
  REQUIRE(norm_after == Approx(5.0));
}

TEST_CASE("dropout identities") {
  Rng rng(5);
  ad::Var x = ad::constant(test::random_tensor(rng, {64}));
  REQUIRE(ad::dropout(x, 1.0, rng, true).node() == x.node());
  REQUIRE(ad::dropout(x, 0.4, rng, false).node() == x.node());
  REQUIRE_THROWS_AS(ad::dropout(x, 0.0, rng, true), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::dropout(x, 1.2, rng, true), std::invalid_argument);
}

TEST_CASE("inverted dropout preserves the mean") {
  Rng rng(71);
  const std::size_t n = 1000000;
  Tensor big({n});
  for (auto& v : big.values) v = 1.0 + rng.uniform();
  double mean_in = 0.0;
  for (double v : big.values) mean_in += v;
  mean_in /= static_cast<double>(n);

  ad::Var out = ad::dropout(ad::constant(std::move(big)), 0.7, rng, true);
  double mean_out = 0.0;
  for (double v : out.value().values) mean_out += v;
  mean_out /= static_cast<double>(n);
  REQUIRE(std::abs(mean_out - mean_in) / mean_in < 0.01);
}

TEST_CASE("dropout gradient matches finite differences for a fixed mask") {
  ParameterStore store(2);
  auto& p = store.create("p", {6}, Init::xavier);
  REQUIRE(test::gradient_check(store, [&] {
            Rng rng(123);  // same mask on every rebuild
            return ad::sum(ad::square(ad::dropout(p.var(), 0.7, rng, true)));
          }) < 1e-4);
}

TEST_CASE("per-name initialization is independent of creation order") {
  ParameterStore s1(77);
  auto& a1 = s1.create("shared.w", {3, 3});
  s1.create("extra.w", {5, 5});

  ParameterStore s2(77);
  s2.create("other.m", {2, 2});
  auto& a2 = s2.create("shared.w", {3, 3});

  REQUIRE(a1.value().values == a2.value().values);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  namespace fs = std::filesystem;
  const auto path = fs::temp_directory_path() / "vnlg_ckpt_test.bin";

  ParameterStore store(13);
  store.create("w1", {7, 3});
  store.create("b1", {7});
  store.create("emb", {11, 4});
  // exercise values that stress text formats
  store.at(0).value().values[0] = 1.0 / 3.0;
  store.at(0).value().values[1] = 1e-308;
  save_checkpoint(path.string(), store, 0xabcdef);

  ParameterStore restored(99);  // different seed: loaded values must win
  restored.create("w1", {7, 3});
  restored.create("b1", {7});
  restored.create("emb", {11, 4});
  const auto vocab_hash = load_checkpoint(path.string(), restored);
  REQUIRE(vocab_hash == 0xabcdef);
  for (std::size_t i = 0; i < store.size(); ++i)
    REQUIRE(restored.at(i).value().values == store.at(i).value().values);

  ParameterStore wrong(1);
  wrong.create("w1", {7, 3});
  REQUIRE_THROWS(load_checkpoint(path.string(), wrong));  // count mismatch

  ParameterStore wrong_shape(1);
  wrong_shape.create("w1", {3, 7});
  wrong_shape.create("b1", {7});
  wrong_shape.create("emb", {11, 4});
  REQUIRE_THROWS(load_checkpoint(path.string(), wrong_shape));

  fs::remove(path);
}
