#include <doctest.h>

#include "calimatch/error.hpp"
#include "calimatch/selection.hpp"
#include "support.hpp"

using namespace calimatch;
using namespace calimatch::testing;

namespace {

ModelOutputs with_views(std::size_t k, std::vector<double> ps, std::vector<double> qs) {
  const std::size_t n = ps.size() / k;
  ModelOutputs o;
  o.z_f = Matrix(n, k);
  o.z_g = Matrix(n, k);
  o.p = Matrix(n, k, ps);
  o.p_s = Matrix(n, k, std::move(ps));
  o.q = Matrix(n, k, 0.5);
  o.q_s = Matrix(n, k, std::move(qs));
  return o;
}

}  // namespace

TEST_CASE("scores from hand views") {
  auto o = with_views(3, {0.97, 0.02, 0.01}, {0.90, 0.05, 0.05});
  auto s = score(o, 0);
  CHECK(s.s == doctest::Approx(0.8745));
  CHECK(s.c == 0.97);
  CHECK(s.u == doctest::Approx(1 - 0.8745));

  std::vector<double> uni(10, 0.1);
  auto u = score(with_views(10, uni, uni), 0);
  CHECK(u.s == doctest::Approx(0.1));
}

TEST_CASE("gate is strict at both thresholds") {
  // s = 0.5 * 1 + 0.5 * 0 = 0.5 exactly; c = 0.5.
  auto o = with_views(2, {0.5, 0.5}, {1.0, 0.0});
  auto r = select_batch(o, 0.5, 0.4);
  CHECK(r[0].s == 0.5);
  CHECK_FALSE(r[0].selected);
  auto r2 = select_batch(o, 0.4, 0.5);
  CHECK_FALSE(r2[0].selected);
  auto r3 = select_batch(o, 0.49, 0.49);
  CHECK(r3[0].selected);
  CHECK_THROWS_AS(select_batch(o, 0.0, 0.5), ConfigError);
  CHECK_THROWS_AS(select_batch(o, 0.5, 1.0), ConfigError);
}

TEST_CASE("confidence-only gate ignores the seen score") {
  auto o = with_views(2, {0.99, 0.01}, {0.0, 1.0});
  CHECK_FALSE(select_batch(o, SelectionGate{0.5, 0.95, true})[0].selected);
  CHECK(select_batch(o, SelectionGate{0.5, 0.95, false})[0].selected);
}

TEST_CASE("subset property over a threshold grid") {
  std::mt19937_64 rng(41);
  auto pt = random_point(2000, 6, rng);
  auto out = pt.outputs();
  const double grid[] = {0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95, 0.99};
  for (double a1 : grid)
    for (double b1 : grid)
      for (double a2 : grid)
        for (double b2 : grid) {
          if (a2 < a1 || b2 < b1) continue;
          auto lo = selection_mask(select_batch(out, a1, b1));
          auto hi = selection_mask(select_batch(out, a2, b2));
          for (std::size_t i = 0; i < lo.size(); ++i)
            if (hi[i]) REQUIRE(lo[i]);
        }
}

TEST_CASE("serial and parallel selection agree") {
  std::mt19937_64 rng(42);
  auto out = random_point(999, 5, rng).outputs();
  auto a = select_batch(out, SelectionGate{0.3, 0.6, true}, Exec::serial);
  auto b = select_batch(out, SelectionGate{0.3, 0.6, true}, Exec::parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].s == b[i].s);
    CHECK(a[i].selected == b[i].selected);
    CHECK(a[i].pseudo_label == b[i].pseudo_label);
  }
}

TEST_CASE("diagnostics from a hand-built batch") {
  std::vector<SelectionRecord> rec(6);
  // selected: 0 (seen, right), 1 (seen, wrong), 2 (unseen); 3..5 rejected.
  rec[0] = {0.9, 0.99, 0.1, 2, true};
  rec[1] = {0.9, 0.99, 0.1, 1, true};
  rec[2] = {0.9, 0.97, 0.1, 0, true};
  rec[3] = {0.2, 0.96, 0.8, 0, false};
  rec[4] = {0.2, 0.50, 0.8, 0, false};
  rec[5] = {0.8, 0.50, 0.2, 1, false};
  HiddenTruth truth{{2, 0, 7, 8, 1, 1}, {true, true, false, false, true, true}};
  auto d = selection_diagnostics(rec, truth);
  CHECK(d.total == 6);
  CHECK(d.selected == 3);
  CHECK(*d.pseudo_label_accuracy == doctest::Approx(0.5));
  CHECK(*d.seen_selected_fraction == doctest::Approx(2.0 / 4.0));
  CHECK(*d.unseen_in_confident == doctest::Approx(2.0 / 4.0));
  CHECK(*d.unseen_in_confident_low_ood == doctest::Approx(1.0 / 3.0));
  CHECK(*d.selection_error == doctest::Approx(2.0 / 3.0));
  CHECK(*selection_error_rate(rec, truth) == doctest::Approx(2.0 / 3.0));

  std::vector<SelectionRecord> none(2);
  HiddenTruth t2{{0, 0}, {true, true}};
  CHECK_FALSE(selection_error_rate(none, t2).has_value());
}
