#include <doctest.h>

#include "c4d/objectives.hpp"
#include "test_util.hpp"

using namespace c4d;
using namespace c4d::testutil;

namespace {

std::vector<double> analytic_grad(const GradScene& gs, int which) {
  const ParamLayout lay(gs.state);
  std::vector<double> g(lay.total(), 0.0);
  switch (which) {
    case 0: loss_ga(gs.state, gs.pairs, gs.graph, 1.0, &g); break;
    case 1: loss_cma(gs.state, gs.flows, gs.masks, gs.graph, 1.0, &g); break;
    case 2: loss_cts(gs.state, 1.0, &g); break;
    case 3: loss_pts(gs.state, gs.targets, 1.0, &g); break;
  }
  return g;
}

double eval_term(const GradScene& gs, const SceneEstimate& s, int which) {
  switch (which) {
    case 0: return loss_ga(s, gs.pairs, gs.graph, 1.0, nullptr);
    case 1: return loss_cma(s, gs.flows, gs.masks, gs.graph, 1.0, nullptr);
    case 2: return loss_cts(s, 1.0, nullptr);
    case 3: return loss_pts(s, gs.targets, 1.0, nullptr);
  }
  return 0.0;
}

}  // namespace

TEST_CASE("analytic gradients match central finite differences") {
  const char* names[] = {"alignment", "motion", "trajectory-smooth-pose",
                         "trajectory-smooth-depth"};
  const GradScene gs = random_grad_scene(7);
  for (int which = 0; which < 4; ++which) {
    CAPTURE(names[which]);
    const std::vector<double> a = analytic_grad(gs, which);
    const std::vector<double> fd = finite_diff(
        gs.state, [&](const SceneEstimate& s) { return eval_term(gs, s, which); });
    CHECK(max_rel_error(a, fd) < 1e-4);
  }
}

TEST_CASE("weighted total gradient is the weighted sum of term gradients") {
  const GradScene gs = random_grad_scene(11);
  ObjectiveData data;
  data.pairs = &gs.pairs;
  data.flows = &gs.flows;
  data.masks = &gs.masks;
  data.graph = &gs.graph;
  data.pts_targets = &gs.targets;
  LossWeights w;
  w.ga = 1.0;
  w.cma = 0.01;
  w.cts = 0.01;
  w.pts = 0.5;
  const LossReport rep = total_loss(gs.state, data, w, true);
  CHECK(rep.total == doctest::Approx(w.ga * rep.ga + w.cma * rep.cma +
                                     w.cts * rep.cts + w.pts * rep.pts)
                         .epsilon(1e-12));
  // The combined gradient equals the weighted sum of per-term gradients;
  // finite differences would only add cancellation noise here.
  const ParamLayout lay(gs.state);
  std::vector<double> want(lay.total(), 0.0);
  const double weights[] = {w.ga, w.cma, w.cts, w.pts};
  for (int which = 0; which < 4; ++which) {
    const std::vector<double> g = analytic_grad(gs, which);
    for (size_t i = 0; i < want.size(); ++i) want[i] += weights[which] * g[i];
  }
  REQUIRE(rep.grad.size() == want.size());
  for (size_t i = 0; i < want.size(); ++i)
    CHECK(rep.grad[i] == doctest::Approx(want[i]).epsilon(1e-9).scale(1.0));
}
