#include "hypnorm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "hypnorm/error.hpp"

namespace hypnorm::ad {

namespace {

const Tensor& bound(const Bindings& bindings, const std::string& name) {
  const Tensor* t = bindings.find(name);
  if (!t) throw InvalidArgument("gradient check: input '" + name + "' is not bound");
  return *t;
}

}  // namespace

GradCheckReport finite_diff_check(const Graph& graph, const Bindings& bindings, NodeId seed,
                                  const std::string& input, const GradCheckOptions& options) {
  if (!(options.epsilon > 0.0)) throw InvalidArgument("gradient check epsilon must be positive");
  GradCheckReport report;
  report.input = input;

  const Evaluation base = forward(graph, bindings, options.forward);
  const auto grads = backward(graph, base, seed);
  auto it = grads.find(input);
  if (it == grads.end()) throw InvalidArgument("gradient check: '" + input + "' is not a trainable input");
  const Tensor& analytic = it->second;

  Tensor probe = bound(bindings, input);
  Bindings perturbed = bindings;
  perturbed.bind(input, probe);

  auto eval_at = [&](std::size_t i, double x) -> std::optional<double> {
    probe[i] = x;
    try {
      const Evaluation ev = forward(graph, perturbed, options.forward);
      const double v = ev.value(seed).item();
      if (!std::isfinite(v)) return std::nullopt;
      return v;
    } catch (const NumericError&) {
      return std::nullopt;
    }
  };

  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double x0 = probe[i];
    const auto fp = eval_at(i, x0 + options.epsilon);
    const auto fm = eval_at(i, x0 - options.epsilon);
    probe[i] = x0;
    if (!fp || !fm) {
      report.failed_index = i;
      report.message = "non-finite evaluation at coordinate " + std::to_string(i);
      report.passed = false;
      return report;
    }
    CoordinateCheck c;
    c.index = i;
    c.analytic = analytic[i];
    c.numeric = (*fp - *fm) / (2.0 * options.epsilon);
    const double denom = std::max({std::fabs(c.analytic), std::fabs(c.numeric), options.floor});
    c.rel_error = std::fabs(c.analytic - c.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    report.coords.push_back(c);
  }
  report.passed = report.max_rel_error <= options.tolerance;
  if (!report.passed) report.message = "max relative error " + std::to_string(report.max_rel_error);
  return report;
}

std::vector<GradCheckReport> finite_diff_check_all(const Graph& graph, const Bindings& bindings, NodeId seed,
                                                   const GradCheckOptions& options) {
  std::vector<GradCheckReport> out;
  for (NodeId id : graph.trainable_inputs()) {
    out.push_back(finite_diff_check(graph, bindings, seed, graph.node(id).name, options));
  }
  return out;
}

}  // namespace hypnorm::ad
