#include "glgat/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "glgat/adjacency.hpp"
#include "glgat/error.hpp"
#include "glgat/pairwise_encoding.hpp"

namespace glgat {

bool GradcheckReport::passed() const {
  return std::all_of(tensors.begin(), tensors.end(), [](const TensorGradcheck& t) { return t.failed == 0; });
}

std::size_t GradcheckReport::checked() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.checked;
  return n;
}

std::string GradcheckReport::summary() const {
  std::string out;
  char buf[256];
  for (const auto& t : tensors) {
    std::snprintf(buf, sizeof buf, "%-24s %6zu/%-6zu |g|max %.2e  rel %.2e  abs %.2e  %s\n",
                  t.name.c_str(), t.checked, t.entries, t.max_gradient, t.max_rel_error, t.max_abs_error,
                  t.failed ? "FAIL" : "ok");
    out += buf;
    if (t.failed) {
      std::snprintf(buf, sizeof buf, "    %zu failing entries; worst at %zu: analytic %.10e numeric %.10e\n",
                    t.failed, t.worst_index, t.worst_analytic, t.worst_numeric);
      out += buf;
    }
  }
  std::snprintf(buf, sizeof buf, "%zu entries in %.1fs: %s\n", checked(), seconds, passed() ? "PASS" : "FAIL");
  return out + buf;
}

GradcheckReport check_gradients(const std::vector<NamedTensor>& params,
                                const std::function<Tensor()>& loss,
                                const GradcheckOptions& options,
                                const NumericLossFactory& numeric_loss) {
  const auto started = std::chrono::steady_clock::now();
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    if (p.tensor.has_grad()) {
      analytic.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    } else {
      analytic.emplace_back(p.tensor.numel(), 0.0);
    }
  }

  NoGradGuard no_grad;
  std::mt19937_64 rng(options.seed);
  GradcheckReport report;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor t = params[k].tensor;
    TensorGradcheck r;
    r.name = params[k].name;
    r.entries = t.numel();
    std::vector<std::size_t> idx(r.entries);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries > 0 && idx.size() > options.max_entries) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(options.max_entries);
      std::sort(idx.begin(), idx.end());
    }
    const std::function<Tensor()> f = numeric_loss ? numeric_loss(params[k]) : loss;
    double worst = -1.0;
    for (std::size_t i : idx) {
      auto values = t.mutable_values();
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = f().item();
      t.mutable_values()[i] = saved - options.step;
      const double down = f().item();
      t.mutable_values()[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double scale = std::max(std::abs(a), std::abs(numeric));
      bool ok;
      double badness;
      if (scale < options.small_grad) {
        ok = abs_err < options.abs_tol;
        badness = abs_err / options.abs_tol;
      } else {
        const double rel = abs_err / scale;
        r.max_rel_error = std::max(r.max_rel_error, rel);
        ok = rel < options.rel_tol;
        badness = rel / options.rel_tol;
      }
      r.max_abs_error = std::max(r.max_abs_error, abs_err);
      r.max_gradient = std::max(r.max_gradient, std::abs(a));
      ++r.checked;
      if (!ok) ++r.failed;
      if (badness > worst) {
        worst = badness;
        r.worst_index = i;
        r.worst_analytic = a;
        r.worst_numeric = numeric;
      }
    }
    report.tensors.push_back(r);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

// ---- tiny model instance -------------------------------------------------------

namespace {

constexpr std::size_t kCheckVertices = 6;
constexpr std::size_t kCheckBatch = 2;

Matrix random_adjacency(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = u(rng);
      m(i, j) = i == j ? 1.0 : (v < 0.35 ? 0.0 : v);
    }
  }
  return m;
}

}  // namespace

Tensor GradcheckInstance::loss() const { return batch_smooth_l1(model.forward(input), target, mask); }

GradcheckReport check_instance(const GradcheckInstance& instance, const GradcheckOptions& options) {
  const GlgatModel& model = instance.model;
  const auto factory = [&](const NamedTensor& p) -> std::function<Tensor()> {
    const std::size_t stage = model.parameter_stage(p.name);
    Tensor activation;
    {
      NoGradGuard no_grad;
      activation = model.stage_input(instance.input, stage);
    }
    return [&instance, &model, stage, activation] {
      return batch_smooth_l1(model.forward_from(stage, activation), instance.target, instance.mask);
    };
  };
  return check_gradients(model.parameters(), [&] { return instance.loss(); }, options, factory);
}

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, Variant variant) {
  std::mt19937_64 rng(derive_seed(seed, 0x6C));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t n = kCheckVertices;

  SensorGraph graph;
  for (std::size_t i = 0; i < n; ++i) {
    graph.ids.push_back("V" + std::to_string(i));
    graph.coordinates.push_back({10.0 * u(rng), 10.0 * u(rng)});
  }
  ModelConfig config;
  config.vertices = n;
  config.input_channels = 3;
  config.adjacency = 2;
  config.heads = 2;
  config.temporal_head_size = 2;
  config.deep_head_size = 2;
  config = configure_ablation(config, variant);

  ModelBuffers buffers;
  const Matrix up = random_adjacency(n, rng);
  const Matrix down = random_adjacency(n, rng);
  const Matrix conn = random_adjacency(n, rng);
  buffers.adjacency = adjacency_for_variant(variant, up, down, conn);
  buffers.pairwise = build_pairwise_encoding(graph);
  buffers.target_mean = 0.5;
  buffers.target_std = 2.0;

  GlgatModel model(config, buffers, derive_seed(seed, 1));
  std::vector<double> x(kCheckBatch * kInputSteps * n * config.input_channels);
  for (double& v : x) v = normal(rng);
  Tensor input = Tensor::from({kCheckBatch, kInputSteps, n, config.input_channels}, std::move(x));

  std::vector<double> pred;
  {
    NoGradGuard no_grad;
    const Tensor p = model.forward(input);
    pred.assign(p.values().begin(), p.values().end());
  }
  // Residuals drawn from |d| in [0.1, 0.8] or [1.2, 3] keep every element
  // well inside one smooth-L1 branch under an h-sized perturbation.
  std::vector<double> target(pred.size());
  std::vector<unsigned char> mask(pred.size(), 1);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double mag = u(rng) < 0.5 ? 0.1 + 0.7 * u(rng) : 1.2 + 1.8 * u(rng);
    const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
    target[i] = pred[i] - sign * mag;
    if (u(rng) < 0.1) mask[i] = 0;
  }
  return GradcheckInstance{std::move(model), std::move(input), std::move(target), std::move(mask)};
}

}  // namespace glgat
