#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "glgat/layers.hpp"
#include "glgat/model.hpp"

namespace glgat {

struct GradcheckOptions {
  double step = 1e-5;         // central-difference h
  double rel_tol = 1e-4;
  double abs_tol = 1e-6;      // applies where max(|analytic|, |numeric|) < small_grad
  double small_grad = 1e-3;
  std::size_t max_entries = 0;  // per tensor; 0 checks every entry
  std::uint64_t seed = 0;       // picks entries when sampling
};

struct TensorGradcheck {
  std::string name;
  std::size_t entries = 0;
  std::size_t checked = 0;
  std::size_t failed = 0;
  double max_rel_error = 0.0;  // over entries judged relatively
  double max_abs_error = 0.0;
  double max_gradient = 0.0;   // largest |analytic| among checked entries
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

struct GradcheckReport {
  std::vector<TensorGradcheck> tensors;
  double seconds = 0.0;

  bool passed() const;
  std::size_t checked() const;
  std::string summary() const;
};

// Returns the loss used for the finite differences of one parameter
// tensor; it may skip work that does not depend on that tensor.
using NumericLossFactory = std::function<std::function<Tensor()>(const NamedTensor&)>;

// Compares d loss / d param from one backward pass against central
// differences, entry by entry. `loss` must rebuild the graph on each call.
GradcheckReport check_gradients(const std::vector<NamedTensor>& params,
                                const std::function<Tensor()>& loss,
                                const GradcheckOptions& options = {},
                                const NumericLossFactory& numeric_loss = {});

// Tiny full-stack instance: N = 6, 12 input steps, H = 2, H_adj = 2,
// H_head = 2, H_PE = 10, two samples with a few masked targets. Targets are
// placed so that no residual sits near the smooth-L1 kink at |d| = 1.
struct GradcheckInstance {
  GlgatModel model;
  Tensor input;
  std::vector<double> target;
  std::vector<unsigned char> mask;

  Tensor loss() const;
};

// Checks every model parameter; finite differences re-run only the stages
// downstream of the perturbed tensor.
GradcheckReport check_instance(const GradcheckInstance& instance, const GradcheckOptions& options = {});

GradcheckInstance make_gradcheck_instance(std::uint64_t seed, Variant variant = Variant::full);

}  // namespace glgat
