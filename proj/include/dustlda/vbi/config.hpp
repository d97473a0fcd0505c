// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_VBI_CONFIG_HPP
#define DUSTLDA_VBI_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "dustlda/error.hpp"
#include "dustlda/optim/lbfgsb.hpp"

namespace dustlda {

/// Whether q(B) is held once for the whole corpus or once per sample.
enum class LambdaScope { shared, per_sample };

inline std::string_view to_string(LambdaScope s) {
  return s == LambdaScope::shared ? "shared" : "per_sample";
}

inline LambdaScope lambda_scope_from_string(std::string_view s) {
  if (s == "shared") return LambdaScope::shared;
  if (s == "per_sample") return LambdaScope::per_sample;
  throw DomainError("unknown lambda_scope '" + std::string(s) + "'");
}

struct MstepConfig {
  double lower = 1e-6;
  double upper = 1e6;
  optim::OptimizerConfig optimizer{};
};

struct FitConfig {
  double known_weight = 150.0;
  double flat_weight = 1.0;
  double estep_tol = 1e-8;
  std::size_t estep_max_iters = 500;
  double outer_tol = 1e-6;
  std::size_t outer_max_iters = 100;
  MstepConfig mstep{};
  std::uint64_t rng_seed = 0;
  LambdaScope lambda_scope = LambdaScope::shared;
  /// Multiply the gamma and lambda increments by 1/N (the variant written in
  /// the pseudo-code). Off by default; those updates are not stationary
  /// points of the bound.
  bool inverse_count_scaling = false;
  /// Worker cap for the E-step and M-step; 0 means hardware concurrency.
  std::size_t threads = 1;

  void validate() const {
    if (!(known_weight > 0.0) || !(flat_weight > 0.0)) {
      throw DomainError("FitConfig: weights must be positive");
    }
    if (!(estep_tol > 0.0) || !(outer_tol > 0.0)) {
      throw DomainError("FitConfig: tolerances must be positive");
    }
    if (estep_max_iters < 1 || outer_max_iters < 1) {
      throw DomainError("FitConfig: iteration limits must be at least 1");
    }
    if (!(mstep.lower > 0.0) || !(mstep.lower < mstep.upper)) {
      throw DomainError("FitConfig: need 0 < mstep.lower < mstep.upper");
    }
    mstep.optimizer.validate();
  }
};

}  // namespace dustlda

#endif  // DUSTLDA_VBI_CONFIG_HPP
