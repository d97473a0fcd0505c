// Apache License, Version 2.0, refer to LICENSE.txt

#ifndef DUSTLDA_ERROR_HPP
#define DUSTLDA_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dustlda {

/// Argument outside the domain of a special function or distribution.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A computation produced a non-finite value.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t iteration, std::string block)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ", block " +
                           block + ")"),
        iteration_(iteration),
        block_(std::move(block)) {}

  std::size_t iteration() const noexcept { return iteration_; }
  const std::string& block() const noexcept { return block_; }

 private:
  std::size_t iteration_;
  std::string block_;
};

/// Malformed input data (CSV rows, labels, counts).
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an API precondition (e.g. optimising a frozen row).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dustlda

#endif  // DUSTLDA_ERROR_HPP
