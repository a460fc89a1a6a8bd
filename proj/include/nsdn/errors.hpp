#pragma once

#include <stdexcept>
#include <string>

namespace nsdn {

// Malformed input: wrong shapes, orders, ranges, file contents.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Least-squares design matrix too ill-conditioned to fit.
class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, long count, int order, double condition)
      : std::runtime_error(what), count_(count), order_(order), condition_(condition) {}

  long count() const { return count_; }
  int order() const { return order_; }
  double condition() const { return condition_; }

 private:
  long count_;
  int order_;
  double condition_;
};

// ACC is undefined when either argument has no energy above degree 0.
class UndefinedAccError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nsdn
