#pragma once

#include <stdexcept>
#include <string>

namespace kmmd {

/// Invalid input data or a violated precondition (bad file, duplicate id, m < 2, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Embedding endpoint failure that survived all retries.
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kmmd
