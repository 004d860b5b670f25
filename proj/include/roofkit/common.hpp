#pragma once

#include <stdexcept>
#include <string>

namespace roofkit {

// Validation failures (bad geometry, bad config, corrupt payloads). CLI exit 1.
struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem / serialization failures. CLI exit 2.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace roofkit
