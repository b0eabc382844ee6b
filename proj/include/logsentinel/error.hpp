#pragma once

#include <stdexcept>
#include <string>

namespace logsentinel {

/// Raised for unrecoverable data or I/O problems (unreadable input, corrupt
/// checkpoint, non-finite training loss). Precondition violations on
/// arguments use std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace logsentinel
