#pragma once

#include <stdexcept>
#include <string>

namespace triplekit {

// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
  explicit Error(std::string message) : std::runtime_error(std::move(message)) {}
};

} // namespace triplekit
