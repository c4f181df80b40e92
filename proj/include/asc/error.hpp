#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace asc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operands of incompatible shape, e.g. states with different memory sizes.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class ExecutionFault : public Error {
 public:
  ExecutionFault(std::uint64_t ip, std::uint64_t address, const std::string& what)
      : Error(what), ip_(ip), address_(address) {}

  std::uint64_t ip() const { return ip_; }
  std::uint64_t address() const { return address_; }

 private:
  std::uint64_t ip_;
  std::uint64_t address_;
};

}  // namespace asc
