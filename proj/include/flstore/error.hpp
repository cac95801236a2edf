#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flstore {

enum class Errc {
  InvalidArgument,
  MissingScopeClient,
  ClassMismatch,
  IoError,
  NotFound,
  CapacityExceeded,
  CapacityExhausted,
  DeadInstance,
  NotResident,
  MissingData,
  DataUnavailable,
  UnknownFunction,
  UnknownRequest,
  ZeroVector,
  ConfigError,
  ParseError,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace flstore
