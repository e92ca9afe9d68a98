#pragma once

#include <stdexcept>
#include <string>

namespace dtk {

/// Base of every error the toolkit raises. `what()` is prefixed with the
/// category ("shape error: ...") so diagnostics are greppable.
class Error : public std::runtime_error {
 public:
  Error(const std::string& category, const std::string& message)
      : std::runtime_error(category + ": " + message), detail_(message) {}

  /// The message without its category prefix.
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
};

#define DTK_DEFINE_ERROR(Name, category)                                \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& message) : Error(category, message) {} \
  };

DTK_DEFINE_ERROR(ShapeError, "shape error")
DTK_DEFINE_ERROR(NumericError, "numeric error")
DTK_DEFINE_ERROR(FormatError, "format error")
DTK_DEFINE_ERROR(ConfigError, "config error")
DTK_DEFINE_ERROR(MappingError, "mapping error")
DTK_DEFINE_ERROR(StateError, "state error")
DTK_DEFINE_ERROR(LookupError, "lookup error")
DTK_DEFINE_ERROR(InputError, "input error")

#undef DTK_DEFINE_ERROR

}  // namespace dtk
