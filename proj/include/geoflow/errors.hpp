#pragma once

#include <stdexcept>
#include <string>

namespace geoflow {

// Base class for every error raised by the library. `kind()` is a short
// stable tag used by the CLI to pick an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define GEOFLOW_DEFINE_ERROR(Name, tag)                                 \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(tag, what) {}        \
  };

GEOFLOW_DEFINE_ERROR(TypeError, "type")
GEOFLOW_DEFINE_ERROR(ShapeError, "shape")
GEOFLOW_DEFINE_ERROR(FormatError, "format")
GEOFLOW_DEFINE_ERROR(DomainError, "domain")
GEOFLOW_DEFINE_ERROR(ConfigError, "config")
GEOFLOW_DEFINE_ERROR(InputError, "input")
GEOFLOW_DEFINE_ERROR(SpecError, "spec")
GEOFLOW_DEFINE_ERROR(EmptyMaskError, "empty_mask")
GEOFLOW_DEFINE_ERROR(NumericError, "numeric")
GEOFLOW_DEFINE_ERROR(TrainingError, "training")
GEOFLOW_DEFINE_ERROR(InsufficientDataError, "insufficient_data")
GEOFLOW_DEFINE_ERROR(DegeneracyError, "degeneracy")

#undef GEOFLOW_DEFINE_ERROR

}  // namespace geoflow
