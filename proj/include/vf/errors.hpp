#ifndef VF_ERRORS_HPP
#define VF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace vf {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define VF_DEFINE_ERROR(NAME) \
  struct NAME : Error {       \
    using Error::Error;       \
  }

// volume-core
VF_DEFINE_ERROR(InvalidVolume);
VF_DEFINE_ERROR(RangeMismatch);
VF_DEFINE_ERROR(DegenerateNormalizer);
VF_DEFINE_ERROR(EmptyMask);
VF_DEFINE_ERROR(DimMismatch);
VF_DEFINE_ERROR(FormatError);
VF_DEFINE_ERROR(TruncatedFile);

// tensor-autodiff
VF_DEFINE_ERROR(ShapeError);
VF_DEFINE_ERROR(DegenerateInstance);
VF_DEFINE_ERROR(InvalidRate);
VF_DEFINE_ERROR(NotScalar);

// losses-metrics
VF_DEFINE_ERROR(WindowTooLarge);
VF_DEFINE_ERROR(EmptyReport);

// maskgen / patch / training / cli
VF_DEFINE_ERROR(MaskGenFailure);
VF_DEFINE_ERROR(BrainTooLarge);
VF_DEFINE_ERROR(SplitError);
VF_DEFINE_ERROR(ConfigError);
VF_DEFINE_ERROR(CorruptCheckpoint);

#undef VF_DEFINE_ERROR

}  // namespace vf

#endif  // VF_ERRORS_HPP
