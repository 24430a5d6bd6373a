#pragma once

#include <stdexcept>
#include <string>

namespace skd {

// Typed failures so callers and tests can catch precisely what went wrong.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SKD_DEFINE_ERROR(Name)                                            \
    struct Name : Error {                                                 \
        explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
    }

// geometry / neighbor search
SKD_DEFINE_ERROR(DegenerateConfiguration);
SKD_DEFINE_ERROR(EmptyCloud);

// descriptor / PCA
SKD_DEFINE_ERROR(CloudTooSmall);
SKD_DEFINE_ERROR(BadLayerIndex);
SKD_DEFINE_ERROR(ShapeMismatch);
SKD_DEFINE_ERROR(DimensionMismatch);
SKD_DEFINE_ERROR(DegenerateCovariance);

// detector
SKD_DEFINE_ERROR(UnnormalizedSaliency);
SKD_DEFINE_ERROR(KTooLarge);
SKD_DEFINE_ERROR(EmptyHistogram);

// evaluation
SKD_DEFINE_ERROR(EmptyKeypointSet);
SKD_DEFINE_ERROR(TooFewMatches);
SKD_DEFINE_ERROR(EmptyInput);

// io / harness
SKD_DEFINE_ERROR(IOFailure);
SKD_DEFINE_ERROR(MalformedFile);
SKD_DEFINE_ERROR(MalformedHeader);
SKD_DEFINE_ERROR(MalformedRecord);
SKD_DEFINE_ERROR(CheckpointError);
SKD_DEFINE_ERROR(ConfigError);
SKD_DEFINE_ERROR(PipelineError);

#undef SKD_DEFINE_ERROR

}  // namespace skd
