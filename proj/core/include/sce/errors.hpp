#pragma once

#include <stdexcept>
#include <string>

namespace sce {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define SCE_DEFINE_ERROR(Name)            \
    class Name : public Error {           \
    public:                               \
        using Error::Error;               \
    }

SCE_DEFINE_ERROR(SingularMetric);
SCE_DEFINE_ERROR(AtlasMismatch);
SCE_DEFINE_ERROR(NonPositiveDensity);
SCE_DEFINE_ERROR(CoverageFailure);
SCE_DEFINE_ERROR(EpsilonTooLarge);
SCE_DEFINE_ERROR(SupportViolation);
SCE_DEFINE_ERROR(InsufficientPoints);
SCE_DEFINE_ERROR(CFLViolation);
SCE_DEFINE_ERROR(NonFiniteState);
SCE_DEFINE_ERROR(InequalityViolation);
SCE_DEFINE_ERROR(UnboundedRenormFunction);
SCE_DEFINE_ERROR(MCBudgetTooSmall);
SCE_DEFINE_ERROR(ConfigInvalid);
SCE_DEFINE_ERROR(CheckFailed);
SCE_DEFINE_ERROR(MissingArtifacts);
SCE_DEFINE_ERROR(FixtureParseError);

#undef SCE_DEFINE_ERROR

}  // namespace sce
