#pragma once
#include <stdexcept>
#include <string>

namespace bst {

// Base of every error thrown by the library. The CLI maps ConfigError and
// InvalidArgument to exit code 2 and everything else to exit code 3.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BST_DEFINE_ERROR(Name)                      \
    class Name : public Error {                     \
    public:                                         \
        using Error::Error;                         \
    }

BST_DEFINE_ERROR(InvalidArgument);
BST_DEFINE_ERROR(DomainError);
BST_DEFINE_ERROR(SingularityError);
BST_DEFINE_ERROR(OutOfTunnel);
BST_DEFINE_ERROR(DegenerateGeometry);
BST_DEFINE_ERROR(EmptySpectrum);
BST_DEFINE_ERROR(ResolutionError);
BST_DEFINE_ERROR(InvalidCurve);
BST_DEFINE_ERROR(ConvergenceError);
BST_DEFINE_ERROR(ExcludedFrequency);
BST_DEFINE_ERROR(DesignInfeasible);
BST_DEFINE_ERROR(InversionImpossible);
BST_DEFINE_ERROR(DegenerateData);
BST_DEFINE_ERROR(UndefinedScore);
BST_DEFINE_ERROR(SizeLimit);
BST_DEFINE_ERROR(ConfigError);

#undef BST_DEFINE_ERROR

}  // namespace bst
