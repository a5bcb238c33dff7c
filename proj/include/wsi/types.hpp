#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsi {

template <class T>
using VecT = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <class T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

using Vec = VecT<double>;
using Mat = MatT<double>;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

// Data errors map to CLI exit code 1, numerical failures to exit code 2.
enum class ErrorKind {
    // data
    ConstantColumn,
    DimensionMismatch,
    InvalidArgument,
    InvalidResponse,
    ParseError,
    NonNumericCell,
    MissingResponse,
    EmptyData,
    NotActive,
    // numerical
    SeparationDetected,
    SingularInformation,
    Overflow,
    DegenerateDenominator,
    SingularSystem,
    TooManyFailures,
};

const char* to_string(ErrorKind kind) noexcept;
bool is_numerical(ErrorKind kind) noexcept;

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
    {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace wsi
