// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <Eigen/Dense>
#include <limits>
#include <stdexcept>
#include <string>

namespace otb {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;
using MatRef = Eigen::Ref<const Eigen::MatrixXd>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Base class for every failure surfaced by the library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct NonFiniteInput : Error { using Error::Error; };
struct EmptySampleSet : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct DegreeTooLow : Error { using Error::Error; };
struct UnsupportedPrior : Error { using Error::Error; };
struct DidNotConverge : Error { using Error::Error; };
struct SingularJacobian : Error { using Error::Error; };
struct FormatVersionMismatch : Error { using Error::Error; };
struct CorruptFile : Error { using Error::Error; };
struct InfeasiblePoint : Error { using Error::Error; };
struct TooFewFeasible : Error { using Error::Error; };
struct RequiresNormalizedTarget : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };

inline void require_finite(VecRef x, const char* what) {
  if (!x.allFinite()) throw NonFiniteInput(std::string(what) + ": non-finite input");
}

}  // namespace otb
