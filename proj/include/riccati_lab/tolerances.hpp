#pragma once

// Default tolerances and thresholds, collected in one place. Values relative
// to operator norms are documented as such at the point of use.

namespace riccati_lab::tol {

// numkernel
inline constexpr double kSpectralReconstruction = 1e-10;  // relative to ||A||
inline constexpr double kBasisConditionMax = 1e8;         // fractional powers
inline constexpr double kSpectralExpConditionMax = 1e3;   // exp via eigenbasis
inline constexpr double kFractionalInverse = 1e-10;
inline constexpr double kLyapunovResidual = 1e-10;  // relative

// dre / are
inline constexpr double kSymmetry = 1e-12;
inline constexpr double kPsdFloor = -1e-10;
inline constexpr double kBlowUp = 1e12;
inline constexpr double kAreResidual = 1e-9;  // relative to ||A||*||P|| + ||R'R||
inline constexpr double kImaginaryAxis = 1e-10;  // relative to ||H||
inline constexpr int kNewtonMaxIterations = 100;

// infinite-horizon truncation: M e^{-omega T} <= kTruncation
inline constexpr double kTruncation = 1e-6;

// semiflow defaults
inline constexpr int kDefaultProbes = 64;
inline constexpr int kGradedLevels = 12;
inline constexpr double kGradedRatio = 0.5;
inline constexpr int kGradedPointsPerLevel = 8;

}  // namespace riccati_lab::tol
