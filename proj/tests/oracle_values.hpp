#pragma once

// Generated by tests/oracle/derive_values.py (mpmath, 40 digits).

namespace oracle {
inline constexpr double kPsiAtMuPlusSigma = 0.92067237303427147429;
inline constexpr double kWeibullAtAlpha = 0.8160602794142788392;
inline constexpr double kWidth2afc = 1.6832424671458284104;
inline constexpr double kWidthYesNo = 2.5631031310892009339;
inline constexpr double kLogit002 = -3.8918202981106266102;
inline constexpr double kGaussEntropy3dIdentity = 4.2568155996140182253;
inline constexpr double kGaussEntropy1dUnit = 1.4189385332046727418;
inline constexpr double kBernoulliEntropy075 = 0.56233514461880835029;
inline constexpr double kMiTwoSamples = 0.063287824418456012536;
inline constexpr double kNormalPdf0 = 0.39894228040143267794;
inline constexpr double kLn2 = 0.69314718055994530942;
}  // namespace oracle
