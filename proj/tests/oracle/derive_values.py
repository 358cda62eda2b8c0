"""Independent reference values for the unit tests, computed with mpmath.

Run: python3 tests/oracle/derive_values.py > tests/oracle_values.hpp
"""
import mpmath as mp

mp.mp.dps = 40


def h(p):
    p = mp.mpf(p)
    return -(p * mp.log(p) + (1 - p) * mp.log(1 - p))


def phi(z):
    return mp.ncdf(z)


def qnorm(p):
    return mp.sqrt(2) * mp.erfinv(2 * mp.mpf(p) - 1)


vals = {
    "kPsiAtMuPlusSigma": mp.mpf("0.5") + mp.mpf("0.5") * phi(1),
    "kWeibullAtAlpha": mp.mpf("0.5") + mp.mpf("0.5") * (1 - mp.e ** -1),
    "kWidth2afc": qnorm("0.8") - qnorm("0.2"),
    "kWidthYesNo": qnorm("0.9") - qnorm("0.1"),
    "kLogit002": mp.log(mp.mpf("0.02") / mp.mpf("0.98")),
    "kGaussEntropy3dIdentity": mp.mpf("1.5") * mp.log(2 * mp.pi * mp.e),
    "kGaussEntropy1dUnit": mp.mpf("0.5") * mp.log(2 * mp.pi * mp.e),
    "kBernoulliEntropy075": h("0.75"),
    "kMiTwoSamples": h("0.75") - (h("0.6") + h("0.9")) / 2,
    "kNormalPdf0": 1 / mp.sqrt(2 * mp.pi),
    "kLn2": mp.log(2),
}

print("#pragma once")
print()
print("// Generated by tests/oracle/derive_values.py (mpmath, 40 digits).")
print()
print("namespace oracle {")
for k, v in vals.items():
    print(f"inline constexpr double {k} = {mp.nstr(v, 20)};")
print("}  // namespace oracle")
