"""Digamma function (logarithmic derivative of the gamma function)."""

import math

import numpy as np

__all__ = ["digamma"]

# B_{2k} / (2k) for k = 1..6
_ASYMPTOTIC = (1.0 / 12, -1.0 / 120, 1.0 / 252, -1.0 / 240, 1.0 / 132, -691.0 / 32760)
_SHIFT = 10.0


def digamma(x):
    """psi(x) for x > 0, scalars or arrays.

    Arguments below 10 are shifted up with ``psi(x) = psi(x + 1) - 1/x`` and
    the asymptotic series is summed there; absolute error is below 1e-13.
    """
    if isinstance(x, (float, int)) and not isinstance(x, bool):
        return _digamma_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError("digamma is only defined here for x > 0")
    z = arr.copy()
    acc = np.zeros_like(z)
    while True:
        small = z < _SHIFT
        if not np.any(small):
            break
        acc = acc - np.where(small, 1.0 / z, 0.0)
        z = np.where(small, z + 1.0, z)
    inv2 = 1.0 / (z * z)
    series = np.zeros_like(z)
    for coef in reversed(_ASYMPTOTIC):
        series = (series + coef) * inv2
    out = np.log(z) - 0.5 / z - series + acc
    return float(out) if out.ndim == 0 else out


def _digamma_scalar(x):
    if not x > 0:
        raise ValueError("digamma is only defined here for x > 0")
    acc = 0.0
    while x < _SHIFT:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_ASYMPTOTIC):
        series = (series + coef) * inv2
    return math.log(x) - 0.5 / x - series + acc
