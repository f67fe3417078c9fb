"""Log-gamma, digamma and trigamma in double precision.

All three use the same scheme: shift the argument above a threshold with the
upward recurrences

    lnGamma(x) = lnGamma(x + 1) - ln(x)
    psi(x)     = psi(x + 1)     - 1/x
    psi1(x)    = psi1(x + 1)    + 1/x^2

then evaluate a Stirling-type asymptotic series.  With threshold 6.5 and
Bernoulli terms through B16 the series truncation error stays below 1e-13
relative, so the absolute error over [1e-3, 1e3] is well under 1e-10.

Float arguments take a scalar loop; arrays use a fixed-shift broadcast
formulation (the recurrences hold for every x > 0, so shifting all entries
by 8 needs no masking and the correction collapses into one product or
reciprocal sum).  The loss stack hits these on small blocks thousands of
times per epoch, so both paths avoid per-element numpy dispatch.

Functions accept floats or numpy arrays; scalars come back as floats.
Arguments must be strictly positive.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

_SHIFT_THRESHOLD = 6.5
_HALF_LOG_TWO_PI = 0.9189385332046727417803297364056176

# Stirling series for lnGamma: sum B_{2k} / (2k (2k-1) x^{2k-1}), k = 1..8.
_LGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
    -3617.0 / 122400.0,
)

# Asymptotic series for psi: ln x - 1/(2x) - sum B_{2k} / (2k x^{2k}).
_DIGAMMA_COEFFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# Asymptotic series for psi': 1/x + 1/(2x^2) + sum B_{2k} / x^{2k+1}.
_TRIGAMMA_COEFFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


_LG8, _LG7, _LG6, _LG5, _LG4, _LG3, _LG2, _LG1 = reversed(_LGAMMA_COEFFS)
_DG7, _DG6, _DG5, _DG4, _DG3, _DG2, _DG1 = reversed(_DIGAMMA_COEFFS)
_TG7, _TG6, _TG5, _TG4, _TG3, _TG2, _TG1 = reversed(_TRIGAMMA_COEFFS)


def _lgamma_scalar(x):
    corr = 0.0
    while x < _SHIFT_THRESHOLD:
        corr += math.log(x)
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    s = ((((((_LG8 * r2 + _LG7) * r2 + _LG6) * r2 + _LG5) * r2 + _LG4) * r2 + _LG3) * r2 + _LG2) * r2 + _LG1
    return (x - 0.5) * math.log(x) - x + _HALF_LOG_TWO_PI + s * r - corr


def _digamma_scalar(x):
    corr = 0.0
    while x < _SHIFT_THRESHOLD:
        corr += 1.0 / x
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    s = (((((_DG7 * r2 + _DG6) * r2 + _DG5) * r2 + _DG4) * r2 + _DG3) * r2 + _DG2) * r2 + _DG1
    return math.log(x) - 0.5 * r - s * r2 - corr


def _trigamma_scalar(x):
    corr = 0.0
    while x < _SHIFT_THRESHOLD:
        corr += 1.0 / (x * x)
        x += 1.0
    r = 1.0 / x
    r2 = r * r
    s = (((((_TG7 * r2 + _TG6) * r2 + _TG5) * r2 + _TG4) * r2 + _TG3) * r2 + _TG2) * r2 + _TG1
    return r + 0.5 * r2 + s * r * r2 + corr


def _dispatch(x, scalar_fn, vector_fn, name):
    if isinstance(x, (float, int)):
        if not math.isfinite(x) or x <= 0.0:
            raise DomainError(f"{name}: argument must be finite and > 0, got {x}")
        return scalar_fn(float(x))
    arr = np.asarray(x, dtype=np.float64)
    if arr.size:
        # min > 0 rejects nonpositives, -inf and NaN in one reduction;
        # a +inf entry is caught by the max check
        lo = float(arr.min())
        if not lo > 0.0 or math.isinf(float(arr.max())):
            raise DomainError(f"{name}: arguments must be finite and > 0")
    if arr.ndim == 0:
        return scalar_fn(float(arr))
    return vector_fn(arr)


# Fixed-shift vector path: the recurrences hold for every x > 0, so all
# entries shift up by 8 unconditionally (past the series threshold) and the
# correction collapses into one broadcast term.  The shift-base product can
# only overflow for x beyond ~1e38, where the masked fallback takes over.
_SHIFT_OFFSETS = np.arange(8.0)[:, None]
_FIXED_SHIFT = 8.0
_OVERFLOW_GUARD = 1e37


def _shift_up(arr):
    """Masked recurrence for arbitrarily large inputs (fallback path)."""
    z = arr.copy()
    steps = []
    while True:
        mask = z < _SHIFT_THRESHOLD
        if not mask.any():
            break
        steps.append((mask, np.where(mask, z, 1.0)))
        z = z + mask
    return z, steps


def _lgamma_series(z):
    r = 1.0 / z
    r2 = r * r
    s = np.zeros_like(z)
    for c in reversed(_LGAMMA_COEFFS):
        s = s * r2 + c
    return (z - 0.5) * np.log(z) - z + _HALF_LOG_TWO_PI + s * r


def _digamma_series(z):
    r = 1.0 / z
    r2 = r * r
    s = np.zeros_like(z)
    for c in reversed(_DIGAMMA_COEFFS):
        s = s * r2 + c
    return np.log(z) - 0.5 * r - s * r2


def _trigamma_series(z):
    r = 1.0 / z
    r2 = r * r
    s = np.zeros_like(z)
    for c in reversed(_TRIGAMMA_COEFFS):
        s = s * r2 + c
    return r + 0.5 * r2 + s * r * r2


def _lgamma_vector(arr):
    flat = arr.reshape(-1)
    if flat[flat.argmax()] <= _OVERFLOW_GUARD:
        bases = flat[None, :] + _SHIFT_OFFSETS
        out = _lgamma_series(flat + _FIXED_SHIFT) - np.log(bases.prod(axis=0))
        return out.reshape(arr.shape)
    z, steps = _shift_up(arr)
    correction = np.zeros_like(arr)
    for mask, base in steps:
        correction += np.where(mask, np.log(base), 0.0)
    return _lgamma_series(z) - correction


def _digamma_vector(arr):
    flat = arr.reshape(-1)
    if flat[flat.argmax()] <= _OVERFLOW_GUARD:
        bases = flat[None, :] + _SHIFT_OFFSETS
        out = _digamma_series(flat + _FIXED_SHIFT) - (1.0 / bases).sum(axis=0)
        return out.reshape(arr.shape)
    z, steps = _shift_up(arr)
    correction = np.zeros_like(arr)
    for mask, base in steps:
        correction += np.where(mask, 1.0 / base, 0.0)
    return _digamma_series(z) - correction


def _trigamma_vector(arr):
    flat = arr.reshape(-1)
    if flat[flat.argmax()] <= _OVERFLOW_GUARD:
        bases = flat[None, :] + _SHIFT_OFFSETS
        out = _trigamma_series(flat + _FIXED_SHIFT) + (1.0 / (bases * bases)).sum(axis=0)
        return out.reshape(arr.shape)
    z, steps = _shift_up(arr)
    correction = np.zeros_like(arr)
    for mask, base in steps:
        correction += np.where(mask, 1.0 / (base * base), 0.0)
    return _trigamma_series(z) + correction


def lgamma(x):
    """Natural log of the gamma function for x > 0."""
    return _dispatch(x, _lgamma_scalar, _lgamma_vector, "lgamma")


def digamma(x):
    """Logarithmic derivative of the gamma function for x > 0."""
    return _dispatch(x, _digamma_scalar, _digamma_vector, "digamma")


def trigamma(x):
    """Derivative of the digamma function for x > 0."""
    return _dispatch(x, _trigamma_scalar, _trigamma_vector, "trigamma")


def log_gamma_digamma(x):
    """Both lnGamma(x) and psi(x) in one call, for x > 0."""
    return lgamma(x), digamma(x)
