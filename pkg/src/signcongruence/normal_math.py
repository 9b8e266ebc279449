"""Univariate and bivariate standard normal primitives.

The bivariate upper-orthant probability follows Genz's (2004) refinement of
the Drezner-Wesolowsky integral: a Gauss-Legendre rule over the arcsine of
the correlation for ``|rho| < 0.925`` and an asymptotic expansion plus
quadrature of the remainder for strongly correlated cases. Everything is
vectorised over the limits ``h`` and ``k``; the correlation is a scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import PCG64, Generator, SeedSequence
from scipy.special import ndtr

__all__ = [
    "Correlation",
    "Covariance2",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "bvn_upper_orthant",
    "sample_bvn",
    "derive_rng",
]

_TWO_PI = 2.0 * math.pi
_SQRT_TWO_PI = math.sqrt(_TWO_PI)


@dataclass(frozen=True)
class Correlation:
    """A correlation coefficient in ``[-1, 1]``."""

    value: float

    def __post_init__(self) -> None:
        v = float(self.value)
        if math.isnan(v) or not -1.0 <= v <= 1.0:
            raise ValueError(f"correlation must lie in [-1, 1], got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self) -> float:
        return self.value


@dataclass(frozen=True)
class Covariance2:
    """Scales and correlation of a bivariate normal vector."""

    sigma1: float = 1.0
    sigma2: float = 1.0
    rho: float = 0.0

    def __post_init__(self) -> None:
        for name in ("sigma1", "sigma2"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "rho", float(Correlation(self.rho)))

    @property
    def matrix(self) -> np.ndarray:
        s1, s2, r = self.sigma1, self.sigma2, self.rho
        return np.array([[s1 * s1, r * s1 * s2], [r * s1 * s2, s2 * s2]])

    @classmethod
    def from_matrix(cls, m) -> "Covariance2":
        m = np.asarray(m, dtype=float)
        s1 = math.sqrt(m[0, 0])
        s2 = math.sqrt(m[1, 1])
        r = m[0, 1] / (s1 * s2)
        # round-off can push |r| a hair past 1 for singular inputs
        return cls(s1, s2, min(1.0, max(-1.0, r)))


def _check_nan(*arrays) -> None:
    for a in arrays:
        if np.any(np.isnan(a)):
            raise ValueError("NaN is not a valid argument")


def std_normal_cdf(x):
    """Standard normal CDF; scalar in, scalar out, arrays broadcast."""
    arr = np.asarray(x, dtype=float)
    _check_nan(arr)
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    arr = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * arr * arr) / _SQRT_TWO_PI
    return float(out) if out.ndim == 0 else out


# Acklam's rational approximation (relative error below 1.2e-9), polished
# below with one Newton step against the CDF.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _lower_quantile_guess(p: float) -> float:
    # valid for 0 < p <= 0.5
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def std_normal_quantile(p: float) -> float:
    """Inverse of the standard normal CDF for ``0 < p < 1``.

    Raises
    ------
    ValueError
        If ``p`` is NaN or outside the open unit interval.
    """
    p = float(p)
    if math.isnan(p) or not 0.0 < p < 1.0:
        raise ValueError(f"quantile requires 0 < p < 1, got {p!r}")
    if p > 0.5:
        return -std_normal_quantile(1.0 - p)
    if p == 0.5:
        return 0.0
    x = _lower_quantile_guess(p)
    # Newton step on the lower tail, where ndtr keeps full relative accuracy
    x -= (float(ndtr(x)) - p) / std_normal_pdf(x)
    return x


@lru_cache(maxsize=None)
def _gl_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    # nodes shifted from [-1, 1] to [0, 2]; integrating over [0, L] is then
    # (L/2) * sum(w * f(L/2 * x))
    xi, w = np.polynomial.legendre.leggauss(n)
    return 1.0 + xi, w


def _bvnu_finite(h: np.ndarray, k: np.ndarray, r: float) -> np.ndarray:
    """Upper orthant for finite 1-D ``h``, ``k`` and ``0 < |r| < 1``."""
    ar = abs(r)
    if ar < 0.3:
        x, w = _gl_rule(6)
    elif ar < 0.75:
        x, w = _gl_rule(12)
    else:
        x, w = _gl_rule(20)

    hk = h * k
    if ar < 0.925:
        hs = 0.5 * (h * h + k * k)
        asr = 0.5 * math.asin(r)
        sn = np.sin(asr * x)
        integrand = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn))
        bvn = integrand @ w * asr / _TWO_PI
        return bvn + ndtr(-h) * ndtr(-k)

    if r < 0:
        k = -k
        hk = -hk
    a_s = (1.0 - r) * (1.0 + r)
    a = math.sqrt(a_s)
    bs = (h - k) ** 2
    c = (4.0 - hk) / 8.0
    d = (12.0 - hk) / 80.0
    asr = -0.5 * (bs / a_s + hk)
    bvn = np.where(
        asr > -100.0,
        a * np.exp(np.maximum(asr, -100.0))
        * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s),
        0.0,
    )
    b = np.sqrt(bs)
    sp = _SQRT_TWO_PI * ndtr(-b / a)
    tail = np.exp(-0.5 * np.minimum(hk, 200.0)) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
    bvn = bvn - np.where(hk > -100.0, tail, 0.0)

    half = 0.5 * a
    xs = (half * x) ** 2
    asr_n = -0.5 * (bs[:, None] / xs + hk[:, None])
    keep = asr_n > -100.0
    sp_n = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
    rs = np.sqrt(1.0 - xs)
    ep = np.exp(-0.5 * hk[:, None] * xs / (1.0 + rs) ** 2) / rs
    terms = np.where(keep, np.exp(np.maximum(asr_n, -100.0)) * (sp_n - ep), 0.0)
    bvn = (half * (terms @ w) - bvn) / _TWO_PI

    if r > 0:
        return bvn + ndtr(-np.maximum(h, k))
    # negative correlation: undo the reflection of k
    lower = np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k))
    return np.where(h >= k, -bvn, lower - bvn)


def bvn_upper_orthant(h, k, rho):
    """P(X1 > h, X2 > k) for a standard bivariate normal with correlation ``rho``.

    ``h`` and ``k`` broadcast against each other and may contain infinities.
    Correlations of exactly +1 and -1 are evaluated in closed form.
    """
    r = float(Correlation(float(rho)))
    h_arr, k_arr = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    _check_nan(h_arr, k_arr)
    scalar = h_arr.ndim == 0
    hf = h_arr.ravel()
    kf = k_arr.ravel()
    out = np.empty(hf.shape)

    if r == 1.0:
        out[:] = ndtr(-np.maximum(hf, kf))
    elif r == -1.0:
        # X2 = -X1: need h < X1 < -k
        out[:] = np.maximum(ndtr(-kf) - ndtr(hf), 0.0)
    elif r == 0.0:
        out[:] = ndtr(-hf) * ndtr(-kf)
    else:
        fin = np.isfinite(hf) & np.isfinite(kf)
        out[~fin] = _infinite_limits(hf[~fin], kf[~fin])
        if fin.any():
            out[fin] = _bvnu_finite(hf[fin], kf[fin], r)
    np.clip(out, 0.0, 1.0, out=out)
    return float(out[0]) if scalar else out.reshape(h_arr.shape)


def _infinite_limits(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    out = np.where(np.isposinf(h) | np.isposinf(k), 0.0, 1.0)
    h_neg = np.isneginf(h)
    k_neg = np.isneginf(k)
    out = np.where(h_neg & ~k_neg & ~np.isposinf(k), ndtr(-k), out)
    out = np.where(k_neg & ~h_neg & ~np.isposinf(h), ndtr(-h), out)
    return out


def derive_rng(seed: int, *stream: int) -> Generator:
    """PCG64 generator for the sub-stream ``stream`` of ``seed``.

    Streams are derived with ``SeedSequence(seed, spawn_key=stream)``, so the
    draws of chunk ``i`` never depend on how many chunks run concurrently.
    """
    return Generator(PCG64(SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))))


def sample_bvn(mean, cov: Covariance2, count: int, seed: int, *, chunk: int = 1 << 18) -> np.ndarray:
    """Draw ``count`` i.i.d. bivariate normal pairs, shape ``(count, 2)``.

    Draws are generated in fixed-size chunks with per-chunk derived streams.
    """
    if not isinstance(cov, Covariance2):
        raise TypeError("cov must be a Covariance2")
    count = int(count)
    if count < 0:
        raise ValueError("count must be nonnegative")
    m1, m2 = (float(v) for v in mean)
    out = np.empty((count, 2))
    r = cov.rho
    s = math.sqrt(max(0.0, 1.0 - r * r))
    for i, start in enumerate(range(0, count, chunk)):
        stop = min(count, start + chunk)
        z = derive_rng(seed, i).standard_normal((stop - start, 2))
        out[start:stop, 0] = m1 + cov.sigma1 * z[:, 0]
        out[start:stop, 1] = m2 + cov.sigma2 * (r * z[:, 0] + s * z[:, 1])
    return out
