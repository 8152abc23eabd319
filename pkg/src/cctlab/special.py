"""Scalar distribution functions shared by every other module.

Normal CDF/quantile are backed by ``scipy.special.ndtr``/``ndtri`` (erfc-based,
relative accuracy is kept in the lower tail). The Cauchy helpers use the
``arctan(1/t)`` form past ``|t| = 1`` so tail probabilities keep full relative
precision for huge statistics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as sc

_LOG_4PI = math.log(4.0 * math.pi)


def _open_unit(p, name: str) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr <= 0.0) | (arr >= 1.0)):
        raise ValueError(f"{name} must lie strictly inside (0, 1)")
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def norm_cdf(x):
    """Standard normal CDF."""
    return _out(sc.ndtr(np.asarray(x, dtype=float)))


def norm_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return _out(sc.ndtr(-np.asarray(x, dtype=float)))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _out(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))


def norm_quantile(p):
    """Inverse of :func:`norm_cdf`; raises ``ValueError`` at 0 or 1."""
    return _out(sc.ndtri(_open_unit(p, "p")))


def cauchy_tail(t):
    """``P(X > t)`` for standard Cauchy ``X``.

    Uses ``arctan(1/t)/pi`` for ``t > 1``; the two forms are identical
    mathematically but the naive one loses all digits once ``t`` is large.
    """
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        far = np.arctan(1.0 / np.where(t > 1.0, t, 1.0)) / math.pi
    near = 0.5 - np.arctan(t) / math.pi
    return _out(np.where(t > 1.0, far, near))


def cauchy_quantile(level):
    """Quantile of the standard Cauchy, ``cot(pi * (1 - level))``."""
    level = _open_unit(level, "level")
    alpha = 1.0 - level
    upper = 1.0 / np.tan(math.pi * np.where(level > 0.5, alpha, 0.5))
    lower = np.tan(math.pi * (level - 0.5))
    return _out(np.where(level > 0.5, upper, lower))


def gumbel_quantile(level):
    """Quantile of the standard Gumbel law ``exp(-exp(-q))``."""
    level = _open_unit(level, "level")
    return _out(-np.log(-np.log(level)))


@dataclass(frozen=True)
class QuantileExpansion:
    """Asymptotic expansion of ``Phi^{-1}(1 - a/m)`` as its separate terms."""

    leading: float
    log_correction: float
    constant_correction: float
    error_order: float

    @property
    def value(self) -> float:
        return self.leading + self.log_correction + self.constant_correction


def quantile_expansion(a: float, m: int) -> QuantileExpansion:
    if a <= 0:
        raise ValueError("a must be positive")
    if m < 2:
        raise ValueError("m must be at least 2")
    if a / m >= 0.5:
        raise ValueError("expansion needs a/m < 0.5")
    log_m = math.log(m)
    return QuantileExpansion(
        leading=math.sqrt(2.0 * log_m),
        log_correction=-(math.log(log_m) + _LOG_4PI) / math.sqrt(8.0 * log_m),
        constant_correction=-math.log(a) / math.sqrt(2.0 * log_m),
        error_order=1.0 / log_m,
    )


# Analytic bounds, exposed so the property tests can exercise them directly.

def cauchy_tail_upper_bound(t):
    """``1/(pi t)``, which dominates :func:`cauchy_tail` for ``t > 0``."""
    return _out(1.0 / (math.pi * np.asarray(t, dtype=float)))


def mills_tail_bounds(x):
    """Lower and upper bounds on ``1 - Phi(x)`` for ``x > 0``.

    Returns ``(phi(x)/x * x^2/(1+x^2), phi(x)/x)``.
    """
    x = np.asarray(x, dtype=float)
    upper = np.asarray(norm_pdf(x)) / x
    return _out(upper * x * x / (1.0 + x * x)), _out(upper)


def normal_quantile_sandwich(y):
    """Bounds ``(sqrt(log(1/y^2) + 1) - 1, sqrt(log(1/y^2)))`` on ``Phi^{-1}(1-y)``."""
    y = np.asarray(y, dtype=float)
    s = -2.0 * np.log(y)
    return _out(np.sqrt(s + 1.0) - 1.0), _out(np.sqrt(s))
