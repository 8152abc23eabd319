"""Global tests built from individual p-values.

Contains the Cauchy combination test (CCT) with its analytic Cauchy-tail
calibration, the MAX statistic with Gumbel calibration, Monte Carlo MINP, and
the Fisher, Pearson-type, Stouffer and Edgington combiners.

Boundary handling: p-values of exactly 0 or 1 are clamped into
``[P_FLOOR, P_CEIL]`` and flagged on the returned :class:`TestOutcome`;
anything outside ``[0, 1]`` or non-finite is an error.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import special as sc

from . import special
from ._parallel import block_bounds, parallel_map, substream

P_FLOOR = 1e-300
P_CEIL = 1.0 - 1e-16
# below this the cotangent is replaced by its small-angle form 1/(pi p)
SMALL_P = 1e-15
IRWIN_HALL_EXACT_MAX_M = 50


class Method(str, enum.Enum):
    CCT = "CCT"
    MAX = "MAX"
    MINP = "MINP"
    FISHER = "FISHER"
    PEARSON = "PEARSON"
    STOUFFER = "STOUFFER"
    EDGINGTON = "EDGINGTON"


class Calibration(str, enum.Enum):
    ANALYTIC = "ANALYTIC"
    MONTE_CARLO = "MONTE_CARLO"


@dataclass
class TestOutcome:
    __test__ = False  # keep pytest from collecting this class

    method: Method
    statistic: float
    p_value: float
    calibration: Calibration = Calibration.ANALYTIC
    mc_replicates: int | None = None
    mc_stderr: float | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if (self.calibration is Calibration.MONTE_CARLO) != (self.mc_replicates is not None):
            raise ValueError("mc_replicates must be set exactly for Monte Carlo calibration")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value {self.p_value} outside [0, 1]")

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "calibration": self.calibration.value,
        }
        if self.mc_replicates is not None:
            out["mc_replicates"] = self.mc_replicates
        if self.mc_stderr is not None:
            out["mc_stderr"] = self.mc_stderr
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "TestOutcome":
        return cls(
            method=Method(d["method"]),
            statistic=float(d["statistic"]),
            p_value=float(d["p_value"]),
            calibration=Calibration(d["calibration"]),
            mc_replicates=d.get("mc_replicates"),
            mc_stderr=d.get("mc_stderr"),
            warnings=list(d.get("warnings", [])),
        )


def sanitize_pvalues(p) -> tuple[np.ndarray, list[str]]:
    """Validate and clamp p-values; returns the clamped copy and any warnings."""
    arr = np.array(p, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one p-value")
    if not np.all(np.isfinite(arr)):
        raise ValueError("p-values must be finite")
    if np.any((arr < 0.0) | (arr > 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    notes = []
    n_zero = int(np.sum(arr < P_FLOOR))
    n_one = int(np.sum(arr > P_CEIL))
    if n_zero:
        notes.append(f"{n_zero} p-value(s) below {P_FLOOR:g} clamped")
    if n_one:
        notes.append(f"{n_one} p-value(s) equal to 1 clamped to {P_CEIL!r}")
    return np.clip(arr, P_FLOOR, P_CEIL), notes


def equal_weights(m: int) -> np.ndarray:
    return np.full(m, 1.0 / m)


def _check_weights(w, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"weights have shape {w.shape}, expected ({m},)")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and nonnegative")
    if abs(math.fsum(w) - 1.0) > 1e-12:
        raise ValueError("weights must sum to 1")
    return w


def cauchy_transform(p) -> np.ndarray:
    """``tan((0.5 - p) pi)`` evaluated as a cotangent of the nearer tail."""
    p = np.asarray(p, dtype=float)
    q = np.where(p <= 0.5, p, 1.0 - p)
    sign = np.where(p <= 0.5, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        small = 1.0 / (math.pi * q)
        regular = 1.0 / np.tan(math.pi * q)
    # 0.5 - p is exact on [0.25, 0.75], so the direct tangent is exact at p = 0.5
    central = np.tan(math.pi * (0.5 - p))
    return np.where(q >= 0.25, central, sign * np.where(q < SMALL_P, small, regular))


def cct_statistic(p, w=None):
    """Weighted Cauchy combination statistic.

    A 1-D ``p`` gives a float summed with ``math.fsum`` (correctly rounded, so
    the value does not depend on the order of the pairs). A 2-D ``p`` is a
    batch of replicates along the last axis and returns one value per row.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ValueError("need at least one p-value")
    if not np.all(np.isfinite(p)):
        raise ValueError("p-values must be finite")
    if np.any((p < 0.0) | (p > 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.shape[-1]
    w = equal_weights(m) if w is None else _check_weights(w, m)
    terms = w * cauchy_transform(np.clip(p, P_FLOOR, P_CEIL))
    if p.ndim == 1:
        return math.fsum(terms)
    return terms.sum(axis=-1)


def cct_pvalue(statistic):
    """Standard Cauchy upper tail at the CCT statistic."""
    return special.cauchy_tail(statistic)


def cct(p, w=None) -> TestOutcome:
    clean, notes = sanitize_pvalues(p)
    if clean.ndim != 1:
        raise ValueError("cct() takes a single p-value vector")
    stat = cct_statistic(clean, w)
    return TestOutcome(Method.CCT, stat, float(cct_pvalue(stat)), warnings=notes)


# MAX / Gumbel ---------------------------------------------------------------

@dataclass(frozen=True)
class GumbelNorm:
    """Centering/scaling for ``max Z_i^2`` (tilde pair) and ``max |Z_i|``."""

    a_tilde: float
    b_tilde: float
    a: float
    b: float
    m: int


def gumbel_norm(m: int) -> GumbelNorm:
    if m < 2:
        raise ValueError("Gumbel normalization needs m >= 2")
    log_m = math.log(m)
    corr = math.log(log_m) + math.log(4.0 * math.pi) - math.log(4.0)
    return GumbelNorm(
        a_tilde=2.0 * log_m - corr + corr / (2.0 * log_m),
        b_tilde=2.0 - 1.0 / log_m,
        a=math.sqrt(2.0 * log_m) - corr / math.sqrt(8.0 * log_m),
        b=1.0 / math.sqrt(2.0 * log_m),
        m=m,
    )


def max_statistic(z):
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] == 0:
        raise ValueError("need at least one statistic")
    if not np.all(np.isfinite(z)):
        raise ValueError("statistics must be finite")
    out = np.max(z * z, axis=-1)
    return float(out) if out.ndim == 0 else out


def max_pvalue_gumbel(max_stat, m: int):
    g = gumbel_norm(m)
    x = (np.asarray(max_stat, dtype=float) - g.a_tilde) / g.b_tilde
    out = -np.expm1(-np.exp(-x))
    return float(out) if out.ndim == 0 else out


def max_abs_threshold(m: int, alpha: float) -> float:
    """Critical value for ``sqrt(MAX) = max |Z_i|`` at level ``alpha``."""
    g = gumbel_norm(m)
    return g.a + g.b * special.gumbel_quantile(1.0 - alpha)


# MINP -----------------------------------------------------------------------

def minp_statistic(p):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] == 0:
        raise ValueError("need at least one p-value")
    out = np.min(p, axis=-1)
    return float(out) if out.ndim == 0 else out


def sidak_pvalue(min_p: float, m: int) -> float:
    """MINP p-value for independent uniform p-values (reference only)."""
    return float(-np.expm1(m * np.log1p(-min_p)))


NullSampler = Callable[[np.random.Generator, int], np.ndarray]


def minp_pvalue_mc(
    p_obs,
    null_sampler: NullSampler,
    replicates: int,
    seed: int,
    *,
    workers: int = 1,
    stream: int = 0,
) -> TestOutcome:
    """Monte Carlo MINP p-value with the add-one rule.

    ``null_sampler(rng, size)`` must return a ``(size, m)`` array of null
    p-values. Replicates are drawn in fixed blocks keyed by ``(seed, stream,
    block)``, so the result does not depend on ``workers``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    clean, notes = sanitize_pvalues(p_obs)
    observed = float(np.min(clean))

    def count(bounds):
        lo, hi = bounds
        rng = substream(seed, stream, lo)
        sims = np.asarray(null_sampler(rng, hi - lo), dtype=float)
        # same clamp as the observed side, so ties at 0 or 1 compare equal
        null_min = np.clip(np.min(sims, axis=-1), P_FLOOR, P_CEIL)
        return int(np.sum(null_min <= observed))

    hits = sum(parallel_map(count, block_bounds(replicates), workers))
    p = (1 + hits) / (replicates + 1)
    return TestOutcome(
        Method.MINP,
        observed,
        p,
        Calibration.MONTE_CARLO,
        mc_replicates=replicates,
        mc_stderr=math.sqrt(p * (1.0 - p) / replicates),
        warnings=notes,
    )


def uniform_null_sampler(m: int) -> NullSampler:
    """Independent U(0,1) p-values."""
    return lambda rng, size: rng.random((size, m))


# Conventional combiners -----------------------------------------------------

def fisher(p) -> TestOutcome:
    clean, notes = sanitize_pvalues(p)
    stat = -2.0 * math.fsum(np.log(clean))
    pval = float(sc.gammaincc(clean.size, stat / 2.0))
    return TestOutcome(Method.FISHER, stat, pval, warnings=notes)


def pearson_combine(p) -> TestOutcome:
    """``-sum log(1 - p_i)``; small values are evidence, so the lower Gamma tail."""
    clean, notes = sanitize_pvalues(p)
    stat = -math.fsum(np.log1p(-clean))
    pval = float(sc.gammainc(clean.size, stat))
    return TestOutcome(Method.PEARSON, stat, pval, warnings=notes)


def stouffer(p) -> TestOutcome:
    clean, notes = sanitize_pvalues(p)
    # Phi^{-1}(1 - p) == -Phi^{-1}(p), exact in the small-p tail
    stat = -math.fsum(sc.ndtri(clean))
    pval = float(special.norm_sf(stat / math.sqrt(clean.size)))
    return TestOutcome(Method.STOUFFER, stat, pval, warnings=notes)


def irwin_hall_cdf(x: float, m: int) -> float:
    """CDF of the sum of ``m`` iid U(0,1) variables.

    Exact rational evaluation of the alternating sum for ``m <= 50``;
    normal approximation (mean m/2, variance m/12) beyond that.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if x <= 0:
        return 0.0
    if x >= m:
        return 1.0
    if m > IRWIN_HALL_EXACT_MAX_M:
        return float(special.norm_cdf((x - m / 2.0) / math.sqrt(m / 12.0)))
    flip = x > m / 2.0
    xf = Fraction(m) - Fraction(x) if flip else Fraction(x)
    num, den = xf.numerator, xf.denominator
    total = 0
    for k in range(int(math.floor(xf)) + 1):
        term = math.comb(m, k) * (num - k * den) ** m
        total += -term if k % 2 else term
    cdf = Fraction(total, den**m * math.factorial(m))
    return float(1 - cdf) if flip else float(cdf)


def edgington(p) -> TestOutcome:
    clean, notes = sanitize_pvalues(p)
    stat = math.fsum(clean)
    return TestOutcome(Method.EDGINGTON, stat, irwin_hall_cdf(stat, clean.size), warnings=notes)


ANALYTIC_COMBINERS: dict[str, Callable[..., TestOutcome]] = {
    "cct": cct,
    "fisher": fisher,
    "pearson": pearson_combine,
    "stouffer": stouffer,
    "edgington": edgington,
}


def combine(p: Sequence[float], method: str, weights=None, *, replicates: int = 2000,
            seed: int | None = None) -> TestOutcome:
    """Dispatch by method name; ``minp`` uses an independent-uniform null."""
    method = method.lower()
    if method == "cct":
        return cct(p, weights)
    if weights is not None:
        raise ValueError(f"method {method!r} does not take weights")
    if method == "minp":
        if seed is None:
            raise ValueError("minp is Monte Carlo calibrated and needs a seed")
        m = np.asarray(p).size
        return minp_pvalue_mc(p, uniform_null_sampler(m), replicates, seed)
    try:
        return ANALYTIC_COMBINERS[method](p)
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
