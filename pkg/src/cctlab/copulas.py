"""Bivariate copulas for pairs of p-values.

Six families: product, Farlie-Gumbel-Morgenstern, Cuadras-Auge, Gaussian,
Ali-Mikhail-Haq and the Gumbel-Barnett "survival" copula
``uv exp(-theta ln u ln v)``. For each: the CDF, rectangle probabilities,
conditional-inversion sampling, the paired construction used to make
dependent p-value vectors, and a finite-grid check of the tail-decay
conditions needed for the Cauchy approximation.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import special as sc

from .special import norm_quantile

BISECTION_TOL = 1e-12
BISECTION_MAX_ITER = 200
# below this the Genz value is recomputed by 1-D quadrature for relative accuracy
_BVN_TAIL_SWITCH = 1e-8


class Family(str, enum.Enum):
    PRODUCT = "PRODUCT"
    FGM = "FGM"
    CUADRAS_AUGE = "CUADRAS_AUGE"
    NORMAL = "NORMAL"
    AMH = "AMH"
    SURVIVAL = "SURVIVAL"

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().upper().replace("-", "_")
        aliases = {"CA": "CUADRAS_AUGE", "GAUSSIAN": "NORMAL", "INDEPENDENCE": "PRODUCT"}
        return cls(aliases.get(key, key))


_RANGES = {
    Family.FGM: (-1.0, 1.0),
    Family.AMH: (-1.0, 1.0),
    Family.CUADRAS_AUGE: (0.0, 1.0),
    Family.SURVIVAL: (0.0, 1.0),
}


@dataclass(frozen=True)
class CopulaSpec:
    """A family plus its parameter (``theta``; the correlation for NORMAL)."""

    family: Family
    theta: float = 0.0

    def __post_init__(self):
        fam = Family.parse(self.family) if isinstance(self.family, str) else self.family
        object.__setattr__(self, "family", fam)
        th = float(self.theta)
        object.__setattr__(self, "theta", th)
        if not math.isfinite(th):
            raise ValueError("copula parameter must be finite")
        if fam is Family.NORMAL:
            if not abs(th) < 1.0:
                raise ValueError(f"normal copula needs |rho| < 1, got {th}")
        elif fam in _RANGES:
            lo, hi = _RANGES[fam]
            if not lo <= th <= hi:
                raise ValueError(f"{fam.value} parameter must be in [{lo}, {hi}], got {th}")


@dataclass(frozen=True)
class Rectangle:
    u_lo: float
    u_hi: float
    v_lo: float
    v_hi: float

    def __post_init__(self):
        for x in (self.u_lo, self.u_hi, self.v_lo, self.v_hi):
            if not 0.0 <= x <= 1.0:
                raise ValueError("rectangle corners must lie in [0, 1]")
        if not (self.u_lo < self.u_hi and self.v_lo < self.v_hi):
            raise ValueError("rectangle must have u_lo < u_hi and v_lo < v_hi")


# Bivariate normal -----------------------------------------------------------

def _gl_nodes(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


_GL = {6: _gl_nodes(6), 12: _gl_nodes(12), 20: _gl_nodes(20)}


def _phid(x):
    return sc.ndtr(x)


def bvn_upper(h: float, k: float, r: float) -> float:
    """``P(X > h, Y > k)`` for a standard bivariate normal with correlation ``r``.

    Drezner-Wesolowsky / Genz construction with Gauss-Legendre rules; absolute
    error around 1e-15.
    """
    if h == math.inf or k == math.inf:
        return 0.0
    if h == -math.inf:
        return 1.0 if k == -math.inf else float(_phid(-k))
    if k == -math.inf:
        return float(_phid(-h))
    if r == 0.0:
        return float(_phid(-h) * _phid(-k))
    tp = 2.0 * math.pi
    hk = h * k
    ar = abs(r)
    n = 6 if ar < 0.3 else (12 if ar < 0.75 else 20)
    gx, gw = _GL[n]
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        sn = np.sin(asr * (1.0 + gx))
        bvn = float(np.dot(gw, np.exp((sn * hk - hs) / (1.0 - sn * sn))))
        bvn = bvn * asr / tp + float(_phid(-h) * _phid(-k))
        return min(1.0, max(0.0, bvn))
    if r < 0:
        k = -k
        hk = -hk
    bvn = 0.0
    if ar < 1.0:
        as_ = 1.0 - r * r
        a = math.sqrt(as_)
        bs = (h - k) ** 2
        asr = -(bs / as_ + hk) / 2.0
        c = (4.0 - hk) / 8.0
        d = (12.0 - hk) / 80.0
        if asr > -100:
            bvn = a * math.exp(asr) * (1 - c * (bs - as_) * (1 - d * bs) / 3 + c * d * as_ * as_)
        if hk > -100:
            b = math.sqrt(bs)
            sp = math.sqrt(tp) * float(_phid(-b / a))
            bvn -= math.exp(-hk / 2.0) * sp * b * (1 - c * bs * (1 - d * bs) / 3)
        a /= 2.0
        # nodes mapped to (0, 1) on both halves of the interval
        xs = (a * (1.0 + gx)) ** 2
        asr_v = -(bs / xs + hk) / 2.0
        keep = asr_v > -100
        xs, asr_v, wk = xs[keep], asr_v[keep], gw[keep]
        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
        bvn = (a * float(np.dot(np.exp(asr_v) * (sp - ep), wk)) - bvn) / tp
    if r > 0:
        bvn += float(_phid(-max(h, k)))
    elif h >= k:
        bvn = -bvn
    else:
        if h < 0:
            L = float(_phid(k) - _phid(h))
        else:
            L = float(_phid(-h) - _phid(-k))
        bvn = L - bvn
    return min(1.0, max(0.0, bvn))


def _bvn_lower_quad(h: float, k: float, r: float) -> float:
    """``P(X < h, Y < k)`` by 1-D quadrature in 30-digit arithmetic.

    Slow but accurate in relative terms, which the Genz rule is not once the
    probability drops far below 1e-15.
    """
    if h > k:
        h, k = k, h
    with mpmath.workdps(30):
        s = mpmath.sqrt(1 - mpmath.mpf(r) ** 2)
        H, K, R = mpmath.mpf(h), mpmath.mpf(k), mpmath.mpf(r)

        def f(x):
            return mpmath.npdf(x) * mpmath.ncdf((K - R * x) / s)

        # mode of the integrand on (-inf, h]: coarse search keeps tanh-sinh on target
        sf = float(s)
        grid = np.linspace(h - 40.0, h, 40001)
        logf = -0.5 * grid**2 + sc.log_ndtr((k - r * grid) / sf)
        x0 = float(grid[int(np.argmax(logf))])
        pts = set()
        for width in (1.0 / max(1.0, abs(x0)), sf / max(1.0, abs(r * x0 - k) / sf)):
            pts |= {x0 + c * width for c in (-16, -8, -4, -2, -1, 0, 1, 2, 4, 8, 16)}
        pts = sorted(mpmath.mpf(x) for x in pts if x < h)
        return float(mpmath.quad(f, [-mpmath.inf, *pts, H]))


def bvn_lower(h: float, k: float, r: float) -> float:
    """``P(X < h, Y < k)`` with relative accuracy maintained in the far tail."""
    if h == -math.inf or k == -math.inf:
        return 0.0
    val = bvn_upper(-h, -k, r)
    if val < _BVN_TAIL_SWITCH and abs(r) > 0:
        return _bvn_lower_quad(h, k, r)
    return val


# CDF ------------------------------------------------------------------------

def _analytic_cdf(fam: Family, th: float, u, v):
    if fam is Family.PRODUCT:
        return u * v
    if fam is Family.FGM:
        return u * v * (1.0 + th * (1.0 - u) * (1.0 - v))
    if fam is Family.CUADRAS_AUGE:
        return np.minimum(u, v) ** th * (u * v) ** (1.0 - th)
    if fam is Family.AMH:
        den = 1.0 - th * (1.0 - u) * (1.0 - v)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = u * v / den
        return np.where(u * v == 0.0, 0.0, out)
    if fam is Family.SURVIVAL:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = u * v * np.exp(-th * np.log(u) * np.log(v))
        return np.where(u * v == 0.0, 0.0, out)
    raise AssertionError(fam)


def copula_cdf(spec: CopulaSpec, u, v):
    """``C(u, v)``; broadcasts over array inputs."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    u, v = np.broadcast_arrays(u, v)
    if spec.family is Family.NORMAL:
        out = np.empty(u.shape)
        for idx in np.ndindex(u.shape):
            out[idx] = _normal_cdf(spec.theta, float(u[idx]), float(v[idx]))
    else:
        out = _analytic_cdf(spec.family, spec.theta, u, v)
        # exact margins and grounding on the boundary
        out = np.where(u == 1.0, v, np.where(v == 1.0, u, out))
    out = np.clip(out, 0.0, np.minimum(u, v))
    return float(out) if out.ndim == 0 else out


def _normal_cdf(rho: float, u: float, v: float) -> float:
    if u <= 0.0 or v <= 0.0:
        return 0.0
    if u >= 1.0:
        return v
    if v >= 1.0:
        return u
    return bvn_lower(float(norm_quantile(u)), float(norm_quantile(v)), rho)


def _lower_left_upper_left(spec: CopulaSpec, u: float, b: float) -> float:
    """``P(U < u, V > 1 - b)`` written without the ``u - C(u, 1-b)`` cancellation."""
    th = spec.theta
    fam = spec.family
    if u <= 0.0 or b <= 0.0:
        return 0.0
    if fam is Family.PRODUCT:
        return u * b
    if fam is Family.FGM:
        return u * b * (1.0 - th * (1.0 - u) * (1.0 - b))
    if fam is Family.AMH:
        return u * b * ((1.0 - th) + th * u) / (1.0 - th * (1.0 - u) * b)
    if fam is Family.CUADRAS_AUGE:
        if u <= 1.0 - b:
            return -u * math.expm1((1.0 - th) * math.log1p(-b))
        return u - (1.0 - b) * u ** (1.0 - th)
    if fam is Family.SURVIVAL:
        return -u * math.expm1(math.log1p(-b) * (1.0 - th * math.log(u)))
    if fam is Family.NORMAL:
        # reflecting V maps the Gaussian copula with rho to the one with -rho
        return _normal_cdf(-th, u, b)
    raise AssertionError(fam)


def rectangle_prob(spec: CopulaSpec, r: Rectangle) -> float:
    """``P(u_lo < U < u_hi, v_lo < V < v_hi)`` by inclusion-exclusion, floored at 0.

    Rectangles anchored at the corners ``(0, 0)`` or ``(0, 1)`` are evaluated
    from cancellation-free closed forms.
    """
    if r.u_lo == 0.0 and r.v_lo == 0.0:
        return float(copula_cdf(spec, r.u_hi, r.v_hi))
    if r.u_lo == 0.0 and r.v_hi == 1.0:
        return max(0.0, _lower_left_upper_left(spec, r.u_hi, 1.0 - r.v_lo))
    c = copula_cdf
    val = (c(spec, r.u_hi, r.v_hi) - c(spec, r.u_lo, r.v_hi)
           - c(spec, r.u_hi, r.v_lo) + c(spec, r.u_lo, r.v_lo))
    return max(0.0, float(val))


# Conditional distribution and sampling -------------------------------------

def conditional_cdf(spec: CopulaSpec, u, v):
    """``dC(u, v)/du``, the CDF of V given U = u."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    th = spec.theta
    fam = spec.family
    if fam is Family.PRODUCT:
        out = v + 0.0 * u
    elif fam is Family.FGM:
        out = v * (1.0 + th * (1.0 - 2.0 * u) * (1.0 - v))
    elif fam is Family.CUADRAS_AUGE:
        with np.errstate(divide="ignore", invalid="ignore"):
            below = (1.0 - th) * v * u ** (-th)
        out = np.where(v < u, below, v ** (1.0 - th))
    elif fam is Family.AMH:
        den = 1.0 - th * (1.0 - u) * (1.0 - v)
        out = v * (1.0 - th * (1.0 - v)) / den**2
    elif fam is Family.SURVIVAL:
        with np.errstate(divide="ignore", invalid="ignore"):
            lv = np.log(v)
            out = v * np.exp(-th * np.log(u) * lv) * (1.0 - th * lv)
        out = np.where(v <= 0.0, 0.0, out)
    elif fam is Family.NORMAL:
        s = math.sqrt(1.0 - th * th)
        out = sc.ndtr((sc.ndtri(v) - th * sc.ndtri(u)) / s)
    else:
        raise AssertionError(fam)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _bisect(fn, w, lo=None, hi=None):
    w = np.asarray(w, dtype=float)
    lo = np.zeros_like(w) if lo is None else np.broadcast_to(lo, w.shape).astype(float)
    hi = np.ones_like(w) if hi is None else np.broadcast_to(hi, w.shape).astype(float)
    for _ in range(BISECTION_MAX_ITER):
        if np.all(hi - lo <= BISECTION_TOL):
            return 0.5 * (lo + hi)
        mid = 0.5 * (lo + hi)
        below = fn(mid) < w
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    raise RuntimeError("conditional inversion did not converge")


def conditional_quantile(spec: CopulaSpec, u, w):
    """Solve ``dC(u, v)/du = w`` for ``v``.

    Closed forms for PRODUCT, FGM, NORMAL, AMH (quadratic roots) and
    CUADRAS_AUGE, whose conditional CDF jumps at ``v = u``: any ``w`` inside
    the jump maps to ``v = u``. SURVIVAL is inverted by bisection.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    u, w = np.broadcast_arrays(u, w)
    th = spec.theta
    fam = spec.family
    if fam is Family.PRODUCT:
        out = w.copy()
    elif fam is Family.FGM:
        a = th * (1.0 - 2.0 * u)
        b = 1.0 + a
        out = 2.0 * w / (b + np.sqrt(np.maximum(b * b - 4.0 * a * w, 0.0)))
    elif fam is Family.NORMAL:
        s = math.sqrt(1.0 - th * th)
        out = sc.ndtr(th * sc.ndtri(u) + s * sc.ndtri(w))
    elif fam is Family.AMH:
        a = 1.0 - th * (1.0 - u)
        b = th * (1.0 - u)
        lin = 1.0 - th - 2.0 * w * a * b
        quad = th - w * b * b
        disc = np.maximum(lin * lin + 4.0 * quad * w * a * a, 0.0)
        out = 2.0 * w * a * a / (lin + np.sqrt(disc))
    elif fam is Family.CUADRAS_AUGE and th == 1.0:
        out = u.copy()
    elif fam is Family.CUADRAS_AUGE:
        with np.errstate(divide="ignore", invalid="ignore"):
            jump_lo = (1.0 - th) * u ** (1.0 - th)
            jump_hi = u ** (1.0 - th)
            below = w * u**th / (1.0 - th)
            above = w ** (1.0 / (1.0 - th))
        out = np.where(w < jump_lo, below, np.where(w < jump_hi, u, above))
    elif fam is Family.SURVIVAL:
        out = _bisect(lambda v: conditional_cdf(spec, u, v), w)
    else:
        raise AssertionError(fam)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def sample_pairs(spec: CopulaSpec, rng: np.random.Generator, size: int | tuple = 1):
    """Draw ``(u, v)`` arrays of shape ``size`` by conditional inversion."""
    u = rng.random(size)
    w = rng.random(size)
    return u, np.asarray(conditional_quantile(spec, u, w))


def sample_pair(spec: CopulaSpec, rng: np.random.Generator) -> tuple[float, float]:
    u, v = sample_pairs(spec, rng, ())
    return float(u), float(v)


def mixed_copula_sample(family, theta: float, m: int, rng: np.random.Generator,
                        size: int | None = None) -> np.ndarray:
    """p-value vectors whose consecutive pairs (1,2), (3,4), ... follow the copula.

    Distinct pairs are independent; for odd ``m`` the last entry is an
    independent uniform. Returns shape ``(m,)`` or ``(size, m)``.
    """
    fam = Family.parse(family) if isinstance(family, str) else family
    if fam not in (Family.FGM, Family.AMH):
        raise ValueError("mixed copula models are defined for FGM and AMH")
    if m < 1:
        raise ValueError("m must be >= 1")
    spec = CopulaSpec(fam, theta)
    n = 1 if size is None else size
    out = np.empty((n, m))
    n_pairs = m // 2
    if n_pairs:
        u, v = sample_pairs(spec, rng, (n, n_pairs))
        out[:, 0:2 * n_pairs:2] = u
        out[:, 1:2 * n_pairs:2] = v
    if m % 2:
        out[:, -1] = rng.random(n)
    return out[0] if size is None else out


# Decay conditions -------------------------------------------------------------

@dataclass(frozen=True)
class FixedM:
    m: int = 10


@dataclass(frozen=True)
class Divergent:
    """``m = floor(t^(gamma/2))``.

    For NORMAL the schedule is set by ``beta`` (``delta_t t = t^beta``) and
    ``gamma = 2 beta / (1 + |rho|) - 1``; other families use ``gamma``
    directly with ``delta_t = t^(gamma - 1)``.
    """

    gamma: float | None = None
    beta: float | None = None


@dataclass
class DecayReport:
    t_grid: np.ndarray
    m: np.ndarray
    delta_t: np.ndarray
    p_joint: np.ndarray
    p_cross: np.ndarray
    scaled_joint: np.ndarray
    scaled_cross: np.ndarray
    gamma: float | None
    delta_schedule: str
    meta: dict = field(default_factory=dict)

    def decreasing(self) -> tuple[bool, bool]:
        return (bool(np.all(np.diff(self.scaled_joint) < 0)),
                bool(np.all(np.diff(self.scaled_cross) < 0)))

    @property
    def certified(self) -> bool:
        return all(self.decreasing())

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,m,delta_t,p_joint,p_cross,scaled_joint,scaled_cross\n")
        for row in zip(self.t_grid, self.m, self.delta_t, self.p_joint, self.p_cross,
                       self.scaled_joint, self.scaled_cross):
            t, m, *rest = row
            cells = [repr(float(t)), str(int(m))] + [repr(float(x)) for x in rest]
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()


def default_normal_beta(rho: float) -> float:
    """Midpoint of the admissible ``[(1 + |rho|)/2, 1)`` exponent range.

    Positive ``rho`` loads the joint event, negative ``rho`` the cross event
    (which then behaves like a joint event at ``|rho|``), hence ``|rho|``.
    """
    return (3.0 + abs(rho)) / 4.0


def condition_decay_check(
    spec: CopulaSpec,
    w_i: float | None,
    w_j: float | None,
    m_rule: FixedM | Divergent,
    t_grid,
    *,
    delta_exponent: float | None = None,
) -> DecayReport:
    """Evaluate both tail-rectangle probabilities over ``t_grid``.

    Joint event ``{U < w_i m/(pi t), V < w_j m/(pi delta_t t)}`` and cross
    event ``{U < w_i m/(pi (1+delta_t) t), V > 1 - w_j m/(pi delta_t t)}``,
    scaled by ``t`` (fixed ``m``) or ``t^(1+gamma)`` (divergent ``m``).

    ``w_i = None`` (or ``w_j = None``) means equal weights ``1/m`` at every
    grid point, so ``w m = 1``. ``delta_exponent`` overrides the schedule as
    ``delta_t = t^delta_exponent``.
    Fixed-m defaults: ``t^(-1/2)``, except correlated NORMAL, which needs
    ``delta_t t >> t^((1+|rho|)/2)`` and gets ``t^(beta - 1)``.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("t_grid must be a strictly increasing 1-D array")
    gamma = None
    is_normal = spec.family is Family.NORMAL
    if isinstance(m_rule, FixedM):
        m = np.full(t.shape, m_rule.m, dtype=float)
        if delta_exponent is not None:
            expo, label = delta_exponent, f"delta_t = t^{delta_exponent:g}"
        elif is_normal and spec.theta != 0:
            beta = default_normal_beta(spec.theta)
            expo, label = beta - 1.0, f"delta_t t = t^{beta:g} (normal, rho != 0)"
        else:
            expo, label = -0.5, "delta_t = t^-0.5"
        delta = t**expo
        scale = t
    elif isinstance(m_rule, Divergent):
        if is_normal:
            beta = m_rule.beta if m_rule.beta is not None else default_normal_beta(spec.theta)
            rho_abs = abs(spec.theta)
            if not (1.0 + rho_abs) / 2.0 <= beta < 1.0:
                raise ValueError("beta must lie in [(1 + |rho|)/2, 1)")
            gamma = 2.0 * beta / (1.0 + rho_abs) - 1.0
            expo, label = beta - 1.0, f"delta_t t = t^{beta:g}"
        else:
            if m_rule.gamma is None or not 0.0 < m_rule.gamma <= 1.0:
                raise ValueError("divergent regime needs gamma in (0, 1]")
            gamma = m_rule.gamma
            expo, label = gamma - 1.0, f"delta_t = t^{gamma - 1.0:g}"
        if delta_exponent is not None:
            expo, label = delta_exponent, f"delta_t = t^{delta_exponent:g}"
        m = np.maximum(np.floor(t ** (gamma / 2.0)), 1.0)
        delta = t**expo
        scale = t ** (1.0 + gamma)
    else:
        raise TypeError("m_rule must be FixedM or Divergent")

    wm_i = np.ones_like(m) if w_i is None else w_i * m
    wm_j = np.ones_like(m) if w_j is None else w_j * m
    a = wm_i / (math.pi * t)
    b = wm_j / (math.pi * delta * t)
    a_cross = wm_i / (math.pi * (1.0 + delta) * t)
    if np.any(a >= 1.0) or np.any(b >= 1.0):
        raise ValueError("t_grid starts too low: rectangle bounds reach 1")
    p_joint = np.array([rectangle_prob(spec, Rectangle(0.0, ai, 0.0, bi)) for ai, bi in zip(a, b)])
    p_cross = np.array([rectangle_prob(spec, Rectangle(0.0, ai, 1.0 - bi, 1.0))
                        for ai, bi in zip(a_cross, b)])
    return DecayReport(
        t_grid=t, m=m.astype(int), delta_t=delta, p_joint=p_joint, p_cross=p_cross,
        scaled_joint=scale * p_joint, scaled_cross=scale * p_cross, gamma=gamma,
        delta_schedule=label,
        meta={"family": spec.family.value, "theta": spec.theta, "w_i": w_i, "w_j": w_j},
    )
