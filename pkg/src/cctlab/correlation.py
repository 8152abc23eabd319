"""Correlation models for the latent test statistics and MVN sampling.

Models: equal correlation (compound symmetry), eigenvalue-spiked, AR(1),
polynomial decay and an explicit matrix. Factorization is a symmetric
eigendecomposition with tiny negative eigenvalues clipped, which survives the
near-singular spiked matrices where Cholesky fails.
"""
from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import special as sc

from ._parallel import substream
from .combiners import P_CEIL, P_FLOOR

EIG_CLIP = -1e-10


class Model(str, enum.Enum):
    EQUAL_CORR = "EQUAL_CORR"
    SPIKED_EIGEN = "SPIKED_EIGEN"
    AR1 = "AR1"
    POLY_DECAY = "POLY_DECAY"
    EXPLICIT = "EXPLICIT"

    @classmethod
    def parse(cls, name: str) -> "Model":
        key = name.strip().upper().replace("-", "_")
        aliases = {"EQUAL": "EQUAL_CORR", "SPIKED": "SPIKED_EIGEN", "POLY": "POLY_DECAY",
                   "AR(1)": "AR1", "COMPOUND_SYMMETRY": "EQUAL_CORR"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class CorrelationSpec:
    model: Model
    m: int
    rho: float | None = None
    a: float | None = None
    d: int | None = None
    base: float = 3.0
    seed: int = 0
    matrix: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        model = Model.parse(self.model) if isinstance(self.model, str) else self.model
        object.__setattr__(self, "model", model)
        m = self.m
        if m < 1:
            raise ValueError("m must be >= 1")
        if model is Model.EQUAL_CORR:
            rho = self._need("rho")
            if not abs(rho) < 1 or (m > 1 and rho <= -1.0 / (m - 1)):
                raise ValueError(f"equal correlation rho={rho} is not positive definite for m={m}")
        elif model is Model.AR1:
            if not abs(self._need("rho")) < 1:
                raise ValueError("AR(1) needs |rho| < 1")
        elif model is Model.POLY_DECAY:
            if not self._need("a") > 0:
                raise ValueError("polynomial decay needs a > 0")
        elif model is Model.SPIKED_EIGEN:
            d = int(self._need("d"))
            if not 0 <= d < m:
                raise ValueError("spiked model needs 0 <= d < m")
            if self.base <= 1:
                raise ValueError("spike base must exceed 1")
        elif model is Model.EXPLICIT:
            mat = np.asarray(self._need("matrix"), dtype=float)
            if mat.shape != (m, m):
                raise ValueError(f"explicit matrix has shape {mat.shape}, expected ({m}, {m})")

    def _need(self, name):
        val = getattr(self, name)
        if val is None:
            raise ValueError(f"{self.model.value} requires parameter {name!r}")
        return val

    def with_m(self, m: int) -> "CorrelationSpec":
        return CorrelationSpec(self.model, m, self.rho, self.a, self.d, self.base, self.seed,
                               self.matrix)

    def describe(self) -> dict:
        out = {"model": self.model.value, "m": self.m}
        for key in ("rho", "a", "d"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.model is Model.SPIKED_EIGEN:
            out.update(base=self.base, seed=self.seed)
        return out


def parse_correlation_spec(text: str | dict) -> CorrelationSpec:
    """Build a spec from ``key = value`` lines (or an equivalent dict).

    Recognised keys: model, m, rho, a, d, base, seed.
    """
    if isinstance(text, str):
        entries = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"expected 'key = value', got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            entries[key.lower()] = val
    else:
        entries = {k.lower(): v for k, v in text.items()}
    if "model" not in entries or "m" not in entries:
        raise ValueError("correlation stanza needs 'model' and 'm'")
    kw = {}
    for key, conv in (("rho", float), ("a", float), ("d", int), ("base", float), ("seed", int)):
        if key in entries:
            kw[key] = conv(entries[key])
    return CorrelationSpec(entries["model"], int(entries["m"]), **kw)


@dataclass
class CorrelationMatrix:
    entries: np.ndarray
    factor: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def _factorize(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(r)
    if vals[0] < EIG_CLIP:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {vals[0]:.3g})")
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals), vals


def haar_orthogonal(m: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((m, m))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def spiked_eigenvalues(m: int, d: int, base: float = 3.0) -> np.ndarray:
    lam = np.ones(m)
    lam[:d] = m / base ** np.arange(1, d + 1)
    return lam


def build_correlation(spec: CorrelationSpec) -> CorrelationMatrix:
    m = spec.m
    lag = np.abs(np.subtract.outer(np.arange(m), np.arange(m)))
    meta: dict = {"spec": spec.describe()}
    if spec.model is Model.EQUAL_CORR:
        r = np.where(lag == 0, 1.0, spec.rho)
    elif spec.model is Model.AR1:
        r = float(spec.rho) ** lag if spec.rho != 0 else np.eye(m)
    elif spec.model is Model.POLY_DECAY:
        r = 1.0 / (1.0 + lag.astype(float) ** spec.a)
    elif spec.model is Model.SPIKED_EIGEN:
        lam = spiked_eigenvalues(m, spec.d, spec.base)
        q = haar_orthogonal(m, substream(spec.seed, 0x5b1ed))
        sigma = (q * lam) @ q.T
        sigma = 0.5 * (sigma + sigma.T)
        scale = 1.0 / np.sqrt(np.diag(sigma))
        r = sigma * np.outer(scale, scale)
        meta["target_eigenvalues"] = np.sort(lam)[::-1]
    else:
        r = np.asarray(spec.matrix, dtype=float).copy()
        if not np.allclose(r, r.T, atol=1e-12, rtol=0):
            raise ValueError("explicit matrix is not symmetric")
        if not np.allclose(np.diag(r), 1.0, atol=1e-12, rtol=0):
            raise ValueError("explicit matrix must have unit diagonal")
        r = 0.5 * (r + r.T)
    r = np.asarray(r, dtype=float)
    np.fill_diagonal(r, 1.0)
    factor, vals = _factorize(r)
    meta["realized_eigenvalues"] = vals[::-1]
    return CorrelationMatrix(r, factor, meta)


# Means and sampling -----------------------------------------------------------

@dataclass(frozen=True)
class MeanSpec:
    """Sparse mean vector: ``round(support_fraction * m)`` entries equal to ``magnitude``.

    ``magnitude=None`` means the default ``sqrt(2 * 0.6 * log m)``.
    """

    support_fraction: float = 0.0
    magnitude: float | None = None
    placement: str = "prefix"
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.support_fraction <= 1.0:
            raise ValueError("support_fraction must be in [0, 1]")
        if self.magnitude is not None and self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.placement not in ("prefix", "random"):
            raise ValueError("placement must be 'prefix' or 'random'")

    def magnitude_for(self, m: int) -> float:
        if self.magnitude is not None:
            return float(self.magnitude)
        return math.sqrt(2.0 * 0.6 * math.log(m)) if m > 1 else 0.0

    def vector(self, m: int) -> np.ndarray:
        k = int(round(self.support_fraction * m))
        mu = np.zeros(m)
        if k == 0:
            return mu
        if self.placement == "prefix":
            idx = np.arange(k)
        else:
            idx = substream(self.seed, 0x3ea5).choice(m, size=k, replace=False)
        mu[idx] = self.magnitude_for(m)
        return mu


def mvn_sample(r: CorrelationMatrix, mu, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` rows of ``N(mu, R)`` as ``mu + g L^T`` with ``L L^T = R``."""
    if isinstance(mu, MeanSpec):
        mu = mu.vector(r.m)
    g = rng.standard_normal((n, r.m))
    z = g @ r.factor.T
    if mu is not None:
        z += np.asarray(mu, dtype=float)
    return z


def z_to_pvalues(z):
    """Two-sided normal p-values ``2 (1 - Phi(|z|))``, clamped into (0, 1)."""
    p = 2.0 * sc.ndtr(-np.abs(np.asarray(z, dtype=float)))
    p = np.clip(p, P_FLOOR, P_CEIL)
    return float(p) if p.ndim == 0 else p


# Dependence diagnostic ----------------------------------------------------------

def varrho_profile(r: CorrelationMatrix | np.ndarray, k_max: int) -> np.ndarray:
    """``sup_{|i-j| >= k} |rho_ij|`` for ``k = 1..k_max``."""
    mat = r.entries if isinstance(r, CorrelationMatrix) else np.asarray(r, dtype=float)
    m = mat.shape[0]
    if not 1 <= k_max < m:
        raise ValueError("need 1 <= k_max < m")
    per_lag = np.array([np.max(np.abs(np.diagonal(mat, offset=k))) for k in range(1, m)])
    suffix_max = np.maximum.accumulate(per_lag[::-1])[::-1]
    return suffix_max[:k_max]


def varrho_diagnostic(varrho, s: float = 0.5) -> np.ndarray:
    """``varrho_k (log k)^(2+s)``; tends to 0 under the weak-dependence assumption."""
    k = np.arange(1, len(varrho) + 1)
    return np.asarray(varrho) * np.log(k) ** (2.0 + s)


# Binary fixture format ------------------------------------------------------------

def save_matrix(path, mat) -> None:
    """Header: m as int64 little-endian, then row-major float64 little-endian."""
    mat = np.asarray(mat.entries if isinstance(mat, CorrelationMatrix) else mat, dtype="<f8")
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("need a square matrix")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<q", mat.shape[0]))
        fh.write(np.ascontiguousarray(mat).tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        (m,) = struct.unpack("<q", fh.read(8))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != m * m:
        raise ValueError(f"matrix file holds {data.size} values, expected {m * m}")
    return data.reshape(m, m).astype(float)
