"""Synthetic regression instances: four correlated designs and the
evaluation-count benchmark, plus CSV round-tripping."""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import SupportOutOfRange
from .modelspace import InclusionVector
from .scorer import Dataset

DESIGNS = ("independent", "cs", "ar", "group", "eval")

# (rho1, rho2, rho3, rho4, rho5) for the group design.
GROUP_PRESETS = {
    "small": (0.5, 0.5, 1.5, 0.3, 0.3),
    "moderate": (1.0, 0.8, 1.0, 0.5, 0.5),
    "high": (1.5, 0.95, 0.5, 0.7, 0.7),
}

CS_BETA = (2.0, 2.5, -2.0, 2.5, -2.5)
AR_SUPPORT = (1, 2, 3, 4, 5, 20, 35, 60, 90, 150, 151, 300)
AR_BETA = (2, -3, 2, 2, -3, 3, -2, 3, -2, 3, 2, -2)
GROUP_SUPPORT = (1, 3, 5, 7, 8, 11, 12, 13)
GROUP_BETA = (1.5, 1.5, 1.5, 1.5, -1.5, 1.5, 1.5, 1.5)
EVAL_BETA = (1.3, 0.3, -1.2, -0.5)


@dataclass
class DesignSpec:
    kind: str
    n: int
    p: int
    rho: float | tuple | None = None
    noise_sd: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DESIGNS:
            raise ValueError(f"unknown design {self.kind!r}; choose from {DESIGNS}")
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if self.kind in ("cs", "ar") and not 0 <= float(self.rho or 0.0) < 1:
            raise ValueError("rho must lie in [0, 1)")


@dataclass
class SyntheticInstance:
    data: Dataset
    true_beta: np.ndarray
    spec: DesignSpec | None = None
    true_gamma: InclusionVector = field(init=False)

    def __post_init__(self):
        self.true_beta = np.asarray(self.true_beta, dtype=float)
        self.true_gamma = InclusionVector.from_indices(self.true_beta.size, np.flatnonzero(self.true_beta))


def _beta(p, support_1based, values):
    beta = np.zeros(p)
    beta[np.asarray(support_1based) - 1] = values
    return beta


def _finish(X, beta, noise_sd, rng, spec):
    y = X @ beta + noise_sd * rng.standard_normal(X.shape[0])
    return SyntheticInstance(Dataset(X, y), beta, spec)


def gen_independent(n: int, p: int, seed: int = 0, noise_sd: float = 1.5) -> SyntheticInstance:
    """i.i.d. N(0,1) columns; the first 8 coefficients have a random sign and
    magnitude ``log(n)/sqrt(n) + |N(0,1)|``."""
    if p < 8:
        raise SupportOutOfRange("independent design needs p >= 8")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    sign = np.where(rng.random(8) < 0.5, -1.0, 1.0)
    mag = math.log(n) / math.sqrt(n) + np.abs(rng.standard_normal(8))
    beta = np.zeros(p)
    beta[:8] = sign * mag
    return _finish(X, beta, noise_sd, rng, DesignSpec("independent", n, p, None, noise_sd, seed))


def gen_compound_symmetry(n: int, p: int, rho: float, seed: int = 0,
                          noise_sd: float = 1.5) -> SyntheticInstance:
    """Equicorrelated columns ``sqrt(rho) Z0 + sqrt(1-rho) Z_i``."""
    if p < len(CS_BETA):
        raise SupportOutOfRange("compound-symmetry design needs p >= 5")
    spec = DesignSpec("cs", n, p, rho, noise_sd, seed)
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal((n, 1))
    X = math.sqrt(rho) * z0 + math.sqrt(1 - rho) * rng.standard_normal((n, p))
    return _finish(X, _beta(p, range(1, 6), CS_BETA), noise_sd, rng, spec)


def gen_autoregressive(n: int, p: int, rho: float, seed: int = 0,
                       noise_sd: float = 2.0) -> SyntheticInstance:
    """AR(1) columns with ``corr(X_i, X_j) = rho^|i-j|``."""
    if p < max(AR_SUPPORT):
        raise SupportOutOfRange(f"autoregressive design needs p >= {max(AR_SUPPORT)}")
    spec = DesignSpec("ar", n, p, rho, noise_sd, seed)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    s = math.sqrt(1 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + s * Z[:, j]
    return _finish(X, _beta(p, AR_SUPPORT, AR_BETA), noise_sd, rng, spec)


def gen_group_structure(n: int, p: int, rho_levels="moderate", seed: int = 0,
                        noise_sd: float = 1.5) -> SyntheticInstance:
    """Collinear pairs (1,2), (3,4), (5,6) and linear groups 7-10 and 11-15;
    columns beyond 15 are i.i.d. N(0,1). ``rho_levels`` is a preset name or a
    5-tuple."""
    if p < 15:
        raise SupportOutOfRange("group design needs p >= 15")
    r1, r2, r3, r4, r5 = GROUP_PRESETS[rho_levels] if isinstance(rho_levels, str) else rho_levels
    spec = DesignSpec("group", n, p, tuple((r1, r2, r3, r4, r5)), noise_sd, seed)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 1))
    Z = rng.standard_normal((n, 16))  # Z[:, i] pairs with 1-based column i
    G = np.empty((n, 16))  # G[:, i] is 1-based column i; G[:, 0] unused
    for i in (1, 3, 5, 8, 9, 10, 12, 13, 14, 15):
        G[:, i] = r1 * z[:, 0] + 2 * Z[:, i]
    for i in (2, 4, 6):
        G[:, i] = r2 * G[:, i - 1] + r3 * Z[:, i]
    G[:, 7] = r4 * (G[:, 8] + G[:, 9] - G[:, 10]) + r5 * Z[:, 7]
    G[:, 11] = r5 * (G[:, 14] + G[:, 15] - G[:, 12] - G[:, 13]) + r5 * Z[:, 11]
    X = np.hstack([G[:, 1:], rng.standard_normal((n, p - 15))])
    return _finish(X, _beta(p, GROUP_SUPPORT, GROUP_BETA), noise_sd, rng, spec)


def gen_eval_benchmark(p: int, seed: int = 0, n: int = 49, block_rho: float = 0.5,
                       noise_var: float = 0.5) -> SyntheticInstance:
    """Four equicorrelated (``block_rho``) true columns padded with N(0,1)
    columns to width ``p``; coefficients (1.3, 0.3, -1.2, -0.5)."""
    if p < 4:
        raise SupportOutOfRange("benchmark needs p >= 4")
    spec = DesignSpec("eval", n, p, block_rho, math.sqrt(noise_var), seed)
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal((n, 1))
    block = math.sqrt(block_rho) * z0 + math.sqrt(1 - block_rho) * rng.standard_normal((n, 4))
    X = np.hstack([block, rng.standard_normal((n, p - 4))])
    return _finish(X, _beta(p, range(1, 5), EVAL_BETA), math.sqrt(noise_var), rng, spec)


def generate(spec: DesignSpec) -> SyntheticInstance:
    kw = {} if spec.noise_sd is None else {"noise_sd": spec.noise_sd}
    if spec.kind == "independent":
        return gen_independent(spec.n, spec.p, spec.seed, **kw)
    if spec.kind == "cs":
        return gen_compound_symmetry(spec.n, spec.p, float(spec.rho or 0.0), spec.seed, **kw)
    if spec.kind == "ar":
        return gen_autoregressive(spec.n, spec.p, float(spec.rho or 0.0), spec.seed, **kw)
    if spec.kind == "group":
        return gen_group_structure(spec.n, spec.p, spec.rho or "moderate", spec.seed, **kw)
    block = 0.5 if spec.rho is None else float(spec.rho)
    var = 0.5 if spec.noise_sd is None else spec.noise_sd ** 2
    return gen_eval_benchmark(spec.p, spec.seed, spec.n, block, var)


# -------------------------------------------------------------------------
# CSV

FILES = ("X.csv", "y.csv", "truth.csv")


def write_instance(out_dir, inst: SyntheticInstance) -> str:
    """Write X.csv, y.csv (no header) and truth.csv (index,beta); returns the digest."""
    os.makedirs(out_dir, exist_ok=True)
    np.savetxt(os.path.join(out_dir, "X.csv"), inst.data.X, fmt="%.17g", delimiter=",")
    np.savetxt(os.path.join(out_dir, "y.csv"), inst.data.y, fmt="%.17g")
    write_truth(os.path.join(out_dir, "truth.csv"), inst.true_beta)
    return instance_digest(out_dir)


def write_truth(path, beta):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "beta"])
        for i, b in enumerate(np.asarray(beta, dtype=float)):
            w.writerow([i, f"{b:.17g}"])


def read_truth(path, p: int | None = None) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    size = p if p is not None else (max(int(r["index"]) for r in rows) + 1 if rows else 0)
    beta = np.zeros(size)
    for r in rows:
        beta[int(r["index"])] = float(r["beta"])
    return beta


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def read_instance(in_dir) -> tuple[Dataset, np.ndarray | None]:
    X = read_matrix(os.path.join(in_dir, "X.csv"))
    y = np.loadtxt(os.path.join(in_dir, "y.csv"), delimiter=",", ndmin=1)
    truth = os.path.join(in_dir, "truth.csv")
    beta = read_truth(truth, X.shape[1]) if os.path.exists(truth) else None
    return Dataset(X, y), beta


def instance_digest(in_dir) -> str:
    """SHA-256 over the instance files in a fixed order."""
    h = hashlib.sha256()
    for name in FILES:
        path = os.path.join(in_dir, name)
        if os.path.exists(path):
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()
