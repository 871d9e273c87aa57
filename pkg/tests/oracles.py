"""Independent reference computations used by the tests.

Nothing here calls into the package's scoring code.
"""

import math
from itertools import combinations

import mpmath
import numpy as np


def log_marginal_by_quadrature(X, y, idx, g, dps=30):
    """log of the integral over beta and phi of N(y; X_g beta, I/phi)
    N(beta; 0, g (X_g'X_g)^-1 / phi) (1/phi).

    beta is integrated in closed form (y | phi is Gaussian with covariance
    (I + g P)/phi, P the hat matrix), phi numerically.
    """
    n = len(y)
    S = np.eye(n)
    if idx:
        Xg = X[:, list(idx)]
        S = S + g * Xg @ np.linalg.solve(Xg.T @ Xg, Xg.T)
    sign, logdet = np.linalg.slogdet(S)
    assert sign > 0
    quad = float(y @ np.linalg.solve(S, y))
    mpmath.mp.dps = dps
    c = mpmath.mpf(-0.5 * n * math.log(2 * math.pi) - 0.5 * logdet)
    q = mpmath.mpf(quad)
    # integrand phi^(n/2 - 1) exp(-phi q / 2); split at the mode for accuracy
    mode = (n / 2 - 1) * 2 / quad
    f = lambda phi: phi ** (mpmath.mpf(n) / 2 - 1) * mpmath.exp(-phi * q / 2)
    val = mpmath.quad(f, [0, mode / 4, mode, 4 * mode, mpmath.inf])
    return float(c + mpmath.log(val))


def log_beta_binomial_prior(k, p, u, v, dps=40):
    """log of B(k+u, p-k+v) / B(u, v) in extended precision."""
    mpmath.mp.dps = dps
    return float(mpmath.log(mpmath.beta(k + u, p - k + v) / mpmath.beta(u, v)))


def brute_neighborhoods(active, p):
    """Add, remove and swap neighbors of a model as sets of frozensets."""
    a = frozenset(active)
    ina = [i for i in range(p) if i not in a]
    add = {a | {i} for i in ina}
    rem = {a - {i} for i in a}
    swp = {(a - {r}) | {j} for r in a for j in ina}
    return add, rem, swp


def all_models(p):
    for k in range(p + 1):
        yield from combinations(range(p), k)


def direct_score_sum(z_trace, b0, zeta, v0=1.0):
    """v_t by explicit summation v0 + sum_s c(s) z_s with the step factor written out."""
    out = []
    for t in range(1, len(z_trace) + 1):
        total = v0
        for s in range(1, t + 1):
            c = s / b0 if s <= b0 else (s - b0) ** (-zeta)
            total += c * z_trace[s - 1]
        out.append(total)
    return np.array(out)
