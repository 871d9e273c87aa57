"""Posterior summaries of a chain (inclusion probabilities, HPM, MPM, BMA)
and selection/estimation metrics against a known truth."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NoPostBurninRecords
from .modelspace import InclusionVector
from .scorer import Dataset, Hyperparams


@dataclass
class PosteriorSummary:
    """Chain summary. Coefficients are posterior means in standardized units;
    use :func:`to_original_scale` for data units."""

    p: int
    inclusion_prob: np.ndarray
    hpm: InclusionVector
    hpm_log_posterior: float
    mpm: InclusionVector
    bma_coef: np.ndarray
    visited: dict
    n_post_burnin: int

    def to_dict(self, data: Dataset | None = None) -> dict:
        out = {"p": self.p, "nPostBurnin": self.n_post_burnin,
               "inclusionProb": self.inclusion_prob.tolist(),
               "hpm": list(self.hpm.active), "hpmLogPosterior": self.hpm_log_posterior,
               "mpm": list(self.mpm.active), "bmaCoefStandardized": self.bma_coef.tolist(),
               "nVisited": len(self.visited)}
        if data is not None:
            out["bmaCoef"] = to_original_scale(data, self.bma_coef).tolist()
        return out


@dataclass(frozen=True)
class SelectionMetrics:
    model_size: int
    fn: int
    fp: int
    fdr: float
    l2: float

    def as_row(self) -> dict:
        return {"size": self.model_size, "FN": self.fn, "FP": self.fp,
                "FDR": self.fdr, "L2": self.l2}


def posterior_mean_coef(data: Dataset, hp: Hyperparams, gamma: InclusionVector) -> np.ndarray:
    """``E[beta | gamma, y] = g/(1+g) * OLS`` on the active columns, zero elsewhere."""
    beta = np.zeros(data.p)
    idx = list(gamma.active)
    if idx:
        Xg = data.X[:, idx]
        c, low = linalg.cho_factor(Xg.T @ Xg, lower=True)
        beta[idx] = hp.g / (1 + hp.g) * linalg.cho_solve((c, low), Xg.T @ data.y)
    return beta


def to_original_scale(data: Dataset, beta_std) -> np.ndarray:
    """Map standardized-scale slopes back to the units of the raw X and y."""
    return np.asarray(beta_std, dtype=float) * data.y_scale / data.x_scale


def summarize(records, burnin_frac: float, data: Dataset, hp: Hyperparams) -> PosteriorSummary:
    """Fold a record stream into a :class:`PosteriorSummary`.

    The first ``ceil(burnin_frac * N)`` records are burn-in. Frequencies and
    BMA use the rest; the HPM is taken over every record since each carries
    its exact log posterior.
    """
    records = list(records)
    b0 = math.ceil(burnin_frac * len(records))
    post = records[b0:]
    if not post:
        raise NoPostBurninRecords(f"{len(records)} records, burn-in {b0}")
    p = data.p
    counts = Counter(tuple(r.model) for r in post)
    logpost = {}
    for r in records:
        logpost[tuple(r.model)] = r.log_posterior
    best_key = None
    for model, lp in logpost.items():
        g = InclusionVector.from_indices(p, model)
        key = (-lp, g.lex_key())
        if best_key is None or key < best_key:
            best_key, hpm, hpm_lp = key, g, lp
    n = len(post)
    incl = np.zeros(p)
    bma = np.zeros(p)
    for model in sorted(counts):
        c = counts[model]
        incl[list(model)] += c
        bma += c * posterior_mean_coef(data, hp, InclusionVector.from_indices(p, model))
    incl /= n
    bma /= n
    mpm = InclusionVector.from_indices(p, np.flatnonzero(incl > 0.5))
    visited = {InclusionVector.from_indices(p, m).bits: (counts.get(m, 0), lp)
               for m, lp in logpost.items()}
    return PosteriorSummary(p, incl, hpm, float(hpm_lp), mpm, bma, visited, n)


def compute_metrics(selected, true_beta, estimate) -> SelectionMetrics:
    """FN/FP against the support of ``true_beta``, FDR with an empty-selection
    guard, and the L2 distance between ``estimate`` and ``true_beta``."""
    true_beta = np.asarray(true_beta, dtype=float)
    sel = set(selected.active if isinstance(selected, InclusionVector) else map(int, selected))
    truth = set(np.flatnonzero(true_beta).tolist())
    fp = len(sel - truth)
    return SelectionMetrics(len(sel), len(truth - sel), fp, fp / max(len(sel), 1),
                            float(np.linalg.norm(np.asarray(estimate, dtype=float) - true_beta)))


def table_rows(summary: PosteriorSummary, data: Dataset, hp: Hyperparams, true_beta) -> dict:
    """MPM, HPM and BMA rows. Each fixed model is estimated by its posterior
    mean; the BMA row selects the MPM and reports the model-averaged L2."""
    out = {}
    for name, model in (("MPM", summary.mpm), ("HPM", summary.hpm)):
        est = to_original_scale(data, posterior_mean_coef(data, hp, model))
        out[name] = compute_metrics(model, true_beta, est)
    out["BMA"] = compute_metrics(summary.mpm, true_beta, to_original_scale(data, summary.bma_coef))
    return out


def write_summary_json(path, summary: PosteriorSummary, data: Dataset, metrics: dict | None = None):
    doc = summary.to_dict(data)
    if metrics is not None:
        doc["metrics"] = {k: m.as_row() for k, m in metrics.items()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def write_metrics_csv(path, metrics: dict, replicate=None):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["estimator", "size", "FN", "FP", "FDR", "L2"]
        w.writerow((["replicate"] if replicate is not None else []) + head)
        for name, m in metrics.items():
            row = [name, m.model_size, m.fn, m.fp, repr(m.fdr), repr(m.l2)]
            w.writerow(([replicate] if replicate is not None else []) + row)
