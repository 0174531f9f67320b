"""Covariance-matrix-adaptation evolution strategy for box-bounded
black-box minimization.

Standard (mu/mu_w, lambda)-CMA-ES with the usual parameter schedule
(population 4 + floor(3 ln n), log-rank recombination weights, cumulation
paths for sigma and C).  The search runs in coordinates normalized to the
unit box: the initial mean is the box center, the initial step size is
0.3 of the box width, and candidates are clipped onto the box before
evaluation.  All sampling comes from the package RNG, so a seed fixes the
entire run; the best *evaluated* point is tracked per evaluation and is
what gets returned, making best-so-far loss non-increasing in the
evaluation count by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .rng import SplitMix64, derive_seed


@dataclass
class CmaResult:
    x: np.ndarray  # best evaluated point, box coordinates
    loss: float
    evaluations: int
    best_curve: list[float]  # best-so-far loss after each evaluation


def default_population(n: int) -> int:
    return 4 + int(math.floor(3.0 * math.log(n)))


def minimize(
    objective,
    lower,
    upper,
    budget: int = 2000,
    seed: int = 0,
    sigma0: float = 0.3,
) -> CmaResult:
    """Minimize objective(x) for x in the box [lower, upper]."""
    lo = np.asarray(lower, dtype=np.float64)
    hi = np.asarray(upper, dtype=np.float64)
    if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi <= lo):
        raise ParameterError("invalid bounds box")
    if budget < 1:
        raise ParameterError("budget must be at least 1")
    n = lo.size
    span = hi - lo

    lam = default_population(n)
    mu = lam // 2
    raw = np.array([math.log(mu + 0.5) - math.log(i + 1.0) for i in range(mu)])
    weights = raw / raw.sum()
    mu_eff = 1.0 / np.sum(weights**2)

    cc = (4.0 + mu_eff / n) / (n + 4.0 + 2.0 * mu_eff / n)
    cs = (mu_eff + 2.0) / (n + mu_eff + 5.0)
    c1 = 2.0 / ((n + 1.3) ** 2 + mu_eff)
    cmu = min(1.0 - c1, 2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((n + 2.0) ** 2 + mu_eff))
    damps = 1.0 + 2.0 * max(0.0, math.sqrt((mu_eff - 1.0) / (n + 1.0)) - 1.0) + cs
    chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

    gen = SplitMix64(derive_seed(seed, 0xCE5))
    mean = np.full(n, 0.5)
    sigma = sigma0
    cov = np.eye(n)
    ps = np.zeros(n)
    pc = np.zeros(n)

    best_loss = math.inf
    best_x = lo + mean * span
    best_curve: list[float] = []
    evals = 0
    generation = 0

    while evals < budget:
        vals, basis = np.linalg.eigh(cov)
        vals = np.maximum(vals, 1e-20)
        d = np.sqrt(vals)

        zs = np.array([gen.gausses(n) for _ in range(lam)])
        ys = zs * d[None, :] @ basis.T
        us = np.clip(mean[None, :] + sigma * ys, 0.0, 1.0)

        take = min(lam, budget - evals)
        losses = np.empty(lam)
        losses[:] = np.inf
        for k in range(take):
            x = lo + us[k] * span
            fx = float(objective(x))
            losses[k] = fx
            evals += 1
            if fx < best_loss:
                best_loss = fx
                best_x = x.copy()
            best_curve.append(best_loss)
        if take < lam:
            break  # budget exhausted mid-generation; no update possible

        order = np.argsort(losses, kind="stable")
        sel = us[order[:mu]]
        old_mean = mean
        mean = weights @ sel

        inv_sqrt = basis @ np.diag(1.0 / d) @ basis.T
        delta = (mean - old_mean) / sigma
        ps = (1.0 - cs) * ps + math.sqrt(cs * (2.0 - cs) * mu_eff) * (inv_sqrt @ delta)
        generation += 1
        hsig = float(
            np.dot(ps, ps) / n / (1.0 - (1.0 - cs) ** (2.0 * generation)) < 2.0 + 4.0 / (n + 1.0)
        )
        pc = (1.0 - cc) * pc + hsig * math.sqrt(cc * (2.0 - cc) * mu_eff) * delta

        artmp = (sel - old_mean[None, :]) / sigma
        cov = (
            (1.0 - c1 - cmu) * cov
            + c1 * (np.outer(pc, pc) + (1.0 - hsig) * cc * (2.0 - cc) * cov)
            + cmu * (artmp.T * weights) @ artmp
        )
        cov = (cov + cov.T) / 2.0
        sigma = sigma * math.exp((cs / damps) * (np.linalg.norm(ps) / chi_n - 1.0))
        sigma = min(sigma, 10.0)

    return CmaResult(x=best_x, loss=best_loss, evaluations=evals, best_curve=best_curve)
