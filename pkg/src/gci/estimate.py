"""De-confounded treatment-effect estimation and curve metrics.

Two estimators are provided: outcome-regression adjustment (clamp the
treatment, average predictions over the empirical covariate
distribution) and stabilized inverse-probability weighting for a
continuous treatment.  Both produce an EffectCurve: mean potential
outcome over a treatment grid plus its finite-difference slope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .dataset import Dataset
from .errors import ContractError, DensityError, PositivityError
from .seeding import subseed
from .stats import regress

__all__ = [
    "EffectCurve",
    "AdjustmentSet",
    "regression_adjust",
    "ipw_curve",
    "mtef_rmse",
    "ate_binary",
    "quantile_grid",
]

WEIGHT_CLIP = (0.02, 50.0)
MIN_EFFECTIVE_SAMPLE = 30


@dataclass(frozen=True)
class EffectCurve:
    """Mean potential outcome mu over an ascending treatment grid.

    mtef[k] = (mu[k+1] - mu[k]) / (t[k+1] - t[k]); it always has one
    entry fewer than the grid and is recomputed at construction so the
    finite-difference identity holds exactly.
    """

    t_grid: np.ndarray
    mu: np.ndarray
    mtef: np.ndarray = field(init=False)
    warnings: tuple[str, ...] = ()

    def __init__(self, t_grid, mu, warnings: Sequence[str] = ()):
        t = np.asarray(t_grid, dtype=float)
        m = np.asarray(mu, dtype=float)
        if t.ndim != 1 or t.shape != m.shape:
            raise ContractError("grid and means must be equal-length vectors")
        if t.size < 2:
            raise ContractError("need at least two grid points")
        if not np.all(np.diff(t) > 0):
            raise ContractError("treatment grid must be strictly ascending")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(m))):
            raise ContractError("non-finite curve values")
        t.setflags(write=False)
        m.setflags(write=False)
        mtef = np.diff(m) / np.diff(t)
        mtef.setflags(write=False)
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "mu", m)
        object.__setattr__(self, "mtef", mtef)
        object.__setattr__(self, "warnings", tuple(warnings))

    def to_csv_text(self) -> str:
        lines = ["t,mu,mtef"]
        for k, (t, m) in enumerate(zip(self.t_grid, self.mu)):
            slope = repr(float(self.mtef[k - 1])) if k > 0 else ""
            lines.append(f"{float(t)!r},{float(m)!r},{slope}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")


@dataclass(frozen=True)
class AdjustmentSet:
    """Confounder columns to adjust for, with their provenance."""

    names: tuple[str, ...]
    provenance: str  # oracle | discovered | full-covariates

    def __init__(self, names: Sequence[str], provenance: str):
        if provenance not in ("oracle", "discovered", "full-covariates"):
            raise ContractError(f"unknown provenance {provenance!r}")
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "provenance", provenance)

    def validate_against(self, d: Dataset, treatment: str, outcome: str) -> None:
        for n in self.names:
            if n not in d.columns:
                raise ContractError(f"adjustment column {n!r} not in dataset")
            if n in (treatment, outcome):
                raise ContractError(f"adjustment set must exclude {n!r}")


def quantile_grid(t: np.ndarray, size: int = 10) -> np.ndarray:
    """Equally spaced quantiles of the treatment values, deduplicated."""
    qs = np.linspace(0.0, 1.0, size)
    grid = np.quantile(np.asarray(t, dtype=float), qs)
    keep = np.concatenate([[True], np.diff(grid) > 1e-12])
    return grid[keep]


def _check_grid_support(t_grid: np.ndarray, t: np.ndarray) -> None:
    lo, hi = float(t.min()), float(t.max())
    for g in np.asarray(t_grid, dtype=float):
        if g < lo - 1e-12 or g > hi + 1e-12:
            raise PositivityError(
                f"grid point {g} outside observed treatment range [{lo}, {hi}]"
            )


def adjusted_means(
    fit: Dataset,
    evaluate: Dataset,
    treatment: str,
    outcome: str,
    adj: AdjustmentSet,
    t_grid: np.ndarray,
    seed: int = 0,
) -> EffectCurve:
    """Fit E[y | t, adj] on `fit` rows; for each grid level clamp t and
    average predictions over `evaluate`'s covariate rows."""
    adj.validate_against(fit, treatment, outcome)
    feats = [treatment, *adj.names]
    model = regress(fit.matrix(feats), fit.column(outcome), seed=subseed(seed, "regadj"))
    X_eval = evaluate.matrix(feats)
    mu = np.empty(len(t_grid))
    for k, g in enumerate(np.asarray(t_grid, dtype=float)):
        Xg = X_eval.copy()
        Xg[:, 0] = g
        mu[k] = float(model.predict(Xg).mean())
    return EffectCurve(t_grid, mu)


def regression_adjust(
    d: Dataset,
    adj: AdjustmentSet,
    t_grid: np.ndarray,
    treatment: str = "t",
    outcome: str = "y",
    seed: int = 0,
) -> EffectCurve:
    """Backdoor adjustment by outcome regression over the full dataset."""
    _check_grid_support(t_grid, d.column(treatment))
    return adjusted_means(d, d, treatment, outcome, adj, t_grid, seed=seed)


def ipw_weights(
    d: Dataset,
    adj: AdjustmentSet,
    treatment: str = "t",
    outcome: str = "y",
    seed: int = 0,
) -> np.ndarray:
    """Stabilized density-ratio weights p(t) / p(t | adj), clipped.

    Both densities are Gaussian: the marginal uses the sample moments of
    t, the conditional uses the kernel-ridge mean with homoscedastic
    residual variance.
    """
    adj.validate_against(d, treatment, outcome)
    t = d.column(treatment)
    sd_t = float(t.std())
    if sd_t < 1e-12:
        raise DensityError("treatment column is constant")
    numerator = norm.pdf(t, loc=float(t.mean()), scale=sd_t)
    if adj.names:
        fit = regress(d.matrix(list(adj.names)), t, seed=subseed(seed, "ipw-mean"))
        sigma2 = float(np.mean(fit.residuals**2))
        if sigma2 <= 0:
            raise DensityError("nonpositive conditional treatment variance")
        denominator = norm.pdf(t, loc=fit.fitted, scale=np.sqrt(sigma2))
    else:
        denominator = numerator.copy()
    w = numerator / np.maximum(denominator, 1e-300)
    return np.clip(w, *WEIGHT_CLIP)


def _local_linear(t: np.ndarray, y: np.ndarray, w: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Weighted local-linear fit of y on t evaluated at grid points.

    Gaussian kernel, Silverman bandwidth on t.
    """
    n = len(t)
    h = 1.06 * float(t.std()) * n ** (-0.2)
    h = max(h, 1e-6)
    mu = np.empty(len(grid))
    for k, g in enumerate(np.asarray(grid, dtype=float)):
        k_w = np.exp(-((t - g) ** 2) / (2 * h * h))
        omega = w * k_w
        X = np.column_stack([np.ones(n), t - g])
        WX = X * omega[:, None]
        coef, *_ = np.linalg.lstsq(WX.T @ X, WX.T @ y, rcond=None)
        mu[k] = float(coef[0])
    return mu


def ipw_curve(
    d: Dataset,
    adj: AdjustmentSet,
    t_grid: np.ndarray,
    treatment: str = "t",
    outcome: str = "y",
    seed: int = 0,
    check_support: bool = True,
) -> EffectCurve:
    """Inverse-probability-weighted dose-response curve (continuous t)."""
    t = d.column(treatment)
    if check_support:
        _check_grid_support(t_grid, t)
    w = ipw_weights(d, adj, treatment, outcome, seed=seed)
    warnings: list[str] = []
    ess = float(w.sum() ** 2 / np.sum(w**2))
    if ess < MIN_EFFECTIVE_SAMPLE:
        warnings.append(f"effective sample size {ess:.1f} below {MIN_EFFECTIVE_SAMPLE}")
    mu = _local_linear(t, d.column(outcome), w, t_grid)
    return EffectCurve(t_grid, mu, warnings=warnings)


def mtef_rmse(truth: EffectCurve, est: EffectCurve) -> float:
    """Root mean squared error between interval-wise treatment-effect slopes."""
    if not np.array_equal(truth.t_grid, est.t_grid):
        raise ContractError("effect curves have different grids")
    return float(np.sqrt(np.mean((truth.mtef - est.mtef) ** 2)))


def ate_binary(
    d: Dataset,
    adj: AdjustmentSet,
    treatment: str = "t",
    outcome: str = "y",
    seed: int = 0,
) -> float:
    """Backdoor average treatment effect for a binary treatment."""
    t = d.column(treatment)
    levels = set(np.unique(t))
    if not levels <= {0.0, 1.0}:
        raise ContractError("ate_binary requires a 0/1 treatment column")
    if len(levels) < 2:
        raise PositivityError("treatment has a single arm")
    adj.validate_against(d, treatment, outcome)
    feats = [treatment, *adj.names]
    model = regress(d.matrix(feats), d.column(outcome), seed=subseed(seed, "ate"))
    X1 = d.matrix(feats)
    X0 = X1.copy()
    X1[:, 0] = 1.0
    X0[:, 0] = 0.0
    return float(np.mean(model.predict(X1) - model.predict(X0)))
