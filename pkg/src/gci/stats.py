"""Statistical primitives: correlation screening, kernel ridge regression,
the residual-covariance conditional-independence test, the HSIC
independence test, and the additive-noise direction test.

The regression engine is shared by the conditional-independence and
direction tests: RBF kernel ridge with median-heuristic bandwidth and
ridge penalty 1e-3 * n_fit.  Feature columns are z-scored before
distances are taken, which makes accept/reject decisions invariant to
positive rescaling of any column.  Rows are subsampled (seeded) to cap
the Gram size; fitted values and residuals are still produced for every
row.

All operations are pure given (data, seed).  CiEngine adds memoization of
per-conditioning-set factorizations and residuals so that a discovery run
touching the same conditioning sets many times stays cheap; it produces
bit-identical results to the one-shot functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.stats import gamma as gamma_dist
from scipy.stats import norm

from .dataset import Dataset
from .errors import ContractError, DegenerateDataError, InsufficientDataError
from .seeding import subseed

__all__ = [
    "CorMatrix",
    "TestResult",
    "RegressionFit",
    "cor_matrix",
    "regress",
    "gcm_test",
    "hsic_test",
    "anm_direction",
    "CiEngine",
]

REGRESSION_CAP = 1000
HSIC_CAP = 500
RIDGE_SCALE = 1e-3
MIN_ROWS = 20


@dataclass(frozen=True)
class CorMatrix:
    """Absolute Pearson correlations between all columns."""

    names: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.shape != (len(self.names), len(self.names)):
            raise ContractError("correlation matrix shape mismatch")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ContractError("correlation matrix not symmetric")
        if not np.allclose(np.diag(m), 1.0, atol=1e-12):
            raise ContractError("correlation diagonal must be 1")
        if m.min() < -1e-12 or m.max() > 1 + 1e-12:
            raise ContractError("correlations must lie in [0, 1]")

    def value(self, a: str, b: str) -> float:
        return float(self.matrix[self.names.index(a), self.names.index(b)])


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str

    def __post_init__(self):
        if not np.isfinite(self.statistic):
            raise ContractError("non-finite test statistic")
        if not 0.0 <= self.p_value <= 1.0:
            raise ContractError(f"p-value {self.p_value} outside [0, 1]")


def cor_matrix(d: Dataset) -> CorMatrix:
    """Absolute Pearson correlation of every column pair."""
    if d.n_rows < 3:
        raise InsufficientDataError("need at least 3 rows for correlations")
    sds = d.values.std(axis=0)
    for name, sd in zip(d.columns, sds):
        if sd < 1e-12:
            raise DegenerateDataError(f"column {name!r} has zero variance")
    m = np.abs(np.corrcoef(d.values.T))
    m = np.clip((m + m.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(m, 1.0)
    return CorMatrix(names=d.columns, matrix=m)


def _standardize(X: np.ndarray) -> np.ndarray:
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return (X - mu) / sd


def _median_bandwidth(X: np.ndarray) -> float:
    """Median pairwise Euclidean distance; 1.0 when degenerate."""
    d2 = cdist(X, X, "sqeuclidean")
    upper = d2[np.triu_indices_from(d2, k=1)]
    positive = upper[upper > 0]
    if positive.size == 0:
        return 1.0
    return float(np.sqrt(np.median(positive)))


def _rbf(A: np.ndarray, B: np.ndarray, sigma: float) -> np.ndarray:
    return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * sigma * sigma))


class _KernelModel:
    """Per-conditioning-set state: subsample, bandwidth, Cholesky factor."""

    def __init__(self, X: np.ndarray, fit_idx: np.ndarray):
        self.fit_idx = fit_idx
        Xs = _standardize(X)
        self.X_fit = Xs[fit_idx]
        self.sigma = _median_bandwidth(self.X_fit)
        n_fit = len(fit_idx)
        self.ridge = RIDGE_SCALE * n_fit
        K = _rbf(self.X_fit, self.X_fit, self.sigma)
        self.chol = cho_factor(K + self.ridge * np.eye(n_fit), lower=True)
        self.K_all = _rbf(Xs, self.X_fit, self.sigma)

    def fit_target(self, y: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        """Returns (beta, fit-mean, fitted values over all rows)."""
        y_fit = y[self.fit_idx]
        ymean = float(y_fit.mean())
        beta = cho_solve(self.chol, y_fit - ymean)
        fitted = self.K_all @ beta + ymean
        return beta, ymean, fitted


@dataclass
class RegressionFit:
    """Result of a kernel ridge fit, able to predict at new feature rows."""

    fitted: np.ndarray
    residuals: np.ndarray
    bandwidth: float
    ridge: float
    _X_fit: np.ndarray
    _beta: np.ndarray
    _ymean: float
    _feat_mean: np.ndarray
    _feat_sd: np.ndarray

    @property
    def residual_mean(self) -> float:
        return float(self.residuals.mean())

    def predict(self, features: np.ndarray) -> np.ndarray:
        F = np.asarray(features, dtype=float)
        if F.ndim == 1:
            F = F.reshape(-1, 1)
        Fs = (F - self._feat_mean) / self._feat_sd
        return _rbf(Fs, self._X_fit, self.bandwidth) @ self._beta + self._ymean


def regress(features: np.ndarray, target: np.ndarray, seed: int = 0) -> RegressionFit:
    """RBF kernel ridge of target on features.

    Bandwidth is the median pairwise distance over the (standardized,
    subsampled) fit rows; penalty 1e-3 * n_fit; the target is centered on
    the fit rows so predictions are exactly shift-equivariant.
    """
    F = np.asarray(features, dtype=float)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    y = np.asarray(target, dtype=float).ravel()
    if F.shape[0] != y.shape[0]:
        raise ContractError("features and target row counts differ")
    n = y.shape[0]
    if n < MIN_ROWS:
        raise InsufficientDataError(f"need >= {MIN_ROWS} rows, got {n}")
    if n > REGRESSION_CAP:
        rng = np.random.default_rng(seed)
        fit_idx = np.sort(rng.choice(n, size=REGRESSION_CAP, replace=False))
    else:
        fit_idx = np.arange(n)
    mu = F.mean(axis=0)
    sd = F.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    model = _KernelModel(F, fit_idx)
    beta, ymean, fitted = model.fit_target(y)
    return RegressionFit(
        fitted=fitted,
        residuals=y - fitted,
        bandwidth=model.sigma,
        ridge=model.ridge,
        _X_fit=model.X_fit,
        _beta=beta,
        _ymean=ymean,
        _feat_mean=mu,
        _feat_sd=sd,
    )


def _hsic_parts(u: np.ndarray, v: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Biased HSIC V-statistic (n * HSIC_b scale) plus centered kernels."""
    n = len(u)
    U = u.reshape(-1, 1)
    V = v.reshape(-1, 1)
    su = _median_bandwidth(U)
    sv = _median_bandwidth(V)
    K = _rbf(U, U, su)
    L = _rbf(V, V, sv)
    H = np.eye(n) - np.ones((n, n)) / n
    Kc = H @ K @ H
    Lc = H @ L @ H
    stat = float(np.sum(Kc * Lc) / n)
    return stat, K, L


def hsic_test(
    u: np.ndarray,
    v: np.ndarray,
    seed: int = 0,
    method: str = "gamma",
    permutations: int = 200,
) -> TestResult:
    """HSIC independence test with RBF kernels and median bandwidths.

    The null is approximated by a two-moment gamma fit; pass
    method="permutation" for a permutation null (audit mode).  Rows are
    subsampled to HSIC_CAP (seeded, pairs kept aligned) when longer.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if len(u) != len(v):
        raise ContractError("hsic_test inputs must have equal length")
    if len(u) < MIN_ROWS:
        raise InsufficientDataError(f"need >= {MIN_ROWS} rows, got {len(u)}")
    if u.std() < 1e-12 or v.std() < 1e-12:
        raise DegenerateDataError("constant input to hsic_test")
    if len(u) > HSIC_CAP:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(u), size=HSIC_CAP, replace=False))
        u, v = u[idx], v[idx]
    n = len(u)
    stat, K, L = _hsic_parts(u, v)

    if method == "permutation":
        rng = np.random.default_rng(subseed(seed, "hsic-perm"))
        H = np.eye(n) - np.ones((n, n)) / n
        Kc = H @ K @ H
        hits = 0
        for _ in range(permutations):
            perm = rng.permutation(n)
            Lp = L[np.ix_(perm, perm)]
            s = float(np.sum(Kc * (H @ Lp @ H)) / n)
            hits += s >= stat
        p = (1.0 + hits) / (1.0 + permutations)
        return TestResult(statistic=stat, p_value=float(p), method="HSIC")
    if method != "gamma":
        raise ContractError(f"unknown hsic method {method!r}")

    H = np.eye(n) - np.ones((n, n)) / n
    Kc = H @ K @ H
    Lc = H @ L @ H
    var_term = (Kc * Lc / 6.0) ** 2
    var_hsic = (var_term.sum() - np.trace(var_term)) / n / (n - 1)
    var_hsic *= 72.0 * (n - 4) * (n - 5) / n / (n - 1) / (n - 2) / (n - 3)
    K0 = K - np.diag(np.diag(K))
    L0 = L - np.diag(np.diag(L))
    mu_x = K0.sum() / n / (n - 1)
    mu_y = L0.sum() / n / (n - 1)
    m_hsic = (1.0 + mu_x * mu_y - mu_x - mu_y) / n
    if var_hsic <= 0 or m_hsic <= 0:
        raise DegenerateDataError("degenerate HSIC null moments")
    shape = m_hsic**2 / var_hsic
    scale = var_hsic * n / m_hsic
    p = float(gamma_dist.sf(stat, a=shape, scale=scale))
    return TestResult(statistic=stat, p_value=p, method="HSIC")


class CiEngine:
    """Cached regressions/residuals over one dataset.

    Keyed by conditioning set: the Gram matrix, its Cholesky factor and
    the subsample indices are computed once per set and reused for every
    variable regressed on it, which is what makes iterated local
    discovery affordable.  Seeds derive from the root seed plus the
    conditioning set (for the subsample) or the query (for HSIC), so
    results are reproducible and identical to the one-shot functions.
    """

    def __init__(self, data: Dataset, seed: int = 0):
        self.data = data
        self.seed = seed
        self.n = data.n_rows
        self._models: dict[tuple[str, ...], _KernelModel | None] = {}
        self._resid: dict[tuple[str, tuple[str, ...]], np.ndarray] = {}

    def _model(self, cond: tuple[str, ...]) -> _KernelModel:
        model = self._models.get(cond)
        if model is None:
            X = self.data.matrix(list(cond))
            if self.n > REGRESSION_CAP:
                rng = np.random.default_rng(subseed(self.seed, "gram", *cond))
                fit_idx = np.sort(rng.choice(self.n, size=REGRESSION_CAP, replace=False))
            else:
                fit_idx = np.arange(self.n)
            model = _KernelModel(X, fit_idx)
            self._models[cond] = model
        return model

    def residuals(self, var: str, cond: Sequence[str] = ()) -> np.ndarray:
        """Residual of var regressed on cond; centered var when cond is empty."""
        cond_t = tuple(sorted(set(cond) - {var}))
        key = (var, cond_t)
        r = self._resid.get(key)
        if r is None:
            y = self.data.column(var)
            if not cond_t:
                r = y - y.mean()
            else:
                if self.n < MIN_ROWS:
                    raise InsufficientDataError(f"need >= {MIN_ROWS} rows")
                _, _, fitted = self._model(cond_t).fit_target(y)
                r = y - fitted
            self._resid[key] = r
        return r

    def gcm_test(self, a: str, b: str, cond: Sequence[str] = ()) -> TestResult:
        """Normalized covariance of regression residuals, standard-normal null.

        With empty cond this reduces to a plain correlation-style test of
        the centered columns.  Exactly symmetric in (a, b).
        """
        if a == b:
            raise ContractError("gcm_test needs two distinct variables")
        cond_set = set(cond)
        if a in cond_set or b in cond_set:
            raise ContractError("tested variable inside conditioning set")
        lo, hi = sorted((a, b))
        r_lo = self.residuals(lo, cond)
        r_hi = self.residuals(hi, cond)
        prod = r_lo * r_hi
        sd = float(np.sqrt(np.mean(prod**2) - np.mean(prod) ** 2))
        if sd < 1e-12:
            raise DegenerateDataError("degenerate residual product in gcm_test")
        stat = float(np.sqrt(self.n) * prod.mean() / sd)
        p = float(2.0 * norm.sf(abs(stat)))
        return TestResult(statistic=stat, p_value=p, method="GCM")

    def direction_test(
        self, target: str, cand: str, context: Sequence[str] = ()
    ) -> tuple[TestResult, TestResult]:
        """Additive-noise direction evidence between target and cand.

        p_forward: independence of (cand regressed on target + context)
        from target -- high supports target -> cand.  p_backward is the
        mirror image.  context (other adjacents of the target) is
        regressed out of both sides; with an empty context this is the
        plain bivariate test.
        """
        if target == cand:
            raise ContractError("direction test needs two distinct variables")
        ctx = tuple(sorted(set(context) - {target, cand}))
        r_cand = self.residuals(cand, ctx + (target,))
        fwd = hsic_test(
            r_cand,
            self.data.column(target),
            seed=subseed(self.seed, "anm-fwd", target, cand, *ctx),
        )
        r_tgt = self.residuals(target, ctx + (cand,))
        back = hsic_test(
            r_tgt,
            self.data.column(cand),
            seed=subseed(self.seed, "anm-back", target, cand, *ctx),
        )
        return (
            TestResult(fwd.statistic, fwd.p_value, "ANM-forward"),
            TestResult(back.statistic, back.p_value, "ANM-backward"),
        )


def gcm_test(
    d: Dataset, a: str, b: str, cond: Sequence[str] = (), seed: int = 0
) -> TestResult:
    """One-shot conditional-independence test of a and b given cond."""
    return CiEngine(d, seed=seed).gcm_test(a, b, cond)


def anm_direction(
    d: Dataset, t_var: str, c_var: str, seed: int = 0
) -> tuple[TestResult, TestResult]:
    """Bivariate additive-noise direction test between two columns.

    Returns (forward, backward) results: a high forward p-value supports
    t_var -> c_var, a high backward p-value supports c_var -> t_var.
    Classification against a threshold is the caller's job.
    """
    for name in (t_var, c_var):
        if d.column(name).std() < 1e-12:
            raise DegenerateDataError(f"constant column {name!r}")
    return CiEngine(d, seed=seed).direction_test(t_var, c_var)
