"""Shared simulation loops used by the stats tests and the acceptance suite."""

from __future__ import annotations

import numpy as np

from gci.dataset import Dataset
from gci.stats import anm_direction, gcm_test, hsic_test


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gcm_null_pvalues(trials: int = 500, n: int = 200, seed0: int = 0) -> np.ndarray:
    """a _|_ b | c in a linear-Gaussian model; returns the p-values."""
    out = np.empty(trials)
    for i in range(trials):
        rng = np.random.default_rng(seed0 + i)
        c = rng.normal(size=n)
        a = 1.0 * c + rng.normal(size=n)
        b = -0.8 * c + rng.normal(size=n)
        d = Dataset(["a", "b", "c"], np.column_stack([a, b, c]))
        out[i] = gcm_test(d, "a", "b", ("c",), seed=i).p_value
    return out


def gcm_power_pvalues(trials: int = 100, n: int = 1000, seed0: int = 10_000) -> np.ndarray:
    """a -> b directly, no conditioning; returns the p-values."""
    out = np.empty(trials)
    for i in range(trials):
        rng = np.random.default_rng(seed0 + i)
        a = rng.normal(size=n)
        b = 1.5 * a + rng.normal(size=n)
        d = Dataset(["a", "b"], np.column_stack([a, b]))
        out[i] = gcm_test(d, "a", "b", (), seed=i).p_value
    return out


def hsic_null_pvalues(trials: int = 500, n: int = 300, seed0: int = 20_000) -> np.ndarray:
    out = np.empty(trials)
    for i in range(trials):
        rng = np.random.default_rng(seed0 + i)
        out[i] = hsic_test(rng.normal(size=n), rng.normal(size=n), seed=i).p_value
    return out


def anm_sigmoid_accuracy(
    trials: int = 100,
    n: int = 1000,
    slope: float = 3.0,
    noise_sd: float = 0.2,
    seed0: int = 30_000,
    theta_d: float = 0.05,
) -> float:
    """Fraction of sigmoid-mechanism pairs oriented cause -> effect."""
    correct = 0
    for i in range(trials):
        rng = np.random.default_rng(seed0 + i)
        a = rng.normal(size=n)
        b = sigmoid(slope * a) + noise_sd * rng.normal(size=n)
        d = Dataset(["a", "b"], np.column_stack([a, b]))
        fwd, back = anm_direction(d, "a", "b", seed=i)
        correct += fwd.p_value > theta_d and back.p_value <= theta_d
    return correct / trials
