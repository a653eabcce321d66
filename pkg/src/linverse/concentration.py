"""Monte-Carlo calibration of the high-probability error model.

The error model says each coefficient-error measure is at most ``s * z(delta)``
with probability 1 - delta, where ``s`` captures the sample-size scale and
``z`` the confidence dependence, normalized so z(1/e) = 1.  Calibration takes
replicated error draws and sets ``s`` to the empirical (1 - 1/e)-quantile and
``z(delta)`` to the (1 - delta)-quantile divided by ``s``; quantiles
interpolate linearly between order statistics, so the normalization holds
exactly and z is non-increasing in delta by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateSample, EmptySample, InsufficientPoints

BASE_LEVEL = 1.0 - 1.0 / np.e


def _quantile(sorted_sample: np.ndarray, q: float) -> float:
    return float(np.quantile(sorted_sample, q, method="linear"))


@dataclass(frozen=True)
class TailModel:
    """Calibrated scales and tail multipliers for the two error measures."""

    s_a: float
    s_b: float
    sample_a: np.ndarray = field(repr=False)
    sample_b: np.ndarray = field(repr=False)
    sample_size: int
    n_train: int
    source: str = ""

    def z_a(self, delta: float) -> float:
        return self._z(self.sample_a, self.s_a, delta)

    def z_b(self, delta: float) -> float:
        return self._z(self.sample_b, self.s_b, delta)

    @staticmethod
    def _z(sample: np.ndarray, s: float, delta: float) -> float:
        if not 0.0 < delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        return _quantile(sample, 1.0 - delta) / s

    def save(self, path) -> None:
        doc = {
            "s_a": self.s_a,
            "s_b": self.s_b,
            "sample_a": self.sample_a.tolist(),
            "sample_b": self.sample_b.tolist(),
            "sample_size": self.sample_size,
            "n_train": self.n_train,
            "source": self.source,
        }
        Path(path).write_text(json.dumps(doc, indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "TailModel":
        doc = json.loads(Path(path).read_text())
        return cls(
            s_a=float(doc["s_a"]),
            s_b=float(doc["s_b"]),
            sample_a=np.asarray(doc["sample_a"], dtype=float),
            sample_b=np.asarray(doc["sample_b"], dtype=float),
            sample_size=int(doc["sample_size"]),
            n_train=int(doc["n_train"]),
            source=str(doc.get("source", "")),
        )


def calibrate_tails(delta_a_samples, delta_b_samples, n: int, source: str = "") -> TailModel:
    """Build a TailModel from replicated error draws at sample size n."""
    a = np.sort(np.asarray(delta_a_samples, dtype=float))
    b = np.sort(np.asarray(delta_b_samples, dtype=float))
    if a.size == 0 or b.size == 0:
        raise EmptySample("calibration needs non-empty samples")
    if np.any(a < 0) or np.any(b < 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("error samples must be finite and nonnegative")
    s_a = _quantile(a, BASE_LEVEL)
    s_b = _quantile(b, BASE_LEVEL)
    if s_a <= 0.0 or s_b <= 0.0:
        raise DegenerateSample("calibration scale is zero; the error model is vacuous here")
    return TailModel(s_a=s_a, s_b=s_b, sample_a=a, sample_b=b,
                     sample_size=n, n_train=int(a.size), source=source)


def coverage_test(tails: TailModel, fresh_delta_a, fresh_delta_b, delta: float) -> tuple[float, float, float]:
    """Fractions of fresh error draws below their calibrated levels at confidence delta.

    Returns (coverage_a, coverage_b, joint); joint counts draws where both
    inequalities hold simultaneously.
    """
    a = np.asarray(fresh_delta_a, dtype=float)
    b = np.asarray(fresh_delta_b, dtype=float)
    if a.size == 0 or b.size == 0 or a.size != b.size:
        raise EmptySample("coverage needs non-empty, equal-length fresh samples")
    level_a = tails.s_a * tails.z_a(delta)
    level_b = tails.s_b * tails.z_b(delta)
    ok_a = a <= level_a
    ok_b = b <= level_b
    return float(ok_a.mean()), float(ok_b.mean()), float((ok_a & ok_b).mean())


def rate_fit(pairs) -> tuple[float, float]:
    """Least-squares slope and intercept of log s against log n."""
    pairs = list(pairs)
    ns = np.array([float(n) for n, _ in pairs])
    ss = np.array([float(s) for _, s in pairs])
    if np.unique(ns).size < 3:
        raise InsufficientPoints("rate fit needs at least three distinct sample sizes")
    if np.any(ss <= 0) or np.any(ns <= 0):
        raise ValueError("rate fit needs positive sizes and scales")
    slope, intercept = np.polyfit(np.log(ns), np.log(ss), 1)
    return float(slope), float(intercept)
