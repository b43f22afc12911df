"""The two-angle regression task and its error metric."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TaskSample:
    theta: float
    phi: float
    x: float
    y: float

    @property
    def inputs(self) -> tuple[float, float]:
        return (self.theta, self.phi)

    @property
    def target(self) -> tuple[float, float]:
        return (self.x, self.y)


def target_map(theta, phi):
    """Vectorised (theta, phi) -> (x, y); both coordinates lie in [0, 1]."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    x = (np.cos(np.pi * phi) + np.cos(np.pi * (phi + theta)) + 2.0) / 4.0
    y = (np.sin(np.pi * phi) + np.sin(np.pi * (phi + theta)) + 2.0) / 4.0
    return x, y


def make_sample(theta: float, phi: float) -> TaskSample:
    if not (0.0 <= theta <= 1.0 and 0.0 <= phi <= 1.0):
        raise ValueError(f"inputs must lie in [0, 1], got theta={theta}, phi={phi}")
    x, y = target_map(theta, phi)
    return TaskSample(float(theta), float(phi), float(x), float(y))


def sample_uniform(rng: np.random.Generator, n: int) -> list[TaskSample]:
    if n < 1:
        raise ValueError("n must be >= 1")
    u = rng.uniform(0.0, 1.0, size=(n, 2))
    return [make_sample(a, b) for a, b in u]


def grid(k: int = 16) -> list[TaskSample]:
    """k x k evaluation grid over the unit square, corners included."""
    if k < 2:
        raise ValueError("k must be >= 2")
    ticks = np.linspace(0.0, 1.0, k)
    return [make_sample(a, b) for a in ticks for b in ticks]


def euclid_error(predictions: Sequence, targets: Sequence) -> float:
    """Mean Euclidean distance between predicted and target (x, y) pairs."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1, 2)
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 2)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} targets")
    if len(p) == 0:
        raise ValueError("need at least one sample")
    return float(np.mean(np.sqrt(np.sum((p - t) ** 2, axis=1))))


def write_csv(samples: Sequence[TaskSample], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["theta", "phi", "x", "y"])
        for smp in samples:
            wr.writerow([repr(smp.theta), repr(smp.phi), repr(smp.x), repr(smp.y)])
