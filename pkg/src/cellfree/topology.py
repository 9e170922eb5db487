"""AP/user placement on a square and the wrap-around (toroidal) distance metric."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class NetworkDrop:
    """One network realization: AP and user coordinates on a wrapped square.

    The square [0, extent)^2 is treated as a torus by :func:`wrap_distance`,
    which removes boundary effects and imitates a network of infinite area.
    """

    ap_positions: np.ndarray    # (M, 2) meters
    user_positions: np.ndarray  # (K, 2) meters
    extent: float               # side length D in meters

    def __post_init__(self):
        self.ap_positions = np.atleast_2d(np.asarray(self.ap_positions, dtype=float))
        self.user_positions = np.atleast_2d(np.asarray(self.user_positions, dtype=float))
        self.extent = float(self.extent)
        if self.extent <= 0:
            raise ValueError("extent must be positive")
        for name, pts in (("ap_positions", self.ap_positions),
                          ("user_positions", self.user_positions)):
            if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
                raise ValueError(f"{name} must be a non-empty (n, 2) array")
            if np.any(pts < 0.0) or np.any(pts >= self.extent):
                raise ValueError(f"{name} must lie inside [0, extent)^2")

    @property
    def n_aps(self) -> int:
        return self.ap_positions.shape[0]

    @property
    def n_users(self) -> int:
        return self.user_positions.shape[0]

    def to_json(self) -> str:
        doc = {
            "extent": self.extent,
            "ap_positions": self.ap_positions.tolist(),
            "user_positions": self.user_positions.tolist(),
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkDrop":
        doc = json.loads(text)
        return cls(np.asarray(doc["ap_positions"]),
                   np.asarray(doc["user_positions"]),
                   doc["extent"])


def place_uniform(count: int, extent: float, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` points with i.i.d. uniform coordinates on [0, extent).

    Deterministic for a given generator state.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if extent <= 0:
        raise ValueError("extent must be positive")
    return rng.uniform(0.0, extent, size=(int(count), 2))


def wrap_distance(p, q, extent: float) -> float:
    """Toroidal distance between two points of the wrapped square.

    Each axis takes the shorter way around, so the result never exceeds
    extent / sqrt(2). Equivalent to the minimum over the 9 mirror images.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0.0) or np.any(p >= extent) or np.any(q < 0.0) or np.any(q >= extent):
        raise ValueError("points must lie inside [0, extent)^2")
    delta = np.abs(p - q)
    delta = np.minimum(delta, extent - delta)
    return float(np.hypot(delta[0], delta[1]))


def wrap_distance_matrix(a, b, extent: float) -> np.ndarray:
    """All pairwise toroidal distances between two point sets, shape (len(a), len(b))."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    delta = np.abs(a[:, None, :] - b[None, :, :])
    delta = np.minimum(delta, extent - delta)
    return np.sqrt((delta ** 2).sum(axis=-1))
