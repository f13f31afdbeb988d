"""Uniform periodic grids on the unit torus [0, 1]^d."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid with ``n_per_dim`` nodes per axis.

    Nodes are flattened row-major (axis 0 varies slowest). Coordinates along
    each axis are ``h, 2h, ..., 1`` so the last node sits at 1, identified
    with 0. Indices are 0-based.
    """

    d: int
    n_per_dim: int
    points: np.ndarray = field(repr=False, compare=False)
    _fwd: np.ndarray = field(repr=False, compare=False)
    _bwd: np.ndarray = field(repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.n_per_dim**self.d

    @property
    def h(self) -> float:
        return 1.0 / self.n_per_dim

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_per_dim,) * self.d

    def forward(self, axis: int) -> np.ndarray:
        """Flat index of the +1 neighbour of every node along ``axis``."""
        return self._fwd[axis]

    def backward(self, axis: int) -> np.ndarray:
        """Flat index of the -1 neighbour of every node along ``axis``."""
        return self._bwd[axis]

    def neighbor(self, i: int, axis: int, direction: int) -> int:
        if direction == 1:
            return int(self._fwd[axis][i])
        if direction == -1:
            return int(self._bwd[axis][i])
        raise ValueError("direction must be +1 or -1")

    def flat_index(self, *multi: int) -> int:
        return int(np.ravel_multi_index(multi, self.shape))

    def unflatten(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(values).reshape(self.shape)

    def mean(self, values: np.ndarray) -> float:
        """Grid mean, i.e. the rectangle-rule integral over the torus."""
        return float(np.mean(values))


def make_grid(d: int, n_per_dim: int) -> TorusGrid:
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if int(n_per_dim) != n_per_dim or n_per_dim < 2:
        raise ValueError(f"n_per_dim must be an integer >= 2, got {n_per_dim}")
    n = int(n_per_dim)
    shape = (n,) * d
    axis_coords = np.arange(1, n + 1) / n
    mesh = np.meshgrid(*([axis_coords] * d), indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)

    idx = np.arange(n**d).reshape(shape)
    fwd = tuple(np.roll(idx, -1, axis=a).ravel() for a in range(d))
    bwd = tuple(np.roll(idx, 1, axis=a).ravel() for a in range(d))
    for arr in (points, *fwd, *bwd):
        arr.setflags(write=False)
    return TorusGrid(d=d, n_per_dim=n, points=points, _fwd=fwd, _bwd=bwd)
