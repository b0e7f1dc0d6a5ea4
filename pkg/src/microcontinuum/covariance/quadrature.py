"""Node-centred box quadrature on the reference grid.

A box is an inclusive index range ``lo..hi`` per axis; node ``i`` owns the
cell ``[i - ½, i + ½]``. Volume integrals weight nodal values by the cell
volume. Surface integrals take face values as the mean of the two nodes
adjacent to the face, which makes the divergence theorem exact for central
differences: the sum of a central-difference divergence over the box
telescopes onto the face sums.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Grid


@dataclass(frozen=True)
class SubBody:
    lo: tuple
    hi: tuple

    @classmethod
    def interior(cls, grid: Grid, width: int = 1) -> "SubBody":
        return cls(tuple([width] * grid.dim), tuple(n - 1 - width for n in grid.shape))

    def check(self, grid: Grid) -> None:
        for lo, hi, n in zip(self.lo, self.hi, grid.shape):
            if not (1 <= lo <= hi <= n - 2):
                raise ValueError(f"box {self.lo}..{self.hi} needs one node of margin inside {grid.shape}")

    def slices(self) -> tuple:
        return tuple(slice(lo, hi + 1) for lo, hi in zip(self.lo, self.hi))

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.zeros(grid.shape, dtype=bool)
        m[self.slices()] = True
        return m

    def bounds(self, grid: Grid) -> tuple:
        """Reference-coordinate extent of the box cells."""
        o = np.asarray(grid.origin)
        h = np.asarray(grid.spacing)
        return o + h * (np.asarray(self.lo) - 0.5), o + h * (np.asarray(self.hi) + 0.5)


def volume_weights(fields) -> np.ndarray:
    """Spatial volume per node: J sqrt(det G) times the reference cell volume."""
    return fields.J * np.sqrt(np.linalg.det(fields.G)) * fields.grid.cell_volume


def volume_integral(fields, f: np.ndarray, box: SubBody) -> np.ndarray:
    """∫ f dv over the image of ``box``; ``f`` is nodal with optional trailing axes."""
    box.check(fields.grid)
    f = np.asarray(f, dtype=float)
    w = volume_weights(fields)
    sl = box.slices()
    fw = f[sl] * w[sl].reshape(w[sl].shape + (1,) * (f.ndim - w.ndim))
    return fw.reshape((-1,) + f.shape[w.ndim:]).sum(axis=0)


def reference_volume_integral(grid: Grid, f: np.ndarray, box: SubBody, sqrt_detG=None) -> np.ndarray:
    """∫ f dV over the reference box."""
    box.check(grid)
    f = np.asarray(f, dtype=float)
    w = np.full(grid.shape, grid.cell_volume) if sqrt_detG is None else sqrt_detG * grid.cell_volume
    sl = box.slices()
    fw = f[sl] * w[sl].reshape(w[sl].shape + (1,) * (f.ndim - grid.dim))
    return fw.reshape((-1,) + f.shape[grid.dim:]).sum(axis=0)


def flux_integral(grid: Grid, Q: np.ndarray, box: SubBody) -> np.ndarray:
    """Outward flux ∮ Q^A N_A dA of a nodal reference-coordinate density ``Q``.

    ``Q`` has shape ``(*grid.shape, *k, dim)`` with the material index last and
    must already include the reference volume density sqrt(det G).
    """
    box.check(grid)
    Q = np.asarray(Q, dtype=float)
    n = grid.dim
    total = 0.0
    for axis in range(n):
        face_area = grid.cell_volume / grid.spacing[axis]
        for side, (a, b) in ((+1, (box.hi[axis], box.hi[axis] + 1)),
                             (-1, (box.lo[axis] - 1, box.lo[axis]))):
            sl_a = list(box.slices())
            sl_b = list(box.slices())
            sl_a[axis] = a
            sl_b[axis] = b
            face = 0.5 * (Q[tuple(sl_a)][..., axis] + Q[tuple(sl_b)][..., axis])
            face = face.reshape((-1,) + face.shape[n - 1:])
            total = total + side * face_area * face.sum(axis=0)
    return total


def box_faces(grid: Grid, box: SubBody) -> list:
    """(axis, side, node slices) of the node layers just inside each face."""
    out = []
    for axis in range(grid.dim):
        for side, idx in ((+1, box.hi[axis]), (-1, box.lo[axis])):
            sl = list(box.slices())
            sl[axis] = idx
            out.append((axis, side, tuple(sl)))
    return out
