"""Kernel calculus on X x X and the weighted Schur-type algebra norms.

A Kernel is a complex-valued function on pairs of index points, evaluated
block-wise.  Norms are computed by streaming row blocks, so nothing ever
materializes an M x M matrix unless the grid is small enough to cache
(<= CACHE_NODE_LIMIT nodes per side).
"""
from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .measure_space import AdmissibleWeight, GridError, QuadGrid, WeightOnX

CACHE_NODE_LIMIT = 4096
_ROW_BLOCK = 256


class KernelError(ValueError):
    pass


@dataclass
class Kernel:
    """Complex kernel on X x X with an optional sampled-matrix cache.

    evaluator(points_r, points_c) returns the complex matrix
    K(points_r[j], points_c[k]).  The cache, when built, agrees with the
    evaluator at every node (same code path), and building it is the only
    mutation; reads after that are concurrency-safe.
    """

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    provenance: str = "custom"
    native_grid: Optional[QuadGrid] = None
    fast_apply: Optional[Callable[[np.ndarray, QuadGrid], np.ndarray]] = None
    context: dict = field(default_factory=dict, repr=False)
    _cache: Optional[np.ndarray] = field(default=None, repr=False)
    _cache_key: Optional[int] = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def block(self, points_r: np.ndarray, points_c: np.ndarray) -> np.ndarray:
        vals = np.asarray(self.evaluator(np.atleast_2d(points_r),
                                         np.atleast_2d(points_c)))
        if not np.all(np.isfinite(vals)):
            raise KernelError(f"non-finite kernel value ({self.provenance})")
        return vals

    def matrix(self, grid: QuadGrid) -> np.ndarray:
        """Full sampled matrix on grid x grid, cached for small grids."""
        if grid.size > CACHE_NODE_LIMIT:
            raise KernelError(
                f"grid with {grid.size} nodes exceeds the {CACHE_NODE_LIMIT}-node "
                "cache bound; use block() streaming instead")
        with self._lock:
            key = id(grid)
            if self._cache is None or self._cache_key != key:
                self._cache = self.block(grid.points, grid.points)
                self._cache_key = key
            return self._cache


def kernel_from_matrix(mat: np.ndarray, grid: QuadGrid,
                       provenance: str = "composed") -> Kernel:
    """Wrap a sampled matrix; the evaluator snaps points to nearest nodes."""
    from scipy.spatial import cKDTree
    tree = cKDTree(grid.points)

    def ev(pr, pc):
        ir = tree.query(np.atleast_2d(pr))[1]
        ic = tree.query(np.atleast_2d(pc))[1]
        return mat[np.ix_(ir, ic)]

    kern = Kernel(evaluator=ev, provenance=provenance, native_grid=grid)
    kern._cache = mat
    kern._cache_key = id(grid)
    return kern


@dataclass(frozen=True)
class KernelNormReport:
    a1_norm: float
    am_norm: float
    row_sup: float
    col_sup: float
    grid_descriptor: str
    weight_descriptor: str

    def as_dict(self) -> dict:
        return {
            "a1_norm": self.a1_norm,
            "am_norm": self.am_norm,
            "row_sup": self.row_sup,
            "col_sup": self.col_sup,
            "grid": self.grid_descriptor,
            "weight": self.weight_descriptor,
        }


def am_norm(kern: Kernel, m: AdmissibleWeight, grid: QuadGrid,
            row_block: int = _ROW_BLOCK) -> KernelNormReport:
    """Weighted algebra norm: max of the two sup-integrals of |K| m.

    The essential sup is realized as the max over grid nodes; integrals use
    the grid quadrature.  Streaming over row blocks keeps memory at
    O(block * M).
    """
    pts, w = grid.points, grid.weights
    M = grid.size
    row_sup_m = 0.0
    row_sup_1 = 0.0
    col_acc_m = np.zeros(M)
    col_acc_1 = np.zeros(M)
    for start in range(0, M, row_block):
        rows = slice(start, min(start + row_block, M))
        amp = np.abs(kern.block(pts[rows], pts))
        mm = m(pts[rows], pts)
        row_sup_1 = max(row_sup_1, float(np.max(amp @ w)))
        row_sup_m = max(row_sup_m, float(np.max((amp * mm) @ w)))
        col_acc_1 += w[rows] @ amp
        col_acc_m += w[rows] @ (amp * mm)
    col_sup_m = float(np.max(col_acc_m))
    col_sup_1 = float(np.max(col_acc_1))
    return KernelNormReport(
        a1_norm=max(row_sup_1, col_sup_1),
        am_norm=max(row_sup_m, col_sup_m),
        row_sup=row_sup_m,
        col_sup=col_sup_m,
        grid_descriptor=f"{M} nodes, dim {grid.dim}",
        weight_descriptor=m.descriptor,
    )


def compose(k1: Kernel, k2: Kernel, grid: QuadGrid) -> Kernel:
    """Algebra product (K1 o K2)(x,y) = integral K1(x,z) K2(z,y) dmu(z).

    Materializes both factors on the grid (subject to the cache bound) and
    returns a kernel backed by the weighted matrix product.
    """
    m1 = k1.matrix(grid)
    m2 = k2.matrix(grid)
    prod = (m1 * grid.weights[None, :]) @ m2
    return kernel_from_matrix(prod, grid, provenance="composed")


def involution(kern: Kernel) -> Kernel:
    """K*(x,y) = conj(K(y,x)); an isometry of every A_m norm."""
    def ev(pr, pc):
        return np.conj(kern.block(pc, pr)).T

    out = Kernel(evaluator=ev, provenance=f"involution({kern.provenance})",
                 native_grid=kern.native_grid)
    if kern._cache is not None:
        out._cache = np.conj(kern._cache).T
        out._cache_key = kern._cache_key
    return out


def apply_kernel(kern: Kernel, values: np.ndarray, grid: QuadGrid,
                 row_block: int = _ROW_BLOCK) -> np.ndarray:
    """K(F)(x) = integral F(y) K(x,y) dmu(y) at every grid node."""
    values = np.asarray(values)
    if values.shape[0] != grid.size:
        raise GridError("apply_kernel: value list length != grid size")
    if kern.fast_apply is not None and kern.native_grid is grid:
        return kern.fast_apply(values, grid)
    weighted = grid.weights * values
    out = np.empty(grid.size, dtype=complex)
    pts = grid.points
    for start in range(0, grid.size, row_block):
        rows = slice(start, min(start + row_block, grid.size))
        out[rows] = kern.block(pts[rows], pts) @ weighted
    return out


def lp_w_norm(values: np.ndarray, p, w: WeightOnX, grid: QuadGrid) -> float:
    """Quadrature norm of F*w in L^p; for p = inf the max over grid nodes."""
    values = np.asarray(values)
    if values.shape[0] != grid.size:
        raise GridError("lp_w_norm: value list length != grid size")
    fw = np.abs(values) * w(grid.points)
    if p == 1:
        return float(np.dot(grid.weights, fw))
    if p == 2:
        return float(np.sqrt(np.dot(grid.weights, fw * fw)))
    if p in (np.inf, "inf", float("inf")):
        return float(np.max(fw))
    raise KernelError(f"p must be 1, 2 or inf, got {p!r}")


def export_kernel_csv(kern: Kernel, grid: QuadGrid, path) -> None:
    """Row-major CSV dump; each cell is the quoted pair "re,im"."""
    mat = kern.matrix(grid)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_ALL)
        for row in mat:
            writer.writerow([f"{float(v.real)!r},{float(v.imag)!r}" for v in row])
