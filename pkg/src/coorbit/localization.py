"""Crossed Gramians, the discrete matrix algebra and localization profiles.

The sampled cross-Gramian of two frames lives in a matrix algebra indexed by
the covering; its weighted row/column-sum norm is the discrete counterpart
of the kernel-algebra norm, and off-diagonal decay profiles measure how
localized the sampled systems are.  The domination check reproduces, by
brute force on a small instance, the blockwise-constant kernel bound that
transfers localization from the continuous to the sampled frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coverings import Covering
from .frame_families import FrameFamily, gram_kernel
from .measure_space import AdmissibleWeight, QuadGrid


class LocalizationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# crossed Gramians
# ---------------------------------------------------------------------------
@dataclass
class CrossGramian:
    """Lambda[i, j] = <psi^G at y_j, psi^F at x_i> on a shared signal grid."""

    matrix: np.ndarray
    points_f: np.ndarray
    points_g: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape


def cross_gramian(frame_f: FrameFamily, frame_g: FrameFamily,
                  points_f: np.ndarray, points_g: np.ndarray) -> CrossGramian:
    if frame_f.signal_grid != frame_g.signal_grid:
        raise LocalizationError("frames must share one signal grid")
    points_f = np.atleast_2d(points_f)
    points_g = np.atleast_2d(points_g)
    h = frame_f.signal_grid.h
    a_f = frame_f.atoms(points_f)
    a_g = frame_g.atoms(points_g)
    return CrossGramian(matrix=h * (a_f.conj().T @ a_g),
                        points_f=points_f, points_g=points_g)


# ---------------------------------------------------------------------------
# discrete algebra norm and decay profiles
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DiscreteAlgebraReport:
    a_flat_norm: float
    row_sup: float
    col_sup: float
    decay_bucket_edges: np.ndarray
    decay_bucket_max: np.ndarray
    decay_bucket_mass: np.ndarray      # measure-weighted |Lambda| per bucket
    finite: bool

    def as_dict(self):
        return {
            "a_flat_norm": self.a_flat_norm,
            "row_sup": self.row_sup,
            "col_sup": self.col_sup,
            "decay_bucket_edges": self.decay_bucket_edges.tolist(),
            "decay_bucket_max": self.decay_bucket_max.tolist(),
            "decay_bucket_mass": self.decay_bucket_mass.tolist(),
            "finite": self.finite,
        }


def decay_profile(values: np.ndarray, dists: np.ndarray, buckets: int = 16):
    """Max modulus per logarithmic distance bucket."""
    pos = dists > 0
    if not pos.any():
        return np.array([0.0, 1.0]), np.array([float(np.abs(values).max())])
    d_min = max(float(dists[pos].min()), 1e-9)
    d_max = float(dists.max())
    edges = np.geomspace(d_min, d_max * (1 + 1e-12), buckets + 1)
    which = np.clip(np.searchsorted(edges, dists, side="right") - 1, 0, buckets - 1)
    out = np.zeros(buckets)
    amp = np.abs(values)
    for b in range(buckets):
        mask = pos & (which == b)
        if mask.any():
            out[b] = float(amp[mask].max())
    return edges, out


def a_flat_norm(gram: CrossGramian, cov: Covering, m: AdmissibleWeight,
                buckets: int = 16) -> DiscreteAlgebraReport:
    """max of the m-weighted, measure-weighted row and column sums.

    Row/column weights are the cell measures a_i; the decay profile buckets
    max |Lambda_ij| by the covering metric distance of the sample points.
    """
    lam = np.abs(gram.matrix)
    if lam.shape != (cov.size, cov.size):
        raise LocalizationError("cross-Gramian shape does not match the covering")
    mb = m(gram.points_f, gram.points_g)
    a = cov.measures
    weighted = lam * mb
    row = float(np.max(weighted @ a))          # sup_i sum_j |lam| m a_j
    col = float(np.max(a @ weighted))          # sup_j sum_i |lam| m a_i
    dists = cov.grid.metric(gram.points_f, gram.points_g)
    edges, prof = decay_profile(lam, dists, buckets)
    which = np.clip(np.searchsorted(edges, dists, side="right") - 1, 0,
                    len(prof) - 1)
    mass_matrix = lam * a[:, None] * a[None, :]
    mass = np.array([float(mass_matrix[which == b].sum())
                     for b in range(len(prof))])
    norm = max(row, col)
    return DiscreteAlgebraReport(
        a_flat_norm=norm, row_sup=row, col_sup=col,
        decay_bucket_edges=edges, decay_bucket_max=prof,
        decay_bucket_mass=mass,
        finite=bool(np.isfinite(norm)))


def a_flat_multiply(lam: np.ndarray, eps: np.ndarray, cov: Covering) -> np.ndarray:
    """(Lambda o E)_{ij} = sum_k lam_{ik} eps_{kj} mu(U_k)."""
    return (lam * cov.measures[None, :]) @ eps


# ---------------------------------------------------------------------------
# blockwise domination of the sampled Gramian
# ---------------------------------------------------------------------------
def gab_domination_check(frame_f: FrameFamily, frame_g: FrameFamily,
                         cov: Covering, grid: QuadGrid,
                         z_per_cell: int = 4, seed: int = 0,
                         rel_cut: float = 1e-10, drop_osc: bool = False) -> float:
    """Brute-force check of the blockwise-constant domination bound.

    Left side: the cellwise-constant extension of |G(F,G)(x_i, y_j)|.
    Right side: H^G o |G| o (H^F)* with (H^G)* = T_G o L, (H^F)* = T_F o L,
    T = osc_U + |R| and L the overlap-normalized covering kernel.
    Returns max(left - right, 0) over all node pairs.  `drop_osc` removes
    the oscillation term (for counterexample tests).
    """
    from .oscillation import osc_kernel

    if cov.size > 64:
        raise LocalizationError("domination check is brute-force; use <= 64 cells")
    pts = grid.points
    M = grid.size
    w = grid.weights

    samples = cov.grid.points[_sample_nodes_for(cov)]
    gram = cross_gramian(frame_f, frame_g, samples, samples)

    # membership matrix C[i, node] and the covering kernel L = C^T diag(1/a) C
    C = np.zeros((cov.size, M))
    for i, idx in enumerate(cov.members):
        C[i, idx] = 1.0
    left = C.T @ np.abs(gram.matrix) @ C

    R_f = gram_kernel(frame_f, grid, rel_cut=rel_cut).matrix(grid)
    R_g = gram_kernel(frame_g, grid, rel_cut=rel_cut).matrix(grid)
    osc_f = osc_kernel(gram_kernel(frame_f, grid, rel_cut=rel_cut), cov, grid,
                       z_per_cell=z_per_cell, seed=seed).block(pts, pts)
    osc_g = osc_kernel(gram_kernel(frame_g, grid, rel_cut=rel_cut), cov, grid,
                       z_per_cell=z_per_cell, seed=seed).block(pts, pts)
    t_f = np.abs(R_f) + (0.0 if drop_osc else 1.0) * osc_f
    t_g = np.abs(R_g) + (0.0 if drop_osc else 1.0) * osc_g

    L = C.T @ (C / cov.measures[:, None])
    # compositions with quadrature weights folded in
    h_f_star = (t_f * w[None, :]) @ L            # T_F o L
    h_g_star = (t_g * w[None, :]) @ L
    big_g = np.abs(cross_gramian_on_grid(frame_f, frame_g, grid))
    right = (h_g_star.T * w[None, :]) @ big_g
    right = (right * w[None, :]) @ h_f_star
    return float(max(np.max(left - right), 0.0))


def cross_gramian_on_grid(frame_f, frame_g, grid) -> np.ndarray:
    h = frame_f.signal_grid.h
    a_f = frame_f.atoms(grid.points)
    a_g = frame_g.atoms(grid.points)
    return h * (a_f.conj().T @ a_g)


def _sample_nodes_for(cov: Covering) -> np.ndarray:
    from .discretization import _sample_nodes
    return _sample_nodes(cov)


# ---------------------------------------------------------------------------
# empirical pseudo-inverse decay
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PseudoInverseReport:
    rank: int
    projection_defect: float        # || A^+ o A - A o A^+ ||_sup
    idempotent_defect: float        # || (A^+ o A) o (A^+ o A) - A^+ o A ||_sup
    dual_gramian_defect: float      # || G(S^+F, S^+F) - A^+ o R ||_sup
    interior_agreement: float       # sup |A - A^+| on interior pairs
    decay_edges_a: np.ndarray
    decay_a: np.ndarray
    decay_edges_pinv: np.ndarray
    decay_pinv: np.ndarray
    label: str = ("empirical (finite truncation; no algebra membership claimed); "
                  "decay profiles taken on the interior block, where the "
                  "truncation's boundary modes do not mask the kernel decay")


def empirical_pseudoinverse(family: FrameFamily, grid: QuadGrid,
                            rank_tol: float = 1e-10) -> PseudoInverseReport:
    """Spectral pseudo-inverse of the self-Gramian with decay profiles.

    The kernel A(x,y) = <psi_y, psi_x> is treated as an operator on L2(mu)
    through the quadrature weights; rank_tol is the relative spectral cut.
    """
    if not np.isfinite(rank_tol):
        raise LocalizationError("rank_tol must be finite")
    if grid.size > 2048:
        raise LocalizationError("empirical_pseudoinverse is dense; use <= 2048 nodes")
    h = family.signal_grid.h
    atoms = family.atoms(grid.points)
    A = h * (atoms.conj().T @ atoms)
    w = grid.weights
    sq = np.sqrt(w)
    sym = sq[:, None] * A * sq[None, :]
    sym = 0.5 * (sym + sym.conj().T)
    lam, q = np.linalg.eigh(sym)
    keep = lam > rank_tol * max(lam.max(), 0)
    if not keep.any():
        raise LocalizationError("rank collapse: all singular values below rank_tol")
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    pinv_sym = (q * inv[None, :]) @ q.conj().T
    proj_sym = (q[:, keep]) @ q[:, keep].conj().T
    A_pinv = pinv_sym / sq[:, None] / sq[None, :]

    def comp(K1, K2):
        return (K1 * w[None, :]) @ K2

    pa = comp(A_pinv, A)
    ap = comp(A, A_pinv)
    proj_defect = float(np.max(np.abs(pa - ap)))
    idem_defect = float(np.max(np.abs(comp(pa, pa) - pa)))

    calc = family.calculus(grid)
    duals = calc.s_pinv(atoms, rank_tol if rank_tol > 0 else 1e-10)
    dual_gram = h * (duals.conj().T @ duals)
    R = gram_kernel(family, grid, rel_cut=max(rank_tol, 1e-12)).matrix(grid)
    dual_defect = float(np.max(np.abs(dual_gram - comp(A_pinv, R))))

    box = family.interior_box(grid)
    pts = grid.points
    inner = np.ones(grid.size, dtype=bool)
    for k in range(grid.dim):
        if family.tag == "inhom_wavelet" and k == 0:
            inner &= (pts[:, 0] <= 0) | ((pts[:, k] >= box[k, 0]) &
                                         (pts[:, k] <= box[k, 1]))
        else:
            inner &= (pts[:, k] >= box[k, 0]) & (pts[:, k] <= box[k, 1])
    ii = np.ix_(inner, inner)
    d = grid.metric(pts[inner], pts[inner])
    e_a, p_a = decay_profile(A[ii], d)
    e_p, p_p = decay_profile(A_pinv[ii], d)
    agreement = float(np.max(np.abs(A[ii] - A_pinv[ii])))
    return PseudoInverseReport(
        rank=int(keep.sum()), projection_defect=proj_defect,
        idempotent_defect=idem_defect, dual_gramian_defect=dual_defect,
        interior_agreement=agreement,
        decay_edges_a=e_a, decay_a=p_a, decay_edges_pinv=e_p, decay_pinv=p_p)
