"""Shared iterative solvers and spectral helpers.

All routines are deterministic: iteration starts from seeded vectors and
reductions run in fixed order, so repeated runs give bit-identical output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""


def seeded_vector(n: int, seed: int, complex_: bool = True) -> np.ndarray:
    rng = np.random.default_rng(np.random.PCG64(seed))
    v = rng.standard_normal(n)
    if complex_:
        v = v + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def cg_solve(apply_op, b: np.ndarray, tol: float = 1e-10, max_iter: int = 500,
             weight: float | np.ndarray = 1.0, precond=None):
    """(Preconditioned) conjugate gradients for a self-adjoint positive operator.

    `apply_op` must be self-adjoint w.r.t. the weighted inner product
    <u, v> = sum(weight * u * conj(v)); `precond`, when given, approximates
    its inverse.  Returns (solution, iterations); the stopping rule uses the
    true relative residual.  Raises SolverError on stagnation.
    """
    if max_iter < 1:
        raise SolverError("cg_solve requires max_iter >= 1")
    if tol <= 0.0:
        raise SolverError("cg_solve requires tol > 0")

    def dot(u, v):
        return complex(np.sum(weight * u * np.conj(v)))

    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r) if precond else r
    p = z.copy()
    rz = dot(r, z).real
    b_norm = np.sqrt(dot(b, b).real)
    if b_norm == 0.0:
        return x, 0
    for it in range(1, max_iter + 1):
        Ap = apply_op(p)
        denom = dot(p, Ap).real
        if denom <= 0.0:
            raise SolverError("cg_solve: operator not positive on Krylov space")
        alpha = rz / denom
        x = x + alpha * p
        r = r - alpha * Ap
        res = np.sqrt(dot(r, r).real)
        if res <= tol * b_norm:
            return x, it
        z = precond(r) if precond else r
        rz_new = dot(r, z).real
        if rz_new <= 0.0 or rz <= 0.0:
            raise SolverError(
                f"cg_solve: residual {res / b_norm:.3e} lies outside the "
                f"preconditioner range (truncation floor); tol {tol:.3e} unreachable")
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"cg_solve stagnated: residual {res / b_norm:.3e} > tol {tol:.3e} "
        f"after {max_iter} iterations")


def power_iteration(apply_op, n: int, iters: int = 60, seed: int = 7,
                    weight: float | np.ndarray = 1.0) -> float:
    """Largest eigenvalue of a self-adjoint PSD operator by power iteration.

    The estimate is a Rayleigh quotient, hence a lower bound of the true
    extreme eigenvalue.
    """
    if iters < 1:
        raise SolverError("power_iteration requires iters >= 1")
    v = seeded_vector(n, seed)

    def norm(u):
        return float(np.sqrt(np.sum(weight * np.abs(u) ** 2).real))

    lam = 0.0
    for _ in range(iters):
        w = apply_op(v)
        nw = norm(w)
        if nw == 0.0:
            return 0.0
        lam = float(np.sum(weight * w * np.conj(v)).real)
        v = w / nw
    return lam


def operator_norm_estimate(apply_op, apply_adjoint, n: int, iters: int = 40,
                           seed: int = 11, weight: float | np.ndarray = 1.0) -> float:
    """Largest singular value of an operator via power iteration on T*T.

    Lower bound of the true operator norm (Rayleigh-quotient estimate).
    """
    lam = power_iteration(lambda v: apply_adjoint(apply_op(v)), n, iters=iters,
                          seed=seed, weight=weight)
    return float(np.sqrt(max(lam, 0.0)))


@dataclass
class HermitianEig:
    """Eigendecomposition of a Hermitian PSD matrix with a stable-rank cut."""

    eigvals: np.ndarray          # ascending
    eigvecs: np.ndarray
    kept: np.ndarray             # boolean mask of retained eigenvalues

    @property
    def rank(self) -> int:
        return int(self.kept.sum())

    def apply_pinv(self, f: np.ndarray) -> np.ndarray:
        """Moore-Penrose pseudo-inverse action restricted to the kept span."""
        q = self.eigvecs[:, self.kept]
        lam = self.eigvals[self.kept]
        return q @ ((q.conj().T @ f).T / lam).T if f.ndim > 1 else \
            q @ ((q.conj().T @ f) / lam)

    def apply_projection(self, f: np.ndarray) -> np.ndarray:
        q = self.eigvecs[:, self.kept]
        return q @ (q.conj().T @ f)


def psd_factorize(mat: np.ndarray, rel_cut: float = 1e-10) -> HermitianEig:
    """eigh with a relative eigenvalue cut; raises on total rank collapse."""
    if not np.isfinite(rel_cut):
        raise ValueError("relative eigenvalue cut must be finite")
    lam, q = np.linalg.eigh(mat)
    lam = np.maximum(lam, 0.0)
    top = lam[-1] if lam.size else 0.0
    kept = lam > rel_cut * top if top > 0 else np.zeros_like(lam, dtype=bool)
    if not kept.any():
        raise SolverError("psd_factorize: all eigenvalues below the cut")
    return HermitianEig(eigvals=lam, eigvecs=q, kept=kept)


def extreme_rayleigh_bounds(mat: np.ndarray, iters: int = 200, seed: int = 3):
    """(min, max) eigenvalue of a small Hermitian matrix by power iteration.

    The maximum is found by plain power iteration, the minimum by power
    iteration on (c*I - A) with c slightly above the estimated maximum.
    """
    n = mat.shape[0]
    lam_max = power_iteration(lambda v: mat @ v, n, iters=iters, seed=seed)
    c = 1.01 * lam_max + 1e-12
    shifted = power_iteration(lambda v: c * v - mat @ v, n, iters=iters, seed=seed + 1)
    lam_min = c - shifted
    return float(lam_min), float(lam_max)
