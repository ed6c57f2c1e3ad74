"""Oscillation kernel, the D[delta, m] property and refinement driver.

The oscillation of the Gramian over a covering,
    osc_U(x, y) = sup_{z in Q_y} |R(x, y) - R(x, z)|,
is estimated with per-cell deterministic z-samples (the sup is sampled, so
delta_est is a lower bound of the true oscillation norm; the report records
the sample density).

Modulation families (gabor, alpha_mod) drop the torus phase of the
underlying index group.  Their sampled systems and every reconstruction
operator are invariant under that quotient, but the raw kernel difference is
not: it picks up a pure-gauge phase term growing with the distance from the
phase-plane origin.  For those families the oscillation comparison is
therefore taken modulo a unimodular factor,
    osc(x, y) = sup_z | |R(x, y)| - |R(x, z)| |,
(the best phase-aligned comparison), which is the quotient image of the
group-covering oscillation.  The comparison mode is recorded in the report;
`comparison="strict"` forces the literal kernel difference.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coverings import Covering, build_covering, weight_sup_on_cells
from .kernel_algebra import Kernel, am_norm
from .measure_space import AdmissibleWeight, QuadGrid
from .frame_families import FrameFamily, default_index_grid, gram_kernel


class OscillationError(ValueError):
    pass


@dataclass(frozen=True)
class OscReport:
    delta_est: float
    r_norm: float                 # ||R | A_m||
    c_m_u: float
    sigma: float                  # max{C_mU ||R||, ||R|| + delta}
    cond_value: float             # delta (||R|| + sigma)
    full: bool                    # cond_value <= 1
    atomic_only: bool             # delta <= 1
    banach_only: bool             # delta <= 1/||R||
    comparison: str
    z_per_cell: int
    seed: int
    covering_descriptor: dict
    caveat: str = ("delta_est uses a sampled sup over z, hence is a lower bound "
                   "of the true oscillation norm; a passing flag is a numerical "
                   "indication, not a certificate")

    def as_dict(self):
        return {
            "delta_est": self.delta_est, "r_norm": self.r_norm,
            "c_m_u": self.c_m_u, "sigma": self.sigma,
            "cond_value": self.cond_value, "full": self.full,
            "atomic_only": self.atomic_only, "banach_only": self.banach_only,
            "comparison": self.comparison, "z_per_cell": self.z_per_cell,
            "seed": self.seed, "covering": self.covering_descriptor,
            "caveat": self.caveat,
        }


def _cell_z_samples(cov: Covering, z_per_cell: int, seed: int) -> list:
    """Nested deterministic z-streams, one per cell.

    Points come from a per-cell seeded stream, so enlarging z_per_cell only
    appends samples (the sampled sup is monotone in z_per_cell).
    """
    if z_per_cell < 1:
        raise OscillationError("z_per_cell must be >= 1")
    out = []
    for i in range(cov.size):
        rng = np.random.default_rng(np.random.PCG64([seed, i]))
        u = rng.random((z_per_cell, cov.cells.shape[1]))
        lo = cov.cells[i, :, 0]
        hi = cov.cells[i, :, 1]
        out.append(lo + u * (hi - lo))
    return out


def _pair_osc(r_y: np.ndarray, r_z: np.ndarray, aligned: bool) -> np.ndarray:
    """max_z of the (phase-aligned) difference; r_y (M, Y), r_z (M, Z)."""
    if aligned:
        diff = np.abs(np.abs(r_y)[:, :, None] - np.abs(r_z)[:, None, :])
    else:
        diff = np.abs(r_y[:, :, None] - r_z[:, None, :])
    return diff.max(axis=2)


def osc_kernel(R: Kernel, cov: Covering, grid: QuadGrid, z_per_cell: int = 4,
               comparison: str = "strict", seed: int = 0) -> Kernel:
    """Oscillation kernel as an evaluator (sampled sup over Q_y)."""
    if comparison not in ("strict", "phase_aligned"):
        raise OscillationError(f"unknown comparison {comparison!r}")
    z_sets = _cell_z_samples(cov, z_per_cell, seed)
    aligned = comparison == "phase_aligned"

    def ev(pr, pc):
        pr = np.atleast_2d(pr)
        pc = np.atleast_2d(pc)
        out = np.zeros((pr.shape[0], pc.shape[0]))
        r_rows_y = R.block(pr, pc)
        for j in range(pc.shape[0]):
            from .coverings import q_set
            cells = q_set(cov, pc[j])
            zs = np.concatenate([z_sets[i] for i in cells] + [pc[j:j + 1]])
            r_z = R.block(pr, zs)
            out[:, j] = _pair_osc(r_rows_y[:, j:j + 1], r_z, aligned)[:, 0]
        return out

    return Kernel(evaluator=ev, provenance=f"oscillation({comparison})",
                  native_grid=grid)


def osc_norm_streaming(R: Kernel, cov: Covering, grid: QuadGrid,
                       m: AdmissibleWeight, z_per_cell: int = 4,
                       comparison: str = "strict", seed: int = 0) -> float:
    """||osc_U | A_m|| without materializing the M x M oscillation matrix.

    Processes one cell at a time: columns y in the cell are compared against
    the cell's z-samples (plus y itself); for nodes shared by several cells
    the running maximum across cells realizes the sup over the union Q_y.
    """
    aligned = comparison == "phase_aligned"
    z_sets = _cell_z_samples(cov, z_per_cell, seed)
    pts, w = grid.points, grid.weights
    M = grid.size

    multi = any(len(v) > 1 for v in _membership_counts(cov))
    row_acc = np.zeros(M)
    col_val = np.zeros(M)
    if multi:
        # overlapping covering: keep per-column running maxima
        col_cells = cov.node_cells()
        osc_cols: dict[int, np.ndarray] = {}
        remaining = np.array([len(c) for c in col_cells])
        for i in range(cov.size):
            idx = cov.members[i]
            if idx.size == 0:
                continue
            r_y = R.block(pts, pts[idx])
            r_z = R.block(pts, z_sets[i])
            part = _pair_osc(r_y, r_z, aligned)
            if aligned:
                part = np.maximum(part, 0.0)
            for col_pos, node in enumerate(idx):
                prev = osc_cols.get(node)
                cur = part[:, col_pos]
                osc_cols[node] = cur if prev is None else np.maximum(prev, cur)
                remaining[node] -= 1
                if remaining[node] == 0:
                    vals = osc_cols.pop(node)
                    mm = m(pts, pts[node:node + 1])[:, 0]
                    row_acc += vals * mm * w[node]
                    col_val[node] = float(np.dot(w, vals * mm))
    else:
        for i in range(cov.size):
            idx = cov.members[i]
            if idx.size == 0:
                continue
            r_y = R.block(pts, pts[idx])
            r_z = R.block(pts, z_sets[i])
            vals = _pair_osc(r_y, r_z, aligned)
            mm = m(pts, pts[idx])
            row_acc += (vals * mm) @ w[idx]
            col_val[idx] = w @ (vals * mm)
    return float(max(row_acc.max(), col_val.max()))


def _membership_counts(cov: Covering) -> list:
    counts = [[] for _ in range(cov.grid.size)]
    for i, idx in enumerate(cov.members):
        for k in idx:
            counts[k].append(i)
    return counts


def property_D_check(family: FrameFamily, cov: Covering, m: AdmissibleWeight,
                     grid: QuadGrid, z_per_cell: int = 4, seed: int = 0,
                     comparison: str | None = None,
                     rel_cut: float = 1e-10) -> OscReport:
    """Assemble the discretization report for one covering.

    delta_est = ||osc_U | A_m|| (sampled sup), sigma and the threshold value
    delta (||R|| + sigma) with the three flags.  Deterministic given seed.
    """
    if comparison is None:
        comparison = "phase_aligned" if family.phase_quotient else "strict"
    R = gram_kernel(family, grid, rel_cut=rel_cut)
    r_report = am_norm(R, m, grid)
    r_norm = r_report.am_norm
    if not np.isfinite(r_norm):
        raise OscillationError("||R|A_m|| is not finite at this truncation")
    delta = osc_norm_streaming(R, cov, grid, m, z_per_cell=z_per_cell,
                               comparison=comparison, seed=seed)
    c_m_u = weight_sup_on_cells(cov, m)
    sigma = max(c_m_u * r_norm, r_norm + delta)
    cond = delta * (r_norm + sigma)
    return OscReport(
        delta_est=delta, r_norm=r_norm, c_m_u=c_m_u, sigma=sigma,
        cond_value=cond, full=bool(cond <= 1.0), atomic_only=bool(delta <= 1.0),
        banach_only=bool(delta <= 1.0 / r_norm if r_norm > 0 else True),
        comparison=comparison, z_per_cell=z_per_cell, seed=seed,
        covering_descriptor=dict(cov.descriptor))


@dataclass(frozen=True)
class RefinementStep:
    level: int
    cells: int
    grid_nodes: int
    report: OscReport


def refine_until(family: FrameFamily, domain, m: AdmissibleWeight,
                 target: str = "full", max_levels: int = 8,
                 initial_cell=None, overlap: float = 0.0,
                 nodes_per_cell_axis: int = 2, z_per_cell: int = 4,
                 seed: int = 0, max_cells: int = 40000,
                 rel_cut: float = 1e-10):
    """Dyadic refinement until the target flag holds.

    Rebuilds a matched index grid per level (`nodes_per_cell_axis` quadrature
    nodes per cell side) and halves cell sides each level.  Returns
    (covering, report, trajectory); raises OscillationError with the
    trajectory attached when the target is not reached.
    """
    if max_levels < 1:
        raise OscillationError("max_levels must be >= 1")
    if target not in ("full", "atomic", "banach"):
        raise OscillationError(f"unknown target {target!r}")
    domain = np.asarray(domain, dtype=float)
    if initial_cell is None:
        initial_cell = [(hi - lo) / 4.0 for lo, hi in domain]
    if np.isscalar(initial_cell):
        initial_cell = [float(initial_cell)] * domain.shape[0]

    trajectory = []
    for level in range(max_levels + 1):
        cell = [s / 2 ** level for s in initial_cell]
        n_cells = int(np.prod([max(1, round((hi - lo) / c))
                               for (lo, hi), c in zip(domain, cell)]))
        if n_cells > max_cells:
            raise OscillationError(
                f"refinement level {level} needs {n_cells} cells "
                f"(> max_cells={max_cells}); trajectory: "
                f"{[(s.level, s.report.delta_est) for s in trajectory]}")
        resolution = [max(1, round((hi - lo) / c)) * nodes_per_cell_axis
                      for (lo, hi), c in zip(domain, cell)]
        grid = default_index_grid(family, bounds=domain.tolist(),
                                  resolution=resolution)
        cov = build_covering(grid, cell, overlap_fraction=overlap)
        rep = property_D_check(family, cov, m, grid, z_per_cell=z_per_cell,
                               seed=seed, rel_cut=rel_cut)
        trajectory.append(RefinementStep(level=level, cells=cov.size,
                                         grid_nodes=grid.size, report=rep))
        hit = {"full": rep.full, "atomic": rep.atomic_only,
               "banach": rep.banach_only}[target]
        if hit:
            return cov, rep, trajectory
    raise OscillationError(
        f"target {target!r} not reached in {max_levels} levels; delta trajectory: "
        f"{[round(s.report.delta_est, 5) for s in trajectory]}")
