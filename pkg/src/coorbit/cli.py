"""Configuration-driven pipeline runner.

`coorbit run config.json [--out DIR] [--seed N] [--threads N]` executes the
configured tasks in order and writes a machine-readable report.json plus
per-task CSV files.  `coorbit validate config.json` checks the configuration
without computing anything.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
Determinism: all randomness flows from the single seed recorded in the
report; reductions are fixed-order, so identical configurations and seeds
give bit-identical reports (the thread count only sizes task-internal pools
and is recorded, never load-bearing).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._linalg import SolverError
from .measure_space import SignalGrid, polynomial_weight, trivial_weight, \
    trivial_admissible_weight, weight_from_w
from .frame_families import FamilyError, alpha_admissibility, default_index_grid, \
    frame_bounds_continuous, gaussian_window, gram_kernel, leakage_report, \
    make_battery, make_family, analyze_V
from .kernel_algebra import am_norm
from .coverings import CoveringError, build_covering, build_pu, verify_moderate
from .oscillation import OscillationError, property_D_check, refine_until
from .discretization import DiscretizationError, atomic_coefficients, \
    banach_frame_reconstruct, build_uphi, hilbert_frame_bounds, sample_frame, \
    uphi_defect_norm
from .localization import a_flat_norm, cross_gramian, gab_domination_check

KNOWN_TASKS = ("frame-info", "property-d", "discretize", "reconstruct",
               "localize", "norms", "sequence-spaces")
KNOWN_FAMILIES = ("gabor", "cwt", "sinc_rkhs", "inhom_wavelet", "alpha_mod")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def validate_config(cfg: dict) -> list[str]:
    """Schema and cross-field diagnostics; empty list means valid."""
    diags = []
    fam = cfg.get("family")
    if not isinstance(fam, dict) or "tag" not in fam:
        diags.append("family.tag missing")
        return diags
    if fam["tag"] not in KNOWN_FAMILIES:
        diags.append(f"unknown family tag {fam['tag']!r}")
    sgc = cfg.get("signal_grid", {})
    T = sgc.get("T", 10.0)
    n = sgc.get("n", 512)
    if not (isinstance(n, int) and n >= 8 and (n & (n - 1)) == 0):
        diags.append(f"signal_grid.n must be a power of two >= 8, got {n}")
    if not T > 0:
        diags.append("signal_grid.T must be positive")
    if fam.get("tag") == "sinc_rkhs" and n >= 8 and T > 0:
        omega = fam.get("params", {}).get("bandlimit")
        if omega is not None and omega >= np.pi * n / (2 * T):
            diags.append(f"bandlimit {omega} at or above grid Nyquist "
                         f"{np.pi * n / (2 * T):.4f}")
    if fam.get("tag") == "alpha_mod":
        alpha = fam.get("params", {}).get("alpha", 0.5)
        if not 0.0 <= alpha < 1.0:
            diags.append(f"alpha must lie in [0, 1), got {alpha}")
    tasks = cfg.get("tasks")
    if not tasks:
        diags.append("tasks must be a nonempty list")
    else:
        for t in tasks:
            if t not in KNOWN_TASKS:
                diags.append(f"unknown task {t!r}")
    wc = cfg.get("weight", {"type": "trivial"})
    if wc.get("type") not in ("trivial", "polynomial"):
        diags.append(f"unknown weight type {wc.get('type')!r}")
    if cfg.get("covering") is not None:
        ov = cfg["covering"].get("overlap", 0.0)
        if not 0.0 <= ov < 1.0:
            diags.append(f"covering.overlap must be in [0,1), got {ov}")
    return diags


def _load(config_path: str):
    raw = Path(config_path).read_text()
    return raw, json.loads(raw)


# ---------------------------------------------------------------------------
# task implementations
# ---------------------------------------------------------------------------
class _Context:
    def __init__(self, cfg: dict, seed: int, out: Path):
        self.cfg = cfg
        self.seed = seed
        self.out = out
        sgc = cfg.get("signal_grid", {})
        self.sg = SignalGrid(float(sgc.get("T", 10.0)), int(sgc.get("n", 512)))
        famc = cfg["family"]
        self.family = make_family(famc["tag"], famc.get("params", {}), self.sg)
        dom = cfg.get("index_domain", {})
        self.grid = default_index_grid(
            self.family, bounds=dom.get("bounds"),
            resolution=dom.get("resolution"),
            **{k: dom[k] for k in ("band_spacing", "scales_per_octave") if k in dom})
        wc = cfg.get("weight", {"type": "trivial"})
        if wc.get("type") == "polynomial":
            self.w = polynomial_weight(float(wc.get("s", 1.0)))
            self.m = weight_from_w(self.w)
        else:
            self.w = trivial_weight()
            self.m = trivial_admissible_weight()
        self.rel_cut = float(cfg.get("stable_cut", 1e-10))
        self.z_per_cell = int(cfg.get("z_per_cell", 4))
        self._covering = None
        self._osc_report = None

    def covering(self):
        if self._covering is None:
            cc = self.cfg.get("covering")
            if cc is None:
                raise CoveringError("task requires a 'covering' configuration block")
            refine = cc.get("refine")
            if refine:
                cov, rep, traj = refine_until(
                    self.family, self.grid.bounds.tolist(), self.m,
                    target=refine.get("target", "full"),
                    max_levels=int(refine.get("max_levels", 8)),
                    initial_cell=cc.get("cell_size"),
                    overlap=float(cc.get("overlap", 0.0)),
                    z_per_cell=self.z_per_cell, seed=self.seed,
                    rel_cut=self.rel_cut)
                self._covering = cov
                self._osc_report = rep
                self._trajectory = traj
                self.grid = cov.grid
            else:
                self._covering = build_covering(
                    self.grid, cc.get("cell_size"),
                    overlap_fraction=float(cc.get("overlap", 0.0)))
                self._trajectory = None
        return self._covering


def task_frame_info(ctx: _Context) -> dict:
    out = {}
    bounds = frame_bounds_continuous(ctx.family, ctx.grid)
    out["frame_bounds"] = bounds.as_dict()
    out["leakage"] = leakage_report(ctx.family, ctx.grid, seed=ctx.seed)
    from coorbit.frame_families import export_atoms_csv
    box = ctx.grid.bounds
    center = box.mean(axis=1)
    quarter = center + 0.25 * (box[:, 1] - box[:, 0])
    export_atoms_csv(ctx.family, np.vstack([center, quarter]),
                     ctx.out / "atoms.csv")
    if ctx.family.tag == "cwt":
        out["admissibility_c_psi"] = ctx.family.params["c_psi"]
    if ctx.family.tag == "alpha_mod":
        xi = np.linspace(-20.0, 20.0, 161)
        smin, smax, a_const = alpha_admissibility(
            gaussian_window(ctx.sg.points), ctx.family.params["alpha"], xi, ctx.sg)
        out["alpha_admissibility"] = {"sigma_min": smin, "sigma_max": smax,
                                      "A": a_const}
    return out


def task_property_d(ctx: _Context) -> dict:
    cov = ctx.covering()
    if ctx._osc_report is None:
        ctx._osc_report = property_D_check(
            ctx.family, cov, ctx.m, ctx.grid, z_per_cell=ctx.z_per_cell,
            seed=ctx.seed, rel_cut=ctx.rel_cut)
    rep = ctx._osc_report
    out = {"osc_report": rep.as_dict(),
           "moderation": verify_moderate(cov, ctx.m).as_dict()}
    if getattr(ctx, "_trajectory", None):
        rows = [(s.level, s.cells, s.report.delta_est, s.report.sigma,
                 s.report.cond_value) for s in ctx._trajectory]
        out["refinement"] = {"passing_level": rows[-1][0],
                             "trajectory": [list(r) for r in rows]}
        with open(ctx.out / "refinement.csv", "w", newline="") as fh:
            wtr = csv.writer(fh)
            wtr.writerow(["level", "cells", "delta_est", "sigma", "cond_value"])
            wtr.writerows(rows)
    return out


def task_discretize(ctx: _Context) -> dict:
    cov = ctx.covering()
    pu = build_pu(cov, ctx.cfg.get("pu_flavor", "indicator"))
    R = gram_kernel(ctx.family, ctx.grid, rel_cut=ctx.rel_cut)
    op = build_uphi(R, cov, pu, ctx.grid)
    defect = uphi_defect_norm(op)
    sframe = sample_frame(ctx.family, cov, pu)
    c1, c2, sub = hilbert_frame_bounds(sframe, ctx.sg)
    ctx._defect = defect
    return {"cells": cov.size, "defect_estimate": defect,
            "hilbert_bounds": {"c1": c1, "c2": c2, "subspace": sub}}


def task_reconstruct(ctx: _Context) -> dict:
    cov = ctx.covering()
    pu = build_pu(cov, ctx.cfg.get("pu_flavor", "indicator"))
    battery = make_battery(ctx.family, ctx.grid,
                           int(ctx.cfg.get("battery_size", 5)), seed=ctx.seed)
    defect = getattr(ctx, "_defect", None)
    atomic_errors, banach_errors, ratios = [], [], []
    lam = None
    for f in battery:
        lam, rep = atomic_coefficients(f, ctx.family, cov, pu, ctx.grid,
                                       defect=defect, rel_cut=ctx.rel_cut)
        defect = rep.defect_estimate
        atomic_errors.append(rep.relative_error)
        samples = analyze_V(ctx.family, f, ctx.grid, use_fast_path=False).values[
            build_uphi(gram_kernel(ctx.family, ctx.grid, rel_cut=ctx.rel_cut),
                       cov, pu, ctx.grid).node_index]
        f_rec, brep = banach_frame_reconstruct(samples, ctx.family, cov, pu,
                                               ctx.grid, f_true=f, defect=defect,
                                               rel_cut=ctx.rel_cut)
        banach_errors.append(brep.relative_error)
        ratios.append(brep.norm_ratios["flat_l2_over_f"])
    with open(ctx.out / "coefficients.csv", "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["index", "re", "im"])
        for k, v in enumerate(lam):
            wtr.writerow([k, repr(float(v.real)), repr(float(v.imag))])
    return {"battery_size": len(battery),
            "atomic_max_relative_error": max(atomic_errors),
            "banach_max_relative_error": max(banach_errors),
            "flat_norm_ratio_bracket": [min(ratios), max(ratios)],
            "defect_estimate": defect}


def task_localize(ctx: _Context) -> dict:
    cov = ctx.covering()
    sframe = sample_frame(ctx.family, cov)
    gram = cross_gramian(ctx.family, ctx.family, sframe.points, sframe.points)
    rep = a_flat_norm(gram, cov, ctx.m)
    with open(ctx.out / "decay_profile.csv", "w", newline="") as fh:
        wtr = csv.writer(fh)
        wtr.writerow(["bucket_lo", "bucket_hi", "max_modulus", "weighted_sum"])
        for k in range(len(rep.decay_bucket_max)):
            wtr.writerow([repr(float(rep.decay_bucket_edges[k])),
                          repr(float(rep.decay_bucket_edges[k + 1])),
                          repr(float(rep.decay_bucket_max[k])),
                          repr(float(rep.decay_bucket_mass[k]))])
    out = {"a_flat": rep.as_dict()}
    if cov.size <= 64:
        out["gab_domination_violation"] = gab_domination_check(
            ctx.family, ctx.family, cov, ctx.grid, seed=ctx.seed,
            rel_cut=ctx.rel_cut)
    return out


def task_norms(ctx: _Context) -> dict:
    R = gram_kernel(ctx.family, ctx.grid, rel_cut=ctx.rel_cut)
    return {"gramian": am_norm(R, ctx.m, ctx.grid).as_dict()}


def task_sequence_spaces(ctx: _Context) -> dict:
    """Closed-form check of the covering sequence norms plus the
    neighbor-sum bound, on seeded random sequences."""
    from .sequence_spaces import (SeqSpaceSpec, closed_form_norm, flat_norm,
                                  plus_bound_ratio, plus_theoretical_bound)
    cov = ctx.covering()
    # closed forms are exact on partitions; check them on the partition
    # version of the configured lattice, the neighbor-sum bound on the
    # configured (possibly overlapping) covering
    cc = ctx.cfg.get("covering", {})
    part = build_covering(ctx.grid, cc.get("cell_size"), overlap_fraction=0.0)
    rng = np.random.default_rng(np.random.PCG64(ctx.seed))
    worst_dev = 0.0
    for p in (1, 2, np.inf):
        spec = SeqSpaceSpec(p=p, weight=ctx.w, covering=part, flavor="flat")
        for _ in range(20):
            lam = rng.standard_normal(part.size)
            worst_dev = max(worst_dev, abs(flat_norm(lam, spec) -
                                           closed_form_norm(lam, spec)))
    spec_n = SeqSpaceSpec(p=2, weight=ctx.w, covering=cov, flavor="natural")
    bound = plus_theoretical_bound(spec_n)
    worst_ratio = max(plus_bound_ratio(rng.standard_normal(cov.size), spec_n)
                      for _ in range(100))
    return {"closed_form_max_deviation": worst_dev,
            "plus_operator_max_ratio": worst_ratio,
            "plus_operator_bound": bound}


_TASKS = {
    "frame-info": task_frame_info,
    "property-d": task_property_d,
    "discretize": task_discretize,
    "reconstruct": task_reconstruct,
    "localize": task_localize,
    "norms": task_norms,
    "sequence-spaces": task_sequence_spaces,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------
def run(config_path: str, out_dir: str | None = None, seed: int | None = None,
        threads: int = 1) -> int:
    try:
        raw, cfg = _load(config_path)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    diags = validate_config(cfg)
    if diags:
        for d in diags:
            print(f"invalid config: {d}", file=sys.stderr)
        return 2
    out = Path(out_dir or cfg.get("output", "coorbit_out"))
    out.mkdir(parents=True, exist_ok=True)
    seed = int(cfg.get("seed", 0) if seed is None else seed)

    report = {
        "tool": {"name": "coorbit", "version": __version__},
        "config_echo": raw,
        "seed": seed,
        "tasks": {},
    }
    # wall times and the thread count are not load-bearing and live in a
    # sibling file, keeping report.json bit-identical across reruns and
    # across thread counts
    timings = {"threads": int(threads)}
    try:
        ctx = _Context(cfg, seed, out)
        for name in cfg["tasks"]:
            t0 = time.perf_counter()
            report["tasks"][name] = _TASKS[name](ctx)
            timings[name] = time.perf_counter() - t0
    except (FamilyError, CoveringError, OscillationError, DiscretizationError,
            SolverError, ValueError) as exc:
        print(f"numerical failure in task pipeline: {exc}", file=sys.stderr)
        return 3

    _assert_finite(report["tasks"])
    (out / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1, default=_json_default))
    (out / "timings.json").write_text(
        json.dumps(timings, sort_keys=True, indent=1))
    return 0


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _assert_finite(node):
    if isinstance(node, dict):
        for v in node.values():
            _assert_finite(v)
    elif isinstance(node, (list, tuple)):
        for v in node:
            _assert_finite(v)
    elif isinstance(node, (float, np.floating)):
        if not np.isfinite(node):
            raise SolverError("non-finite value in report")


def validate(config_path: str) -> int:
    try:
        _, cfg = _load(config_path)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for d in validate_config(cfg):
        print(d)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="coorbit",
                                     description="continuous-frame discretization engine")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a pipeline configuration")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_val = sub.add_parser("validate", help="check a configuration file")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, out_dir=args.out, seed=args.seed,
                   threads=args.threads)
    return validate(args.config)


if __name__ == "__main__":
    raise SystemExit(main())
