import numpy as np
import pytest

from coorbit.coverings import build_covering, refine_covering
from coorbit.frame_families import gram_kernel, make_family
from coorbit.kernel_algebra import Kernel
from coorbit.measure_space import (SignalGrid, polynomial_weight,
                                   trivial_admissible_weight, weight_from_w)
from coorbit.oscillation import (OscillationError, osc_kernel,
                                 osc_norm_streaming, property_D_check,
                                 refine_until)


@pytest.fixture(scope="module")
def sinc_setup():
    sg = SignalGrid(8.0, 128)
    fam = make_family("sinc_rkhs", {"bandlimit": np.pi / 2}, sg)
    from coorbit.frame_families import default_index_grid
    grid = default_index_grid(fam, resolution=[128])
    return fam, grid


class TestOscKernel:
    def test_constant_kernel_has_zero_oscillation(self, unit_grid_1d, m_trivial):
        const = Kernel(lambda p, q: np.ones((p.shape[0], q.shape[0])) + 0j)
        cov = build_covering(unit_grid_1d, 0.25)
        osc = osc_kernel(const, cov, unit_grid_1d)
        vals = osc.block(unit_grid_1d.points[:8], unit_grid_1d.points[:8])
        assert np.abs(vals).max() == 0.0
        assert osc_norm_streaming(const, cov, unit_grid_1d, m_trivial) == 0.0

    def test_nonnegative(self, sinc_setup, m_trivial):
        fam, grid = sinc_setup
        R = gram_kernel(fam, grid)
        cov = build_covering(grid, 1.0)
        osc = osc_kernel(R, cov, grid, z_per_cell=3)
        vals = osc.block(grid.points[::16], grid.points[::16])
        assert np.all(vals >= 0.0)

    def test_tiny_cells_give_small_oscillation(self, sinc_setup, m_trivial):
        # single-node cells: Q_y degenerates toward {y} and osc -> 0
        fam, grid = sinc_setup
        R = gram_kernel(fam, grid)
        coarse = osc_norm_streaming(R, build_covering(grid, 1.0), grid, m_trivial,
                                    z_per_cell=3)
        tiny = osc_norm_streaming(R, build_covering(grid, 0.125), grid, m_trivial,
                                  z_per_cell=3)
        assert tiny <= 0.2 * coarse

    def test_monotone_in_z_samples(self, sinc_setup, m_trivial):
        # nested z-streams: adding samples never decreases the sampled sup
        fam, grid = sinc_setup
        R = gram_kernel(fam, grid)
        cov = build_covering(grid, 1.0)
        norms = [osc_norm_streaming(R, cov, grid, m_trivial, z_per_cell=z, seed=5)
                 for z in (1, 3, 6)]
        assert norms[0] <= norms[1] <= norms[2]

    def test_aligned_below_strict(self, gabor_small, m_trivial):
        fam, grid = gabor_small
        R = gram_kernel(fam, grid, rel_cut=0.2)
        cov = build_covering(grid, 0.625)
        strict = osc_norm_streaming(R, cov, grid, m_trivial, comparison="strict")
        aligned = osc_norm_streaming(R, cov, grid, m_trivial,
                                     comparison="phase_aligned")
        assert aligned <= strict + 1e-12
        # the phase quotient removes the position-growing gauge term
        assert aligned <= 0.7 * strict

    def test_streaming_matches_pointwise_кernel(self, sinc_setup, m_trivial):
        fam, grid = sinc_setup
        R = gram_kernel(fam, grid)
        cov = build_covering(grid, 1.0)
        osc = osc_kernel(R, cov, grid, z_per_cell=3, seed=2)
        pts = grid.points
        mat = osc.block(pts, pts)
        w = grid.weights
        norm_dense = max(float((mat @ w).max()), float((w @ mat).max()))
        norm_stream = osc_norm_streaming(R, cov, grid, m_trivial, z_per_cell=3,
                                         seed=2)
        assert norm_dense == pytest.approx(norm_stream, rel=1e-12)


class TestPropertyD:
    def test_report_is_consistent(self, gabor_small, m_trivial):
        fam, grid = gabor_small
        cov = build_covering(grid, 1.25)
        rep = property_D_check(fam, cov, m_trivial, grid, z_per_cell=3,
                               rel_cut=0.2)
        assert rep.sigma == pytest.approx(
            max(rep.c_m_u * rep.r_norm, rep.r_norm + rep.delta_est))
        assert rep.cond_value == pytest.approx(
            rep.delta_est * (rep.r_norm + rep.sigma))
        assert rep.full == (rep.cond_value <= 1.0)
        assert rep.atomic_only == (rep.delta_est <= 1.0)
        assert rep.banach_only == (rep.delta_est <= 1.0 / rep.r_norm)
        assert rep.comparison == "phase_aligned"   # gabor drops the torus phase
        assert rep.sigma >= rep.r_norm

    def test_strict_for_real_kernel_families(self, sinc_setup, m_trivial):
        fam, grid = sinc_setup
        cov = build_covering(grid, 1.0)
        rep = property_D_check(fam, cov, m_trivial, grid, z_per_cell=3)
        assert rep.comparison == "strict"

    def test_weighted_weight_norm_grows(self, gabor_small):
        fam, grid = gabor_small
        cov = build_covering(grid, 1.25)
        m1 = trivial_admissible_weight()
        ms = weight_from_w(polynomial_weight(1.0))
        r1 = property_D_check(fam, cov, m1, grid, z_per_cell=2, rel_cut=0.2)
        rs = property_D_check(fam, cov, ms, grid, z_per_cell=2, rel_cut=0.2)
        assert rs.r_norm > r1.r_norm
        assert rs.delta_est >= r1.delta_est
        assert rs.c_m_u > 1.0


class TestRefineUntil:
    def test_ladder_reaches_full_flag(self, gabor_ladder):
        rep = gabor_ladder["report"]
        traj = gabor_ladder["trajectory"]
        assert rep.full
        assert traj[-1].level <= 8
        deltas = [s.report.delta_est for s in traj]
        assert all(a > b for a, b in zip(deltas, deltas[1:]))

    def test_banach_no_later_than_full(self, gabor_ladder, m_trivial):
        fam = gabor_ladder["family"]
        _, rep_b, traj_b = refine_until(
            fam, gabor_ladder["domain"], m_trivial, target="banach",
            max_levels=8, initial_cell=0.9, z_per_cell=3, seed=0, rel_cut=0.2)
        assert rep_b.banach_only
        assert traj_b[-1].level <= gabor_ladder["trajectory"][-1].level

    def test_zero_levels_rejected(self, gabor_ladder, m_trivial):
        with pytest.raises(OscillationError):
            refine_until(gabor_ladder["family"], gabor_ladder["domain"],
                         m_trivial, max_levels=0)

    def test_unreachable_target_reports_trajectory(self, gabor_small, m_trivial):
        fam, _ = gabor_small
        with pytest.raises(OscillationError, match="trajectory"):
            refine_until(fam, [[-4.0, 4.0], [-4.0, 4.0]], m_trivial,
                         target="full", max_levels=1, initial_cell=2.0,
                         z_per_cell=2, rel_cut=0.2)

    def test_osc_norm_decreases_across_families(self, m_trivial):
        # dyadic covering refinement on a fixed grid, three levels each
        sg = SignalGrid(8.0, 64)
        cases = []
        fam_g = make_family("gabor", None, sg)
        from coorbit.frame_families import default_index_grid
        grid_g = default_index_grid(fam_g, bounds=[[-4, 4], [-4, 4]],
                                    resolution=[32, 32])
        cases.append((fam_g, grid_g, 2.0))
        fam_s = make_family("sinc_rkhs", {"bandlimit": np.pi / 2}, sg)
        grid_s = default_index_grid(fam_s, resolution=[64])
        cases.append((fam_s, grid_s, 4.0))
        fam_a = make_family("alpha_mod", {"alpha": 0.5}, sg)
        grid_a = default_index_grid(fam_a, bounds=[[-4, 4], [-4, 4]],
                                    resolution=[32, 32])
        cases.append((fam_a, grid_a, 2.0))
        for fam, grid, cell in cases:
            R = gram_kernel(fam, grid, rel_cut=0.2)
            cov = build_covering(grid, cell)
            comparison = "phase_aligned" if fam.phase_quotient else "strict"
            norms = []
            for lvl in range(3):
                norms.append(osc_norm_streaming(R, cov, grid, m_trivial,
                                                z_per_cell=2,
                                                comparison=comparison))
                if lvl < 2:
                    cov = refine_covering(cov)
            assert norms[0] > norms[1] > norms[2], fam.tag

    def test_osc_norm_decreases_wavelet(self, m_trivial):
        sg = SignalGrid(10.0, 256)
        fam = make_family("cwt", None, sg)
        from coorbit.frame_families import default_index_grid
        grid = default_index_grid(fam, bounds=[[0.5, 4.0], [-5.0, 5.0]],
                                  scales_per_octave=12, band_spacing=0.2)
        R = gram_kernel(fam, grid, rel_cut=0.2)
        cov = build_covering(grid, [0.6, 1.2])
        norms = []
        for lvl in range(3):
            norms.append(osc_norm_streaming(R, cov, grid, m_trivial,
                                            z_per_cell=2))
            if lvl < 2:
                cov = refine_covering(cov)
        assert norms[0] > norms[1] > norms[2]
