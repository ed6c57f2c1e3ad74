import numpy as np
import pytest

from coorbit.kernel_algebra import (Kernel, KernelError, am_norm, apply_kernel,
                                    compose, export_kernel_csv, involution,
                                    lp_w_norm)
from coorbit.measure_space import (GridError, build_quad_grid, polynomial_weight,
                                   trivial_weight, weight_from_w)


def gaussian_kernel():
    return Kernel(lambda p, q: np.exp(-(p[:, None, 0] - q[None, :, 0]) ** 2) + 0j,
                  provenance="gaussian")


def random_kernel(rng, scale=1.0):
    a, b, c = rng.uniform(0.5, 2.0, 3)

    def ev(p, q):
        d = p[:, None, 0] - q[None, :, 0]
        s = p[:, None, 0] + q[None, :, 0]
        return scale * np.exp(-a * d * d) * (np.cos(b * s) + 1j * np.sin(c * d))
    return Kernel(ev, provenance="random-test")


class TestAmNorm:
    def test_zero_kernel(self, unit_grid_1d, m_trivial):
        k = Kernel(lambda p, q: np.zeros((p.shape[0], q.shape[0])) + 0j)
        rep = am_norm(k, m_trivial, unit_grid_1d)
        assert rep.a1_norm == 0.0 and rep.am_norm == 0.0

    def test_gaussian_row_integral_is_sqrt_pi(self, wide_grid_1d, m_trivial):
        rep = am_norm(gaussian_kernel(), m_trivial, wide_grid_1d)
        assert rep.a1_norm == pytest.approx(np.sqrt(np.pi), abs=1e-3)

    def test_weighted_norm_dominates(self, wide_grid_1d, rng):
        m = weight_from_w(polynomial_weight(1.0))
        for _ in range(5):
            k = random_kernel(rng)
            rep = am_norm(k, m, wide_grid_1d)
            assert rep.am_norm >= rep.a1_norm - 1e-14
            assert rep.am_norm == max(rep.row_sup, rep.col_sup)

    def test_nonfinite_rejected(self, unit_grid_1d, m_trivial):
        k = Kernel(lambda p, q: np.full((p.shape[0], q.shape[0]), np.inf))
        with pytest.raises(KernelError):
            am_norm(k, m_trivial, unit_grid_1d)


class TestCompose:
    def test_compose_with_zero(self, unit_grid_1d, m_trivial):
        zero = Kernel(lambda p, q: np.zeros((p.shape[0], q.shape[0])) + 0j)
        out = compose(gaussian_kernel(), zero, unit_grid_1d)
        assert np.all(out.matrix(unit_grid_1d) == 0)

    def test_submultiplicative_on_random_pairs(self, rng, m_trivial):
        grid = build_quad_grid([[-3.0, 3.0]], [48])
        m = weight_from_w(polynomial_weight(1.0))
        for _ in range(20):
            k1, k2 = random_kernel(rng), random_kernel(rng)
            prod = compose(k1, k2, grid)
            for weight in (m_trivial, m):
                lhs = am_norm(prod, weight, grid).am_norm
                r1 = am_norm(k1, weight, grid).am_norm
                r2 = am_norm(k2, weight, grid).am_norm
                assert lhs <= r1 * r2 * (1 + 1e-10)

    def test_evaluator_snaps_to_cache(self, unit_grid_1d):
        k = compose(gaussian_kernel(), gaussian_kernel(), unit_grid_1d)
        mat = k.matrix(unit_grid_1d)
        probe = unit_grid_1d.points[5] + 1e-6
        assert k.block(np.array([probe]), np.array([unit_grid_1d.points[7]]))[0, 0] \
            == pytest.approx(mat[5, 7])


class TestInvolution:
    def test_involution_squares_to_identity(self, unit_grid_1d, rng):
        k = random_kernel(rng)
        mat = k.matrix(unit_grid_1d)
        twice = involution(involution(k)).matrix(unit_grid_1d)
        assert np.array_equal(mat, twice)

    def test_isometry_of_am_norm(self, wide_grid_1d, rng):
        m = weight_from_w(polynomial_weight(1.0))
        for _ in range(5):
            k = random_kernel(rng)
            a = am_norm(k, m, wide_grid_1d).am_norm
            b = am_norm(involution(k), m, wide_grid_1d).am_norm
            assert a == pytest.approx(b, rel=1e-12)


class TestApply:
    def test_zero_kernel_maps_to_zero(self, unit_grid_1d, rng):
        zero = Kernel(lambda p, q: np.zeros((p.shape[0], q.shape[0])) + 0j)
        f = rng.standard_normal(unit_grid_1d.size)
        assert np.all(apply_kernel(zero, f, unit_grid_1d) == 0)

    def test_composition_consistency(self, rng):
        grid = build_quad_grid([[-3.0, 3.0]], [48])
        k1, k2 = random_kernel(rng), random_kernel(rng)
        f = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
        lhs = apply_kernel(k1, apply_kernel(k2, f, grid), grid)
        rhs = apply_kernel(compose(k1, k2, grid), f, grid)
        assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(lhs).max()

    def test_schur_bound(self, rng):
        # ||K(F)||_{L^p_w} <= ||K|A_m|| ||F||_{L^p_w} with m associated to w
        grid = build_quad_grid([[-4.0, 4.0]], [64])
        w = polynomial_weight(1.0)
        m = weight_from_w(w)
        for _ in range(5):
            k = random_kernel(rng)
            bound = am_norm(k, m, grid).am_norm
            f = rng.standard_normal(grid.size) + 1j * rng.standard_normal(grid.size)
            kf = apply_kernel(k, f, grid)
            for p in (1, 2, np.inf):
                assert lp_w_norm(kf, p, w, grid) <= \
                    bound * lp_w_norm(f, p, w, grid) * (1 + 1e-12)

    def test_length_mismatch(self, unit_grid_1d):
        with pytest.raises(GridError):
            apply_kernel(gaussian_kernel(), np.ones(3), unit_grid_1d)

    def test_linearity(self, unit_grid_1d, rng):
        k = random_kernel(rng)
        f = rng.standard_normal(unit_grid_1d.size)
        g = rng.standard_normal(unit_grid_1d.size)
        lhs = apply_kernel(k, 2.0 * f + 3.0 * g, unit_grid_1d)
        rhs = 2.0 * apply_kernel(k, f, unit_grid_1d) + \
            3.0 * apply_kernel(k, g, unit_grid_1d)
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()


class TestLpNorm:
    def test_zero(self, unit_grid_1d):
        assert lp_w_norm(np.zeros(unit_grid_1d.size), 2, trivial_weight(),
                         unit_grid_1d) == 0.0

    def test_constant_one_l1(self, unit_grid_1d):
        assert lp_w_norm(np.ones(unit_grid_1d.size), 1, trivial_weight(),
                         unit_grid_1d) == pytest.approx(1.0, abs=1e-14)

    def test_half_indicator_l2(self):
        grid = build_quad_grid([[0.0, 1.0]], [128])
        f = (grid.points[:, 0] < 0.5).astype(float)
        assert lp_w_norm(f, 2, trivial_weight(), grid) == \
            pytest.approx(np.sqrt(0.5), abs=1e-3)

    def test_bad_p(self, unit_grid_1d):
        with pytest.raises(KernelError):
            lp_w_norm(np.ones(unit_grid_1d.size), 3, trivial_weight(), unit_grid_1d)


class TestExport:
    def test_csv_cells_quoted(self, tmp_path, unit_grid_1d):
        grid = build_quad_grid([[0.0, 1.0]], [8])
        path = tmp_path / "k.csv"
        export_kernel_csv(gaussian_kernel(), grid, path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 8
        first = lines[0].split('","')
        assert len(first) == 8
        re_part, im_part = first[0].lstrip('"').split(",")
        assert float(re_part) == pytest.approx(1.0)
        assert float(im_part) == 0.0

    def test_cache_bound(self, m_trivial):
        big = build_quad_grid([[0.0, 1.0], [0.0, 1.0]], [70, 70])  # 4900 > 4096
        with pytest.raises(KernelError):
            gaussian_kernel().matrix(big)
