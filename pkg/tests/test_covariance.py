import math

import numpy as np
import pytest

from lvephi4.covariance import (
    DEFAULT_M, ContinuumCovariance, kernel, kernel_table_csv, lattice_covariance, lattice_slices,
    site_model, slice_kernel, square_root, tadpole_slope, tadpole_table,
)
from lvephi4.errors import DomainError


def test_slices_add_up_to_kernel():
    c = ContinuumCovariance(1.0, DEFAULT_M, 6)
    for r in (0.0, 0.01, 0.3, 1.7):
        total = sum(slice_kernel(c, j, r) for j in range(7))
        assert total == pytest.approx(kernel(c, r), rel=1e-10)


def test_tadpole_is_exponential_integral():
    c = ContinuumCovariance(1.0, DEFAULT_M, 5)
    from scipy.special import exp1

    assert kernel(c, 0.0) == pytest.approx(exp1(c.cutoff ** -2) / (4 * math.pi), rel=1e-14)


def test_per_slice_tadpole_tends_to_log_m_over_two_pi():
    c = ContinuumCovariance(1.0, DEFAULT_M, 12)
    tad = tadpole_table(c)
    target = math.log(DEFAULT_M) / (2 * math.pi)
    for j in range(8, 13):
        assert tad.per_slice[j] == pytest.approx(target, rel=1e-2)


def test_cumulative_tadpole_grows_linearly():
    fit = tadpole_slope()
    assert fit["r2"] >= 0.999
    assert fit["slope"] == pytest.approx(fit["expected_slope"], rel=1e-3)


def test_kernel_decays_at_large_distance():
    c = ContinuumCovariance(1.0, DEFAULT_M, 4)
    assert kernel(c, 30.0) <= 1e-12


def test_slice_kernel_is_short_ranged():
    c = ContinuumCovariance(1.0, DEFAULT_M, 8)
    j = 6
    # slice j reaches alpha = M^(2 - 2j), so its range is M^(1 - j)
    near = slice_kernel(c, j, DEFAULT_M ** (1 - j))
    far = slice_kernel(c, j, 8 * DEFAULT_M ** (1 - j))
    assert far < 1e-3 * near


def test_negative_distance_rejected():
    with pytest.raises(DomainError):
        kernel(ContinuumCovariance(), -1.0)


@pytest.mark.parametrize("mode", ["slice", "momentum"])
def test_lattice_covariance_is_symmetric_psd(mode):
    m = lattice_covariance(3, mode=mode, j_max=3)
    C = m.covariance
    assert np.allclose(C, C.T)
    assert np.linalg.eigvalsh(C).min() > -1e-10


def test_lattice_slices_add_up():
    m = site_model(2, mode="slice", j_max=3)
    assert np.allclose(sum(lattice_slices(m)), m.covariance, rtol=1e-10, atol=1e-14)


def test_momentum_tadpole_stabilises_with_cutoff():
    a = lattice_covariance(4, mode="momentum", j_max=8).T
    b = lattice_covariance(4, mode="momentum", j_max=12).T
    assert a == pytest.approx(b, rel=1e-12)


def test_square_root_rejects_negative_matrix():
    with pytest.raises(DomainError):
        square_root(np.diag([1.0, -1.0]))
    S = square_root(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(S @ S, [[2, 1], [1, 2]])


def test_kernel_table_csv_has_header():
    text = kernel_table_csv(ContinuumCovariance(1.0, DEFAULT_M, 2), [0.5, 1.0])
    assert text.splitlines()[0] == "r,C_Lambda,C_0,C_1,C_2"


def test_bad_sides_rejected():
    with pytest.raises(DomainError):
        lattice_covariance(0)
