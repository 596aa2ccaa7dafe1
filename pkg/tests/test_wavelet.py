import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from forgetrace.errors import InvalidInput
from forgetrace.wavelet import SubbandSet, dwt2, idwt2

from conftest import fd_rel_errors, projected

even = st.integers(1, 8).map(lambda k: 2 * k)
grids = st.tuples(even, even).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-1e3, 1e3, allow_nan=False))
)


def test_all_ones_block():
    s = dwt2(np.ones((2, 2)))
    assert s.LL[0, 0] == 2
    assert s.LH[0, 0] == s.HL[0, 0] == s.HH[0, 0] == 0


def test_hand_block():
    s = dwt2(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert (s.LL[0, 0], s.HL[0, 0], s.LH[0, 0], s.HH[0, 0]) == (5, -1, -2, 0)
    assert s.energy() == 30 == 1 + 4 + 9 + 16


def test_constant_grid_has_no_detail():
    s = dwt2(np.full((6, 8), 3.7))
    for band in (s.LH, s.HL, s.HH):
        assert np.all(band == 0)


def test_inverse_examples():
    z = np.zeros((3, 4))
    ones = idwt2(SubbandSet(np.full((3, 4), 2.0), z, z, z, (6, 8)))
    assert np.array_equal(ones, np.ones((6, 8)))
    assert np.array_equal(idwt2(SubbandSet(z, z, z, z, (6, 8))), np.zeros((6, 8)))


def test_odd_dimension_rejected():
    with pytest.raises(InvalidInput):
        dwt2(np.zeros((3, 4)))


def test_subband_shape_mismatch_rejected():
    with pytest.raises(InvalidInput):
        idwt2(SubbandSet(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)), (4, 4)))


@given(grids)
def test_perfect_reconstruction(g):
    assert np.max(np.abs(idwt2(dwt2(g)) - g), initial=0) <= 1e-6 * max(1.0, np.abs(g).max(initial=0))


@given(grids)
def test_energy_conservation(g):
    e = (g**2).sum()
    assert abs(e - dwt2(g).energy()) <= 1e-6 * max(e, 1e-300) + 1e-12


@given(grids, st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**32 - 1))
@settings(max_examples=50)
def test_linearity(g1, a, b, seed):
    g2 = np.random.default_rng(seed).standard_normal(g1.shape)
    lhs = dwt2(a * g1 + b * g2).bands()
    s1, s2 = dwt2(g1).bands(), dwt2(g2).bands()
    for l, x, y in zip(lhs, s1, s2):
        assert np.allclose(l, a * x + b * y, rtol=1e-9, atol=1e-9 * (1 + np.abs(g1).max()))


def test_batched_leading_axes_match_per_slice():
    g = np.random.default_rng(0).standard_normal((3, 5, 4, 6))
    s = dwt2(g)
    assert s.LL.shape == (3, 5, 2, 3)
    assert np.allclose(dwt2(g[1, 2]).HH, s.HH[1, 2])
    assert np.allclose(idwt2(s), g)


def test_torch_and_numpy_agree():
    g = np.random.default_rng(1).standard_normal((4, 8))
    s_np, s_t = dwt2(g), dwt2(torch.from_numpy(g))
    for a, b in zip(s_np.bands(), s_t.bands()):
        assert np.allclose(a, b.numpy(), atol=0)
    assert np.allclose(idwt2(s_t).numpy(), g, atol=1e-12)


@pytest.mark.parametrize("which", ["dwt", "idwt"])
def test_gradients_match_finite_differences(which):
    x = torch.randn(2, 6, 8, dtype=torch.float64, requires_grad=True)
    if which == "dwt":
        fn = lambda: projected(torch.stack(dwt2(x).bands()))
    else:
        fn = lambda: projected(idwt2(SubbandSet(x[0, :3, :4], x[0, 3:, :4], x[1, :3, 4:], x[1, 3:, 4:], (6, 8))))
    assert fd_rel_errors(fn, x, n_coords=40).max() <= 1e-6
