"""Parity between the compiled kernel lane and the NumPy fallback.

Both lanes are written to perform identical floating-point operations in
identical order, so agreement here is exact, not approximate.
"""

import numpy as np
import pytest

from efface._kernels import BACKEND, pykern

_ckern = pytest.importorskip(
    "efface._kernels._ckern", reason="compiled kernel lane not built"
)

rng = np.random.default_rng(20240810)
ARRAYS = [
    rng.random((16, 16)),
    rng.random((17, 23)),
    rng.random((5, 41)),
    (rng.random((32, 32)) > 0.5).astype(np.float64),
]


@pytest.mark.parametrize("a", ARRAYS, ids=lambda a: f"{a.shape}")
@pytest.mark.parametrize("taps", [1, 3, 7, 13])
def test_sep_convolve_parity(a, taps):
    k = rng.random(taps)
    k /= k.sum()
    got_py = pykern.sep_convolve(a, k)
    got_c = _ckern.sep_convolve(a, k)
    assert np.array_equal(got_py, got_c)


@pytest.mark.parametrize("a", ARRAYS, ids=lambda a: f"{a.shape}")
@pytest.mark.parametrize("radius", [0, 1, 3])
@pytest.mark.parametrize("use_max", [True, False])
def test_minmax_parity(a, radius, use_max):
    got_py = pykern.minmax_filter(a, radius, use_max)
    got_c = _ckern.minmax_filter(a, radius, use_max)
    assert np.array_equal(got_py, got_c)


@pytest.mark.parametrize("a", ARRAYS, ids=lambda a: f"{a.shape}")
@pytest.mark.parametrize("out_shape", [(8, 8), (32, 32), (31, 7), (64, 50)])
def test_bilinear_parity(a, out_shape):
    got_py = pykern.resize_bilinear(a, *out_shape)
    got_c = _ckern.resize_bilinear(a, *out_shape)
    assert np.array_equal(got_py, got_c)


@pytest.mark.parametrize("a", ARRAYS, ids=lambda a: f"{a.shape}")
@pytest.mark.parametrize("out_shape", [(1, 1), (4, 4), (8, 8), (3, 11), (40, 40)])
def test_area_parity(a, out_shape):
    got_py = pykern.resize_area(a, *out_shape)
    got_c = _ckern.resize_area(a, *out_shape)
    assert np.array_equal(got_py, got_c)


def test_backend_reports_compiled():
    # the extension imported above, so auto selection must have found it
    assert BACKEND == "c"
