import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vsrgan.data import contributions, cubic_kernel, imresize_bicubic, resize_matrix
from vsrgan.errors import ConfigError

from oracles import direct_resize, keys


def test_kernel_values_are_exact():
    assert cubic_kernel(0.0) == 1.0
    assert cubic_kernel(1.0) == 0.0
    assert cubic_kernel(0.5) == 0.5625
    assert cubic_kernel(1.5) == -0.0625
    assert cubic_kernel(2.0) == 0.0
    assert cubic_kernel(-0.5) == 0.5625


@given(st.floats(-3, 3, allow_nan=False))
def test_kernel_matches_scalar_formula(x):
    assert cubic_kernel(x) == pytest.approx(keys(x), abs=1e-15)


def test_kernel_partition_of_unity():
    for frac in np.linspace(0, 1, 11):
        assert sum(cubic_kernel(frac - k) for k in range(-2, 3)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("shape,out", [
    ((12, 12), (24, 24)), ((12, 12), (6, 6)), ((13, 11), (5, 7)),
    ((9, 10), (27, 30)), ((16, 16), (4, 4)), ((10, 8), (10, 8)), ((7, 9), (11, 4)),
])
@pytest.mark.parametrize("antialias", [True, False])
def test_matches_direct_summation_oracle(shape, out, antialias):
    rng = np.random.default_rng(hash((shape, out)) % 2**32)
    img = rng.random(shape)
    fast = imresize_bicubic(img, *out, antialias=antialias)
    np.testing.assert_allclose(fast, direct_resize(img, *out, antialias), rtol=0, atol=1e-10)


def test_upsample_by_two_interior_weights():
    # output sample sits 0.25 px from its nearest input: Keys weights at
    # distances 1.25, 0.25, 0.75, 1.75
    _, w = contributions(10, 20, border="symmetric")
    expected = [keys(1.25), keys(0.25), keys(0.75), keys(1.75)]
    np.testing.assert_allclose(w[11][w[11] != 0], expected, atol=1e-15)
    assert expected == [-0.0703125, 0.8671875, 0.2265625, -0.0234375]


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 1), st.integers(4, 20), st.integers(4, 20), st.integers(1, 40),
       st.integers(1, 40), st.booleans())
def test_constant_image_is_a_fixed_point(c, h, w, oh, ow, aa):
    img = np.full((h, w), c)
    out = imresize_bicubic(img, oh, ow, antialias=aa)
    assert np.all(out == c)


def test_identity_resize_is_exact(rng):
    img = rng.random((3, 9, 11))
    np.testing.assert_array_equal(imresize_bicubic(img, 9, 11), img)


@pytest.mark.parametrize("n,m", [(8, 16), (16, 8), (9, 4), (5, 5)])
def test_resize_matrix_rows_sum_to_one(n, m):
    np.testing.assert_allclose(resize_matrix(n, m).sum(axis=1), 1.0, atol=1e-14)


def test_linear_ramp_is_reproduced_in_interior():
    ramp = np.tile(np.arange(20.0), (4, 1))
    out = imresize_bicubic(ramp, 4, 40)
    # cubic convolution reproduces linear functions away from the borders
    expected = (np.arange(40) + 0.5) / 2 - 0.5
    np.testing.assert_allclose(out[0, 4:-4], expected[4:-4], atol=1e-12)


def test_antialias_flag_changes_downscale_only(rng):
    img = rng.random((16, 16))
    assert not np.allclose(imresize_bicubic(img, 8, 8, True), imresize_bicubic(img, 8, 8, False))
    np.testing.assert_array_equal(imresize_bicubic(img, 32, 32, True),
                                  imresize_bicubic(img, 32, 32, False))


def test_border_modes_differ_only_at_edges(rng):
    img = rng.random((16, 16))
    a = imresize_bicubic(img, 32, 32, border="symmetric")
    b = imresize_bicubic(img, 32, 32, border="replicate")
    np.testing.assert_array_equal(a[3:-3, 3:-3], b[3:-3, 3:-3])
    assert not np.array_equal(a, b)


def test_leading_axes_are_batched(rng):
    imgs = rng.random((2, 3, 10, 10))
    out = imresize_bicubic(imgs, 5, 5)
    np.testing.assert_array_equal(out[1, 2], imresize_bicubic(imgs[1, 2], 5, 5))


def test_invalid_arguments():
    with pytest.raises(ConfigError):
        contributions(0, 4)
    with pytest.raises(ConfigError):
        imresize_bicubic(np.zeros((4, 4)), 8, 8, border="wrap")
