import numpy as np

from advreg.pointcloud import load_bundled_cloud, rms_radius
from advreg.shapes import toy_bunny


def test_bundled_file_is_the_generated_shape():
    np.testing.assert_array_equal(load_bundled_cloud().points, toy_bunny(2000, seed=0).points)


def test_generator_is_seeded_and_normalized():
    a, b = toy_bunny(500, seed=3).points, toy_bunny(500, seed=3).points
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, toy_bunny(500, seed=4).points)
    np.testing.assert_allclose(a.mean(axis=0), 0, atol=1e-12)
    assert abs(rms_radius(a) - 1) < 1e-12


def test_shape_has_no_rotational_symmetry():
    pts = toy_bunny(2000, seed=0).points
    ev = np.linalg.eigvalsh(np.cov(pts.T))
    assert ev[1] / ev[0] > 2 and ev[2] / ev[1] > 2
