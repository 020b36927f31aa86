import cv2
import numpy as np
import pytest

from handsynth.envmap import (EnvMap, Environment, environment, load_envmap, load_envmap_file,
                              pixel_directions, procedural_envmap, sample_bilinear)
from handsynth.errors import InvalidArgument, LoadError


def random_dirs(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@pytest.fixture(scope="module")
def env_map():
    return procedural_envmap(3, height=32)


def test_shape_and_sign_validation():
    with pytest.raises(InvalidArgument):
        EnvMap(np.ones((4, 4, 3), np.float32))
    bad = np.ones((4, 8, 3), np.float32)
    bad[0, 0, 0] = -1
    with pytest.raises(InvalidArgument):
        EnvMap(bad)
    m = procedural_envmap(0, height=16)
    assert m.width == 2 * m.height and np.all(m.radiance >= 0)


def test_pixel_centres_sample_exactly(env_map):
    dirs = pixel_directions(env_map.height, env_map.width)
    np.testing.assert_allclose(sample_bilinear(env_map.radiance, dirs), env_map.radiance,
                               rtol=1e-5, atol=1e-6)


def test_identity_lookup(env_map):
    d = random_dirs(np.random.default_rng(0), 500)
    assert np.array_equal(Environment(env_map).lookup(d), sample_bilinear(env_map.radiance, d))


def test_exposure_doubles(env_map):
    d = random_dirs(np.random.default_rng(1), 500)
    base = Environment(env_map, 0.7, 0.0).lookup(d)
    assert np.array_equal(Environment(env_map, 0.7, 1.0).lookup(d), 2.0 * base)
    assert np.array_equal(Environment(env_map, 0.0, 1.0).ambient, 2.0 * env_map.mean)


def test_rotation_definition(env_map):
    d = random_dirs(np.random.default_rng(2), 500)
    rotated = Environment(env_map, np.pi).lookup(d)
    np.testing.assert_allclose(rotated, Environment(env_map).lookup(d @ rot_z(-np.pi).T),
                               atol=1e-12)


def test_key_light_follows_rotation(env_map):
    d0, c0 = Environment(env_map).key_light
    d1, c1 = Environment(env_map, 1.2, -1.0).key_light
    np.testing.assert_allclose(d1, rot_z(1.2) @ d0, atol=1e-12)
    np.testing.assert_allclose(c1, 0.5 * c0, rtol=1e-12)


def test_key_light_finds_the_sun():
    h = 32
    rad = np.full((h, 2 * h, 3), 0.2, np.float32)
    rad[5, 40] = 50.0
    d, _ = EnvMap(rad).key_light
    np.testing.assert_allclose(d, pixel_directions(h, 2 * h)[5, 40], atol=0.05)


def test_mean_of_constant_map():
    m = EnvMap(np.full((16, 32, 3), 0.25, np.float32))
    np.testing.assert_allclose(m.mean, 0.25, rtol=1e-12)


def test_procedural_is_seeded():
    a, b = procedural_envmap(5, 16), procedural_envmap(5, 16)
    assert np.array_equal(a.radiance, b.radiance)
    assert not np.array_equal(a.radiance, procedural_envmap(6, 16).radiance)


def test_file_loading(tmp_path, env_map):
    npy = tmp_path / "sky.npy"
    np.save(npy, env_map.radiance)
    assert np.array_equal(load_envmap_file(str(npy)).radiance, env_map.radiance)
    hdr = tmp_path / "sky.hdr"
    cv2.imwrite(str(hdr), np.ascontiguousarray(env_map.radiance[..., ::-1]))
    loaded = load_envmap_file(str(hdr)).radiance
    np.testing.assert_allclose(loaded, env_map.radiance, rtol=0.02, atol=1e-3)
    assert load_envmap(str(npy)).height == env_map.height
    e = environment(str(npy), 0.0, 1.0)
    assert e.scale == 2.0


def test_load_errors(tmp_path):
    with pytest.raises(LoadError):
        load_envmap_file(str(tmp_path / "missing.hdr"))
    junk = tmp_path / "junk.hdr"
    junk.write_bytes(b"not an image")
    with pytest.raises(LoadError):
        load_envmap_file(str(junk))
    wrong = tmp_path / "wrong.npy"
    np.save(wrong, np.ones((4, 4, 3)))
    with pytest.raises(LoadError):
        load_envmap_file(str(wrong))
    with pytest.raises(LoadError):
        load_envmap("procedural:x")
