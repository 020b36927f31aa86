"""Equirectangular environment maps: loading, procedural skies, rotated/exposed lookup.

World up is +Z. Column 0 of a map starts at azimuth -pi, row 0 is the zenith.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, LoadError

PROCEDURAL_PREFIX = "procedural:"


@dataclass(frozen=True, eq=False)
class EnvMap:
    radiance: np.ndarray  # (H, W, 3) float32, linear RGB

    def __post_init__(self):
        r = self.radiance
        if r.ndim != 3 or r.shape[2] != 3:
            raise InvalidArgument(f"environment map must be (H, W, 3), got {r.shape}")
        if r.shape[1] != 2 * r.shape[0]:
            raise InvalidArgument(f"environment map width must be 2 x height, got {r.shape[:2]}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise InvalidArgument("environment radiance must be finite and non-negative")
        r.setflags(write=False)

    @property
    def height(self):
        return self.radiance.shape[0]

    @property
    def width(self):
        return self.radiance.shape[1]

    @functools.cached_property
    def solid_angle_weights(self):
        h = self.height
        theta = (np.arange(h) + 0.5) * np.pi / h
        w = np.sin(theta)
        return w / (w.sum() * self.width)

    @functools.cached_property
    def mean(self):
        """Solid-angle weighted mean radiance."""
        return np.einsum("h,hwc->c", self.solid_angle_weights, self.radiance.astype(float))

    @functools.cached_property
    def key_light(self):
        """(direction, radiance) of the brightest 1% of the sphere, solid-angle weighted."""
        lum = self.radiance.astype(float) @ np.array([0.2126, 0.7152, 0.0722])
        weight = np.broadcast_to(self.solid_angle_weights[:, None], lum.shape)
        order = np.argsort(lum, axis=None, kind="stable")[::-1]
        cum = np.cumsum(weight.ravel()[order])
        top = order[: int(np.searchsorted(cum, 0.01)) + 1]
        rows, cols = np.unravel_index(top, lum.shape)
        w = weight[rows, cols] * lum[rows, cols]
        dirs = pixel_directions(self.height, self.width)[rows, cols]
        d = (w[:, None] * dirs).sum(0)
        n = np.linalg.norm(d)
        d = d / n if n > 0 else np.array([0.0, 0.0, 1.0])
        color = (weight[rows, cols][:, None] * self.radiance[rows, cols]).sum(0) \
            / weight[rows, cols].sum()
        return d, color


def pixel_directions(height, width):
    theta = (np.arange(height) + 0.5) * np.pi / height
    phi = (np.arange(width) + 0.5) * 2 * np.pi / width - np.pi
    st = np.sin(theta)[:, None]
    return np.stack([st * np.cos(phi)[None], st * np.sin(phi)[None],
                     np.broadcast_to(np.cos(theta)[:, None], (height, width))], axis=-1)


def sample_bilinear(radiance, dirs):
    """Bilinear lookup of unit directions (..., 3); wraps in azimuth, clamps at the poles."""
    h, w = radiance.shape[:2]
    d = np.asarray(dirs, dtype=float)
    phi = np.arctan2(d[..., 1], d[..., 0])
    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
    x = (phi + np.pi) * (w / (2 * np.pi)) - 0.5
    y = np.clip(theta * (h / np.pi) - 0.5, 0.0, h - 1.0)
    x0 = np.floor(x)
    y0 = np.minimum(np.floor(y), h - 2)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64) % w
    x1 = (x0 + 1) % w
    y0 = y0.astype(np.int64)
    y1 = y0 + 1
    top = radiance[y0, x0] * (1 - fx) + radiance[y0, x1] * fx
    bot = radiance[y1, x0] * (1 - fx) + radiance[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class Environment:
    """Read-only shading environment: an env map rotated about +Z and scaled by 2**exposure_ev."""

    def __init__(self, envmap: EnvMap, rotation_z=0.0, exposure_ev=0.0):
        self.envmap = envmap
        self.rotation_z = float(rotation_z)
        self.exposure_ev = float(exposure_ev)
        self.scale = 2.0 ** self.exposure_ev
        self._to_map = _rot_z(-self.rotation_z)

    def lookup(self, dirs):
        """World directions (..., 3) -> linear RGB radiance."""
        d = np.asarray(dirs, dtype=float)
        if self.rotation_z != 0.0:
            d = d @ self._to_map.T
        out = sample_bilinear(self.envmap.radiance, d)
        return out * self.scale if self.scale != 1.0 else out

    @property
    def ambient(self):
        return self.envmap.mean * self.scale

    @property
    def key_light(self):
        d, color = self.envmap.key_light
        return _rot_z(self.rotation_z) @ d, color * self.scale


def procedural_envmap(index, height=128) -> EnvMap:
    """Seeded sky/ground environment with a sun and a few soft area lights."""
    rng = np.random.default_rng([0x5EED, int(index)])
    dirs = pixel_directions(height, 2 * height)
    z = dirs[..., 2]
    horizon = rng.uniform(0.35, 1.0, 3)
    zenith = rng.uniform(0.1, 0.6, 3) * np.array([0.7, 0.85, 1.0])
    ground = rng.uniform(0.05, 0.45, 3)
    up = np.clip(z, 0.0, 1.0)[..., None]
    sky = horizon * (1 - np.sqrt(up)) + zenith * np.sqrt(up)
    down = np.clip(-z, 0.0, 1.0)[..., None]
    earth = ground * (0.6 + 0.4 * (1 - down))
    rad = np.where(z[..., None] >= 0, sky, earth)

    # large-scale structure so backgrounds differ beyond colour
    phi = np.arctan2(dirs[..., 1], dirs[..., 0])
    theta = np.arccos(np.clip(z, -1, 1))
    mod = np.ones_like(z)
    for _ in range(4):
        kp, kt = rng.integers(1, 7), rng.integers(1, 5)
        mod += rng.uniform(0.05, 0.2) * np.sin(kp * phi + rng.uniform(0, 2 * np.pi)) \
            * np.sin(kt * theta + rng.uniform(0, 2 * np.pi))
    tint = rng.uniform(0.7, 1.3, (6, 3))
    band = ((phi + np.pi) / (2 * np.pi) * 6).astype(int) % 6
    rad = rad * np.clip(mod, 0.2, None)[..., None]
    rad = np.where((z[..., None] < 0.15) & (z[..., None] > -0.3), rad * tint[band], rad)

    def lobe(direction, size_deg, power):
        cosang = dirs @ direction
        return power * np.exp((cosang - 1.0) / (1.0 - np.cos(np.radians(size_deg))))

    def random_dir(min_el, max_el):
        az = rng.uniform(-np.pi, np.pi)
        el = np.radians(rng.uniform(min_el, max_el))
        return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])

    sun_color = np.array([1.0, 0.95, 0.85]) * rng.uniform(0.8, 1.2, 3)
    rad = rad + lobe(random_dir(10, 75), rng.uniform(2.0, 5.0), rng.uniform(8.0, 30.0))[..., None] \
        * sun_color
    for _ in range(rng.integers(1, 4)):
        rad = rad + lobe(random_dir(-10, 60), rng.uniform(10, 25), rng.uniform(0.5, 2.5))[..., None] \
            * rng.uniform(0.6, 1.0, 3)
    return EnvMap(np.ascontiguousarray(rad, dtype=np.float32))


def load_envmap_file(path) -> EnvMap:
    """Read an equirectangular radiance image (.hdr, .exr, .pfm via OpenCV, or .npy)."""
    if not os.path.exists(path):
        raise LoadError(f"environment file not found: {path}")
    if path.endswith(".npy"):
        try:
            data = np.load(path)
        except Exception as exc:
            raise LoadError(f"cannot read {path}: {exc}") from exc
    else:
        import cv2
        os.environ.setdefault("OPENCV_IO_ENABLE_OPENEXR", "1")
        data = cv2.imread(path, cv2.IMREAD_ANYDEPTH | cv2.IMREAD_COLOR)
        if data is None:
            raise LoadError(f"cannot decode environment image {path}")
        data = data[..., ::-1]
    data = np.ascontiguousarray(data, dtype=np.float32)
    try:
        return EnvMap(data)
    except InvalidArgument as exc:
        raise LoadError(f"{path}: {exc}") from exc


@functools.lru_cache(maxsize=128)
def load_envmap(environment_id) -> EnvMap:
    if environment_id.startswith(PROCEDURAL_PREFIX):
        try:
            index = int(environment_id[len(PROCEDURAL_PREFIX):])
        except ValueError:
            raise LoadError(f"bad procedural environment id {environment_id!r}") from None
        return procedural_envmap(index)
    return load_envmap_file(environment_id)


def environment(environment_id, env_rotation_z=0.0, exposure_ev=0.0) -> Environment:
    return Environment(load_envmap(environment_id), env_rotation_z, exposure_ev)
