"""Per-sample scene randomisation: camera, environment, exposure, tone, gender and pose blend."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import InvalidArgument, SamplingFailure, SchemaError
from .hand import Pose, build_skeleton, forward_kinematics

RESOLUTION = (640, 640)
GENDERS = ("Male", "Female")
N_TONES = 6
N_CELLS = len(GENDERS) * N_TONES
CONFIG_VERSION = 1
NEAR_PLANE = 0.01


def cell_to_gender_tone(cell):
    return GENDERS[cell // N_TONES], cell % N_TONES


@dataclass
class GenerationConfig:
    schema_version: int = CONFIG_VERSION
    radius_m: tuple = (0.25, 1.2)
    elevation_deg: tuple = (-75.0, 75.0)
    azimuth_deg: tuple = (0.0, 360.0)
    jitter_deg: float = 8.0
    fov_deg: tuple = (35.0, 60.0)
    exposure_ev: tuple = (-2.0, 2.0)
    environments: list = field(default_factory=lambda: [f"procedural:{i}" for i in range(16)])
    arm_probability: float = 0.5
    arm_length_m: tuple = (0.08, 0.3)
    min_framing: float = 0.75
    retry_cap: int = 64
    visibility_eps_m: float = 1e-3
    wrap_diffuse: float = 0.5
    key_strength: float = 1.0
    supersample: bool = False
    augment: bool = True
    perturb_fill: int = 128
    png_compression: int = 1

    def __post_init__(self):
        if self.schema_version != CONFIG_VERSION:
            raise SchemaError(f"generation config schema_version {self.schema_version!r} "
                              f"!= {CONFIG_VERSION}")
        for name in ("radius_m", "elevation_deg", "azimuth_deg", "fov_deg", "exposure_ev",
                     "arm_length_m"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SchemaError(f"{name}: lower bound exceeds upper bound")
            setattr(self, name, (float(lo), float(hi)))
        self.environments = list(self.environments)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaError(f"unknown generation config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    def with_overrides(self, overrides):
        """Apply ``key=value`` strings; values are parsed as JSON when possible."""
        data = self.to_dict()
        for item in overrides or ():
            if "=" not in item:
                raise SchemaError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                value = raw
            if key not in data:
                raise SchemaError(f"unknown generation config key {key!r}")
            data[key] = value
        return GenerationConfig.from_dict(data)


def load_config(path=None) -> GenerationConfig:
    if path is None:
        text = resources.files("handsynth.data").joinpath("generation.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"generation config is not valid JSON: {exc}") from None
    return GenerationConfig.from_dict(data)


@dataclass(frozen=True)
class CameraConfig:
    radius: float
    azimuth: float
    elevation: float
    jitter: tuple  # small rotations about camera x, y, z (radians)
    vertical_fov: float
    exposure_ev: float
    resolution: tuple = RESOLUTION

    def __post_init__(self):
        if tuple(self.resolution) != RESOLUTION:
            raise InvalidArgument(f"resolution is fixed at {RESOLUTION}")


@dataclass(frozen=True)
class SampleSpec:
    """Complete, replayable recipe for one rendered sample."""

    pose_a: str
    pose_b: str
    blend_t: float
    tone_index: int
    gender: str
    handedness: str
    camera: CameraConfig
    environment_id: str
    env_rotation_z: float
    seed: int
    phase_a: float = 0.0
    phase_b: float = 0.0
    arm_length: float = 0.0

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["camera"]["jitter"] = list(self.camera.jitter)
        d["camera"]["resolution"] = list(self.camera.resolution)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        cam = dict(d.pop("camera"))
        cam["jitter"] = tuple(cam["jitter"])
        cam["resolution"] = tuple(cam.get("resolution", RESOLUTION))
        return cls(camera=CameraConfig(**cam), **d)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)


def _rot(axis, angle):
    c, s = math.cos(angle), math.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def camera_extrinsics(camera: CameraConfig, target):
    """World -> camera rotation and camera centre.

    The camera sits on a sphere around ``target`` and looks at it with world +Z up; the jitter
    rotations are applied in camera space afterwards. Camera axes: x right, y down, z forward.
    """
    target = np.asarray(target, dtype=float)
    ce, se = math.cos(camera.elevation), math.sin(camera.elevation)
    offset = np.array([ce * math.cos(camera.azimuth), ce * math.sin(camera.azimuth), se])
    center = target + camera.radius * offset
    forward = -offset
    right = np.cross(forward, [0.0, 0.0, 1.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    look = np.stack([right, down, forward])
    jx, jy, jz = camera.jitter
    jitter = _rot(0, jx) @ _rot(1, jy) @ _rot(2, jz)
    return jitter @ look, center


def focal_length(vertical_fov, resolution=RESOLUTION):
    return 0.5 * resolution[1] / math.tan(0.5 * vertical_fov)


def to_camera(points_world, rotation, center):
    return (np.asarray(points_world, dtype=float) - center) @ rotation.T


def project_points(points_camera, vertical_fov, resolution=RESOLUTION):
    """Pinhole projection, principal point at the image centre. No depth check."""
    p = np.asarray(points_camera, dtype=float)
    f = focal_length(vertical_fov, resolution)
    x = 0.5 * resolution[0] + f * p[..., 0] / p[..., 2]
    y = 0.5 * resolution[1] + f * p[..., 1] / p[..., 2]
    return np.stack([x, y], axis=-1)


def framing_fraction(keypoints_2d, resolution=RESOLUTION):
    """Fraction of keypoints with 0 <= x < width and 0 <= y < height."""
    k = np.asarray(keypoints_2d, dtype=float)
    inside = (k[:, 0] >= 0) & (k[:, 0] < resolution[0]) & (k[:, 1] >= 0) & (k[:, 1] < resolution[1])
    return float(inside.sum()) / len(k)


def posed_keypoints(spec: SampleSpec, library=None):
    """World-space keypoints (21, 3) and the posed skeleton for a spec."""
    from .poses import default_library, interpolate
    lib = library or default_library()
    skeleton = build_skeleton(spec.gender, spec.arm_length, "Right")
    pose = interpolate(lib.resolve(spec.pose_a, spec.phase_a), lib.resolve(spec.pose_b, spec.phase_b),
                       spec.blend_t)
    return skeleton, pose, forward_kinematics(skeleton, pose)


def camera_keypoints(spec: SampleSpec, world_points):
    rot, center = camera_extrinsics(spec.camera, world_points.mean(axis=0))
    return to_camera(world_points, rot, center)


def accept_camera(spec: SampleSpec, skeleton, pose: Pose, min_framing=0.75) -> bool:
    """Framing rule: at least ``min_framing`` of the keypoints in frame, hand in front of camera.

    Every keypoint must also clear the near plane so its projection is defined.
    """
    world = forward_kinematics(skeleton, pose)
    cam = camera_keypoints(spec, world)
    if cam.mean(axis=0)[2] <= 0 or np.any(cam[:, 2] <= NEAR_PLANE):
        return False
    kp = project_points(cam, spec.camera.vertical_fov, spec.camera.resolution)
    return framing_fraction(kp, spec.camera.resolution) >= min_framing


def _uniform(rng, bounds):
    lo, hi = bounds
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def sample_spec(rng_seed, config: GenerationConfig, cell=None, library=None) -> SampleSpec:
    """Draw a SampleSpec deterministically from ``rng_seed``.

    ``cell`` (0..11) fixes gender and tone for balanced scheduling; drawn from the seed when
    omitted. Rejected cameras keep their direction and exposure; radius, field of view and
    jitter are redrawn from derived sub-seeds until the framing rule passes.
    """
    from .poses import default_library
    if not config.environments:
        raise InvalidArgument("generation config lists no environments")
    lib = library or default_library()
    seed = int(rng_seed)
    rng = np.random.default_rng([seed, 0])
    if cell is None:
        cell = int(rng.integers(N_CELLS))
    gender, tone = cell_to_gender_tone(int(cell))
    names = lib.names()
    pose_a = names[int(rng.integers(len(names)))]
    pose_b = names[int(rng.integers(len(names)))]
    blend_t = float(rng.random())
    phase_a, phase_b = float(rng.random()), float(rng.random())
    env_id = config.environments[int(rng.integers(len(config.environments)))]
    env_rot = float(rng.uniform(0.0, 2 * math.pi))
    has_arm = rng.random() < config.arm_probability
    # centimetre steps keep the number of distinct skeleton/mesh builds small
    arm = round(_uniform(rng, config.arm_length_m), 2) if has_arm else 0.0
    azimuth = math.radians(_uniform(rng, config.azimuth_deg)) % (2 * math.pi)
    elevation = math.radians(_uniform(rng, config.elevation_deg))
    exposure = _uniform(rng, config.exposure_ev)

    base = SampleSpec(pose_a, pose_b, blend_t, tone, gender, "Right", None, env_id, env_rot, seed,
                      phase_a, phase_b, arm)
    skeleton, pose, _ = posed_keypoints(base, lib)
    jitter_max = math.radians(config.jitter_deg)
    for attempt in range(1, config.retry_cap + 1):
        crng = np.random.default_rng([seed, attempt])
        camera = CameraConfig(
            radius=_uniform(crng, config.radius_m),
            azimuth=azimuth,
            elevation=elevation,
            jitter=tuple(float(v) for v in crng.uniform(-jitter_max, jitter_max, 3)),
            vertical_fov=math.radians(_uniform(crng, config.fov_deg)),
            exposure_ev=exposure,
        )
        spec = base.replace(camera=camera)
        if accept_camera(spec, skeleton, pose, config.min_framing):
            return spec
    raise SamplingFailure(
        f"seed {seed}: no acceptable camera in {config.retry_cap} attempts "
        f"(pose {pose_a!r}->{pose_b!r}, azimuth {math.degrees(azimuth):.1f} deg, "
        f"elevation {math.degrees(elevation):.1f} deg)")
