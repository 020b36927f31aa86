"""Software rendering of a SampleSpec into a 640x640 image plus its exact annotation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import _raster
from .envmap import environment
from .errors import BehindCamera
from .hand import (build_skeleton, cached_mesh, forward_kinematics, skin_mesh,
                   skinning_transforms, tone_albedos)
from .scene import (NEAR_PLANE, RESOLUTION, GenerationConfig, SampleSpec, camera_extrinsics,
                    focal_length, project_points, to_camera)

N_KEYPOINTS = 21

# keypoint index pairs drawn as bones in overlays
BONES = tuple((p, c) for c, p in enumerate(
    (-1, 0, 1, 2, 3, 0, 5, 6, 7, 0, 9, 10, 11, 0, 13, 14, 15, 0, 17, 18, 19)) if p >= 0)


@dataclass(frozen=True, eq=False)
class Annotation:
    keypoints_2d: np.ndarray  # (21, 2) pixels; out-of-frame values kept
    visible: np.ndarray  # (21,) bool
    keypoints_3d: np.ndarray  # (21, 3) camera space, meters
    bbox: tuple  # (x, y, w, h) pixels
    meta: dict

    def to_dict(self):
        return {
            "keypoints_2d": self.keypoints_2d.tolist(),
            "visible": [bool(v) for v in self.visible],
            "keypoints_3d": self.keypoints_3d.tolist(),
            "bbox": [float(v) for v in self.bbox],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["keypoints_2d"], dtype=float), np.array(d["visible"], dtype=bool),
                   np.array(d["keypoints_3d"], dtype=float), tuple(float(v) for v in d["bbox"]),
                   dict(d["meta"]))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def equals(self, other):
        return (np.array_equal(self.keypoints_2d, other.keypoints_2d)
                and np.array_equal(self.visible, other.visible)
                and np.array_equal(self.keypoints_3d, other.keypoints_3d)
                and tuple(self.bbox) == tuple(other.bbox) and self.meta == other.meta)


def keypoint_bbox(keypoints_2d, resolution=RESOLUTION):
    """Tight (x, y, w, h) around the keypoints after clamping them to the pixel grid."""
    k = np.asarray(keypoints_2d, dtype=float)
    x = np.clip(k[:, 0], 0.0, resolution[0] - 1.0)
    y = np.clip(k[:, 1], 0.0, resolution[1] - 1.0)
    return (float(x.min()), float(y.min()), float(x.max() - x.min()), float(y.max() - y.min()))


def project(point_camera, fov, resolution=RESOLUTION):
    """Pinhole projection of one camera-space point (x right, y down, z forward)."""
    p = np.asarray(point_camera, dtype=float)
    if p[2] <= 0:
        raise BehindCamera(f"point at depth {p[2]} is not in front of the camera")
    x, y = project_points(p, fov, resolution)
    return float(x), float(y)


def visibility(keypoint_index, keypoints_3d, zbuffer, fov, radius=0.0, eps=1e-3,
               resolution=RESOLUTION):
    """Whether a keypoint is seen by the camera.

    Markers sit inside the mesh, so the marker depth is pulled forward by ``radius`` (the mesh
    thickness around it) before the depth test against the z-buffer pixel it projects to.
    Keypoints outside the frame are never visible.
    """
    p = np.asarray(keypoints_3d, dtype=float)[keypoint_index]
    if p[2] <= 0:
        return False
    x, y = project_points(p, fov, resolution)
    col, row = int(round(x)), int(round(y))
    if not (0 <= col < zbuffer.shape[1] and 0 <= row < zbuffer.shape[0]):
        return False
    return bool(p[2] - radius <= zbuffer[row, col] + eps)


@dataclass(frozen=True)
class Geometry:
    skeleton: object
    pose: object
    world_keypoints: np.ndarray
    rotation: np.ndarray  # world -> camera
    center: np.ndarray  # camera position, world
    keypoints_3d: np.ndarray
    keypoints_2d: np.ndarray


def sample_geometry(spec: SampleSpec, library=None) -> Geometry:
    """Pose, camera and projected keypoints of a spec, without rasterising anything."""
    from .poses import default_library, interpolate
    lib = library or default_library()
    pose = interpolate(lib.resolve(spec.pose_a, spec.phase_a),
                       lib.resolve(spec.pose_b, spec.phase_b), spec.blend_t)
    skeleton = build_skeleton(spec.gender, spec.arm_length, spec.handedness)
    if spec.handedness == "Left":
        pose = pose.mirrored()
    world = forward_kinematics(skeleton, pose)
    rot, center = camera_extrinsics(spec.camera, world.mean(axis=0))
    kp3 = to_camera(world, rot, center)
    kp2 = project_points(kp3, spec.camera.vertical_fov, spec.camera.resolution)
    return Geometry(skeleton, pose, world, rot, center, kp3, kp2)


def annotation_meta(spec: SampleSpec):
    """Annotation metadata. Lighting fields live only in the SampleSpec so labels stay identical
    across relighting."""
    cam = spec.camera
    return {
        "pose_a": spec.pose_a, "pose_b": spec.pose_b, "blend_t": spec.blend_t,
        "phase_a": spec.phase_a, "phase_b": spec.phase_b,
        "tone_index": spec.tone_index, "gender": spec.gender, "handedness": spec.handedness,
        "arm_length": spec.arm_length, "seed": spec.seed,
        "camera": {"radius": cam.radius, "azimuth": cam.azimuth, "elevation": cam.elevation,
                   "jitter": list(cam.jitter), "vertical_fov": cam.vertical_fov},
    }


def _srgb_lut(size=4096):
    x = np.linspace(0.0, 1.0, size)
    s = np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)
    return np.round(s * 255.0).astype(np.uint8)


_SRGB = _srgb_lut()


def encode_srgb(linear):
    """Linear RGB float -> 8-bit sRGB via a 4096-entry table (clipped to [0, 1])."""
    lin = np.ascontiguousarray(linear, dtype=float)
    if lin.ndim != 3:
        idx = (np.clip(lin, 0.0, 1.0) * (len(_SRGB) - 1) + 0.5).astype(np.int32)
        return _SRGB[idx]
    out = np.empty(lin.shape, dtype=np.uint8)
    _raster.encode_lut(lin, _SRGB, out)
    return out


def vertex_normals(vertices, triangles):
    v = vertices
    fn = np.cross(v[triangles[:, 1]] - v[triangles[:, 0]], v[triangles[:, 2]] - v[triangles[:, 0]])
    n = np.zeros_like(v)
    flat = triangles.ravel()
    for c in range(3):
        n[:, c] = np.bincount(flat, weights=np.repeat(fn[:, c], 3), minlength=len(v))
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


def shade(normals, albedo, env, wrap=0.5, key_strength=1.0):
    """Ambient from the environment mean plus a wrap-diffuse key light (SSS stand-in)."""
    light_dir, light_rad = env.key_light
    cos = normals @ light_dir
    wrapped = np.clip((cos + wrap) / (1.0 + wrap), 0.0, None)
    # key light covers ~1% of the sphere: irradiance L * 4*pi*0.01, diffuse factor 1/pi
    key = key_strength * 0.04 * light_rad
    return np.asarray(albedo) * (env.ambient[None, :] + wrapped[:, None] * key[None, :])


@dataclass
class RenderResult:
    image: np.ndarray  # (H, W, 3) uint8 sRGB
    annotation: Annotation
    zbuffer: np.ndarray  # (H, W) camera depth, inf where empty


def render_full(spec: SampleSpec, skeleton=None, mesh=None, library=None,
                config: GenerationConfig = None) -> RenderResult:
    cfg = config or GenerationConfig()
    geo = sample_geometry(spec, library)
    skeleton = skeleton or geo.skeleton
    mesh = mesh or cached_mesh(spec.gender, spec.arm_length, spec.handedness)
    width, height = spec.camera.resolution
    fov = spec.camera.vertical_fov
    env = environment(spec.environment_id, spec.env_rotation_z, spec.camera.exposure_ev)

    posed = skin_mesh(mesh, skinning_transforms(skeleton, geo.pose))
    normals = vertex_normals(posed, mesh.triangles)
    albedo = tone_albedos()[spec.tone_index].albedo
    colors = shade(normals, albedo, env, cfg.wrap_diffuse, cfg.key_strength)

    ss = 2 if cfg.supersample else 1
    cam = to_camera(posed, geo.rotation, geo.center)
    f = focal_length(fov, (width, height))
    xs = ss * (0.5 * width + f * cam[:, 0] / cam[:, 2]) + 0.5 * (ss - 1)
    ys = ss * (0.5 * height + f * cam[:, 1] / cam[:, 2]) + 0.5 * (ss - 1)
    zbuf = np.full((ss * height, ss * width), np.inf)
    lin = np.zeros((ss * height, ss * width, 3))
    _raster.rasterize(xs, ys, cam[:, 2].copy(), mesh.triangles, colors, NEAR_PLANE, zbuf, lin)
    # background: camera rays -> world -> unrotated map frame, only where the mesh is absent
    map_from_camera = env._to_map @ geo.rotation.T
    c = 0.5 * (ss - 1)
    _raster.fill_background(lin, zbuf, env.envmap.radiance, map_from_camera, ss * f,
                            ss * 0.5 * width + c, ss * 0.5 * height + c, env.scale)
    if ss > 1:
        lin = lin.reshape(height, ss, width, ss, 3).mean(axis=(1, 3))
        zbuf = zbuf.reshape(height, ss, width, ss).min(axis=(1, 3))
    image = encode_srgb(lin)

    radius = skeleton.keypoint_radius()
    visible = np.array([visibility(i, geo.keypoints_3d, zbuf, fov, radius[i],
                                   cfg.visibility_eps_m, (width, height))
                        for i in range(N_KEYPOINTS)])
    ann = Annotation(geo.keypoints_2d, visible, geo.keypoints_3d,
                     keypoint_bbox(geo.keypoints_2d, (width, height)), annotation_meta(spec))
    return RenderResult(image, ann, zbuf)


def render(spec: SampleSpec, skeleton=None, mesh=None, library=None, config=None):
    """Render one sample. Returns ``(image, annotation)``."""
    r = render_full(spec, skeleton, mesh, library, config)
    return r.image, r.annotation


def camera_ray(spec_geometry: Geometry, x, y, fov, resolution=RESOLUTION):
    """World-space origin and unit direction of the ray through pixel coordinate (x, y)."""
    f = focal_length(fov, resolution)
    d = np.array([(x - 0.5 * resolution[0]) / f, (y - 0.5 * resolution[1]) / f, 1.0])
    d /= np.linalg.norm(d)
    return spec_geometry.center, spec_geometry.rotation.T @ d

