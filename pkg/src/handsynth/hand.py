"""Procedural rigged right hand: skeleton, forward kinematics, skinned mesh and skin albedo.

Rest frame: wrist at the origin, fingers along +Y, palm facing +Z, thumb on the +X side.
Keypoint order is wrist, then thumb/index/middle/ring/pinky with four joints each.
"""

from __future__ import annotations

import functools
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import _quat as quat
from .errors import InvalidArgument, OutOfGamut, SchemaError

NUM_JOINTS = 21
FINGERS = ("thumb", "index", "middle", "ring", "pinky")
HAND_CONFIG_VERSION = 1

_ROLES = {
    "thumb": ("thumb_cmc", "thumb_mcp", "thumb_ip", "tip"),
    "index": ("mcp", "pip", "dip", "tip"),
}


def load_hand_config(path=None) -> dict:
    """Load skeleton/tone/limit presets. ``path=None`` loads the packaged defaults."""
    if path is None:
        text = resources.files("handsynth.data").joinpath("hand.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    cfg = json.loads(text)
    if cfg.get("schema_version") != HAND_CONFIG_VERSION:
        raise SchemaError(f"hand config schema_version {cfg.get('schema_version')!r} "
                          f"!= {HAND_CONFIG_VERSION}")
    return cfg


@functools.lru_cache(maxsize=None)
def default_hand_config() -> dict:
    return load_hand_config()


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: int  # -1 for the root
    offset: tuple  # rest offset from parent, meters
    radius: float  # radius of the bone segment ending at this joint
    role: str  # selects the anatomical limit set
    frame: tuple  # anatomical frame quaternion (w, x, y, z) of the chain


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HandSkeleton:
    joints: tuple
    handedness: str = "Right"
    gender: str = "Male"
    scale_params: dict = field(default_factory=dict)
    arm_length: float = 0.0
    palm_center: tuple = (0.0, 0.0, 0.0)
    palm_semi_axes: tuple = (0.0, 0.0, 0.0)
    forearm_radius: float = 0.0
    forearm_direction: tuple = (0.0, -1.0, 0.0)
    wrist_radius: float = 0.02
    limits: np.ndarray = None  # (21, 3, 2) radians: flex/abduct/twist lower/upper

    def __post_init__(self):
        if len(self.joints) != NUM_JOINTS:
            raise InvalidArgument(f"expected {NUM_JOINTS} joints, got {len(self.joints)}")
        roots = [i for i, j in enumerate(self.joints) if j.parent < 0]
        if roots != [0]:
            raise InvalidArgument("joint 0 must be the unique root")
        for i, j in enumerate(self.joints[1:], start=1):
            if not 0 <= j.parent < i:
                raise InvalidArgument(f"joint {i} breaks topological order")
            if np.linalg.norm(j.offset) == 0.0:
                raise InvalidArgument(f"joint {i} has a zero rest offset")
        if self.arm_length < 0:
            raise InvalidArgument("arm_length must be >= 0")

    @functools.cached_property
    def parents(self):
        return np.array([j.parent for j in self.joints])

    @functools.cached_property
    def depth_levels(self):
        """Non-root joint indices grouped by depth below the wrist."""
        depth = np.zeros(NUM_JOINTS, dtype=int)
        for i in range(1, NUM_JOINTS):
            depth[i] = depth[self.parents[i]] + 1
        return tuple(np.flatnonzero(depth == d) for d in range(1, depth.max() + 1))

    @functools.cached_property
    def offsets(self):
        return _frozen([j.offset for j in self.joints])

    @functools.cached_property
    def radii(self):
        return _frozen([j.radius for j in self.joints])

    @functools.cached_property
    def frames(self):
        return _frozen([j.frame for j in self.joints])

    @property
    def names(self):
        return [j.name for j in self.joints]

    @functools.cached_property
    def rest_positions(self):
        pos = np.zeros((NUM_JOINTS, 3))
        for i in range(1, NUM_JOINTS):
            pos[i] = pos[self.parents[i]] + self.offsets[i]
        return _frozen(pos)

    @property
    def has_forearm(self):
        return self.arm_length > 0

    @property
    def forearm_offset(self):
        """Wrist-to-elbow vector; zero when no forearm is attached."""
        d = np.asarray(self.forearm_direction, dtype=float)
        return self.arm_length * d / np.linalg.norm(d)

    def bone_lengths(self):
        return np.linalg.norm(self.offsets[1:], axis=1)

    def index(self, name):
        return self.names.index(name)

    def keypoint_radius(self):
        """Mesh thickness around each keypoint (largest radius of the segments meeting there)."""
        r = self.radii.copy()
        r[0] = self.wrist_radius
        for i in range(1, NUM_JOINTS):
            p = self.parents[i]
            if p > 0:
                r[p] = max(r[p], self.radii[i])
        return r

    def scaled(self, factor):
        """Uniformly scaled copy (bone lengths, radii, palm and forearm)."""
        joints = tuple(
            JointSpec(j.name, j.parent, tuple(factor * np.asarray(j.offset)), factor * j.radius,
                      j.role, j.frame)
            for j in self.joints
        )
        return HandSkeleton(
            joints, self.handedness, self.gender, dict(self.scale_params),
            factor * self.arm_length, tuple(factor * np.asarray(self.palm_center)),
            tuple(factor * np.asarray(self.palm_semi_axes)), factor * self.forearm_radius,
            self.forearm_direction, factor * self.wrist_radius, self.limits,
        )

    def mirrored(self):
        """Mirror across the YZ plane (x -> -x); a right hand becomes a left hand."""
        flip = np.array([-1.0, 1.0, 1.0])
        joints = tuple(
            JointSpec(j.name, j.parent, tuple(flip * np.asarray(j.offset)), j.radius, j.role,
                      tuple(mirror_quaternion(j.frame)))
            for j in self.joints
        )
        other = {"Right": "Left", "Left": "Right"}[self.handedness]
        return HandSkeleton(
            joints, other, self.gender, dict(self.scale_params), self.arm_length,
            tuple(flip * np.asarray(self.palm_center)), self.palm_semi_axes,
            self.forearm_radius, tuple(flip * np.asarray(self.forearm_direction)),
            self.wrist_radius, self.limits,
        )


def mirror_quaternion(q):
    """Conjugate a rotation by the x -> -x reflection."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, 1.0, -1.0, -1.0])


def _chain_frame(frame_deg):
    qz = quat.from_axis_angle([0.0, 0.0, 1.0], np.radians(frame_deg.get("z", 0.0)))
    qy = quat.from_axis_angle([0.0, 1.0, 0.0], np.radians(frame_deg.get("y", 0.0)))
    return quat.multiply(qz, qy)


def _limits_array(cfg, roles):
    table = cfg["limits_deg"]
    out = np.zeros((NUM_JOINTS, 3, 2))
    for i, role in enumerate(roles):
        lim = table[role]
        out[i] = np.radians([lim["flex"], lim["abduct"], lim["twist"]])
    out.setflags(write=False)
    return out


@functools.lru_cache(maxsize=64)
def _build_skeleton_cached(gender, arm_length, handedness):
    return _build_skeleton(default_hand_config(), gender, arm_length, handedness)


def build_skeleton(gender="Male", arm_length=0.0, handedness="Right", config=None) -> HandSkeleton:
    """Build the 21-joint skeleton for a gender preset.

    :param gender: ``"Male"`` or ``"Female"``; selects the scale preset
    :param arm_length: forearm length in meters, 0 for no forearm
    :param handedness: ``"Right"`` (native) or ``"Left"`` (mirrored)
    :param config: hand config dict; packaged defaults when omitted
    """
    if arm_length < 0:
        raise InvalidArgument(f"arm_length must be >= 0, got {arm_length}")
    if handedness not in ("Right", "Left"):
        raise InvalidArgument(f"unknown handedness {handedness!r}")
    if config is None:
        return _build_skeleton_cached(gender, float(arm_length), handedness)
    return _build_skeleton(config, gender, float(arm_length), handedness)


def _build_skeleton(cfg, gender, arm_length, handedness):
    if gender not in cfg["genders"]:
        raise InvalidArgument(f"unknown gender {gender!r}")
    sp = dict(cfg["genders"][gender])
    overall, finger_len, width = sp["overall"], sp["finger_length"], sp["width"]

    joints = [JointSpec("wrist", -1, (0.0, 0.0, 0.0), width * overall * cfg["wrist"]["radius"],
                        "wrist", tuple(quat.identity()))]
    roles = ["wrist"]
    for f in cfg["fingers"]:
        frame = _chain_frame(f["frame_deg"])
        finger_roles = _ROLES.get(f["name"], _ROLES["index"])
        base = overall * np.asarray(f["base"], dtype=float)
        parent = 0
        for k, jname in enumerate(f["joints"]):
            if k == 0:
                offset = base
            else:
                along = np.array([0.0, f["lengths"][k - 1], 0.0])
                offset = overall * finger_len * quat.rotate(frame, along)
            joints.append(JointSpec(f"{f['name']}_{jname}", parent, tuple(offset),
                                    overall * width * f["radii"][k], finger_roles[k], tuple(frame)))
            roles.append(finger_roles[k])
            parent = len(joints) - 1

    palm = cfg["palm"]
    c = overall * np.asarray(palm["center"], dtype=float)
    ax = overall * np.asarray(palm["semi_axes"], dtype=float) * np.array([width, 1.0, width])
    skel = HandSkeleton(
        tuple(joints), "Right", gender, sp, arm_length, tuple(c), tuple(ax),
        overall * width * cfg["forearm"]["radius"], tuple(cfg["forearm"]["direction"]),
        width * overall * cfg["wrist"]["radius"], _limits_array(cfg, roles),
    )
    return skel.mirrored() if handedness == "Left" else skel


# ---------------------------------------------------------------------------
# Pose and kinematics


@dataclass(frozen=True, eq=False)
class Pose:
    """Per-joint local rotations plus the global wrist transform."""

    rotations: np.ndarray  # (21, 4) unit quaternions
    root_rotation: np.ndarray = None  # (4,)
    root_translation: np.ndarray = None  # (3,) meters

    def __post_init__(self):
        rot = np.array(self.rotations, dtype=float)
        if rot.shape != (NUM_JOINTS, 4):
            raise InvalidArgument(f"rotations must be ({NUM_JOINTS}, 4), got {rot.shape}")
        root = quat.identity() if self.root_rotation is None else np.array(self.root_rotation, float)
        trans = np.zeros(3) if self.root_translation is None else np.array(self.root_translation, float)
        norms = np.linalg.norm(np.vstack([rot, root[None]]), axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InvalidArgument("pose quaternions must have unit norm (tolerance 1e-9)")
        for a in (rot, root, trans):
            a.setflags(write=False)
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(self, "root_rotation", root)
        object.__setattr__(self, "root_translation", trans)

    @classmethod
    def identity(cls):
        return cls(quat.identity(NUM_JOINTS))

    def with_root(self, rotation=None, translation=None):
        return Pose(self.rotations,
                    self.root_rotation if rotation is None else rotation,
                    self.root_translation if translation is None else translation)

    def mirrored(self):
        return Pose(mirror_quaternion(self.rotations), mirror_quaternion(self.root_rotation),
                    self.root_translation * np.array([-1.0, 1.0, 1.0]))

    def equals(self, other):
        return (np.array_equal(self.rotations, other.rotations)
                and np.array_equal(self.root_rotation, other.root_rotation)
                and np.array_equal(self.root_translation, other.root_translation))


def pose_from_angles(skeleton: HandSkeleton, angles: dict, root_rotation=None,
                     root_translation=None) -> Pose:
    """Build a pose from anatomical angles in degrees.

    ``angles`` maps joint names to ``[flex, abduct, twist]``; omitted joints keep the rest rotation.
    Angles are measured in each chain's anatomical frame, so flexion always curls toward the palm.
    """
    rot = quat.identity(NUM_JOINTS)
    names = skeleton.names
    for name, value in angles.items():
        if name not in names:
            raise InvalidArgument(f"unknown joint {name!r}")
        i = names.index(name)
        vals = list(value) + [0.0] * (3 - len(value))
        flex, abd, tw = np.radians(vals[:3])
        local = quat.from_euler_xzy(flex, abd, tw)
        f = skeleton.frames[i]
        rot[i] = quat.normalize(quat.multiply(quat.multiply(f, local), quat.conjugate(f)))
    return Pose(rot, root_rotation, root_translation)


def anatomical_angles(skeleton: HandSkeleton, pose: Pose):
    """Per-joint (flex, abduct, twist) radians in each chain's anatomical frame, shape (21, 3)."""
    f = skeleton.frames
    local = quat.multiply(quat.multiply(quat.conjugate(f), pose.rotations), f)
    return quat.to_euler_xzy(local)


def limit_violation(skeleton: HandSkeleton, pose: Pose):
    """Largest excursion (radians) of any joint angle outside its limits; 0 when inside."""
    ang = anatomical_angles(skeleton, pose)
    lo, hi = skeleton.limits[..., 0], skeleton.limits[..., 1]
    return float(max(0.0, np.max(lo - ang), np.max(ang - hi)))


def within_limits(skeleton, pose, tol_deg=1e-6):
    return limit_violation(skeleton, pose) <= np.radians(tol_deg)


def check_limits(skeleton, pose, tol_deg=1e-6):
    v = limit_violation(skeleton, pose)
    if v > np.radians(tol_deg):
        raise InvalidArgument(f"pose exceeds anatomical limits by {np.degrees(v):.4f} deg")


def global_transforms(skeleton: HandSkeleton, pose: Pose):
    """World rotations (21, 4) and positions (21, 3) of every joint."""
    rots = np.empty((NUM_JOINTS, 4))
    pos = np.empty((NUM_JOINTS, 3))
    rots[0] = quat.multiply(pose.root_rotation, pose.rotations[0])
    pos[0] = pose.root_translation + quat.rotate(pose.root_rotation, skeleton.offsets[0])
    # joints of one depth only depend on the previous depth, so each level is one vector op
    for idx in skeleton.depth_levels:
        par = skeleton.parents[idx]
        rots[idx] = quat.multiply(rots[par], pose.rotations[idx])
        pos[idx] = pos[par] + quat.rotate(rots[par], skeleton.offsets[idx])
    return rots, pos


def forward_kinematics(skeleton: HandSkeleton, pose: Pose) -> np.ndarray:
    """World positions (21, 3) of the keypoint markers, in meters."""
    return global_transforms(skeleton, pose)[1]


def elbow_position(skeleton: HandSkeleton, pose: Pose):
    rots, pos = global_transforms(skeleton, pose)
    return pos[0] + quat.rotate(rots[0], skeleton.forearm_offset)


def skinning_transforms(skeleton: HandSkeleton, pose: Pose) -> np.ndarray:
    """Per-joint 4x4 matrices mapping rest-space points to posed world space."""
    rots, pos = global_transforms(skeleton, pose)
    m = np.zeros((NUM_JOINTS, 4, 4))
    r = quat.to_matrix(rots)
    m[:, :3, :3] = r
    m[:, :3, 3] = pos - np.einsum("nij,nj->ni", r, skeleton.rest_positions)
    m[:, 3, 3] = 1.0
    return m


# ---------------------------------------------------------------------------
# Mesh


@dataclass(frozen=True)
class MeshPart:
    name: str
    start: tuple  # rest-space segment the part wraps
    end: tuple
    max_distance: float
    vertices: slice
    triangles: slice


@dataclass(frozen=True, eq=False)
class SkinnedMesh:
    vertices: np.ndarray  # (n, 3) rest space, meters
    triangles: np.ndarray  # (m, 3) int32
    bone_indices: np.ndarray  # (n, 4) int32
    bone_weights: np.ndarray  # (n, 4)
    parts: tuple = ()

    @property
    def n_vertices(self):
        return len(self.vertices)


def _orthonormal_basis(d):
    a = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    u = np.cross(d, a)
    u /= np.linalg.norm(u)
    return u, np.cross(d, u)


def _ring_mesh(profile, around, center, axis, u, v, scale=(1.0, 1.0)):
    """Surface of revolution. ``profile`` is [(axial, radius), ...] from pole to pole."""
    verts = [center + profile[0][0] * axis]
    theta = 2 * np.pi * np.arange(around) / around
    ring_dirs = np.cos(theta)[:, None] * u * scale[0] + np.sin(theta)[:, None] * v * scale[1]
    for axial, radius in profile[1:-1]:
        verts.extend(center + axial * axis + radius * ring_dirs)
    verts.append(center + profile[-1][0] * axis)
    verts = np.array(verts)
    n_rings = len(profile) - 2
    last = len(verts) - 1
    tris = []
    for k in range(around):
        k1 = (k + 1) % around
        tris.append((0, 1 + k1, 1 + k))
    for r in range(n_rings - 1):
        a0, b0 = 1 + r * around, 1 + (r + 1) * around
        for k in range(around):
            k1 = (k + 1) % around
            tris.append((a0 + k, a0 + k1, b0 + k1))
            tris.append((a0 + k, b0 + k1, b0 + k))
    base = 1 + (n_rings - 1) * around
    for k in range(around):
        k1 = (k + 1) % around
        tris.append((last, base + k, base + k1))
    return verts, np.array(tris, dtype=np.int32)


def _capsule(a, b, radius, around, cap_rings, body_rings):
    axis = b - a
    length = np.linalg.norm(axis)
    d = axis / length
    u, v = _orthonormal_basis(d)
    angles = np.arange(1, cap_rings + 1) * (np.pi / 2) / cap_rings
    profile = [(-radius, 0.0)]
    profile += [(-radius * np.cos(t), radius * np.sin(t)) for t in angles]
    profile += [(length * i / body_rings, radius) for i in range(1, body_rings + 1)]
    profile += [(length + radius * np.sin(t), radius * np.cos(t)) for t in angles[:-1]]
    profile += [(length + radius, 0.0)]
    verts, tris = _ring_mesh(profile, around, a, d, u, v)
    axial = (verts - a) @ d / length
    return verts, tris, axial


def _ellipsoid(center, semi_axes, lat, lon):
    angles = np.arange(1, lat) * np.pi / lat
    profile = [(-semi_axes[1], 0.0)]
    profile += [(-semi_axes[1] * np.cos(t), np.sin(t)) for t in angles]
    profile += [(semi_axes[1], 0.0)]
    ex, ez = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    # (ez, ex, +y) is right-handed, which keeps the winding outward
    return _ring_mesh(profile, lon, np.asarray(center, float), np.array([0.0, 1.0, 0.0]),
                      ez, ex, scale=(semi_axes[2], semi_axes[0]))


def _point_segment_distance(p, a, b):
    ab = b - a
    denom = ab @ ab
    t = np.clip(((p - a) @ ab) / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(p))
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)


def build_mesh(skeleton: HandSkeleton, config=None) -> SkinnedMesh:
    """Tessellated capsule per bone segment plus a palm ellipsoid (and forearm when present).

    A segment from joint ``p`` to its child moves with joint ``p``. Vertices within the blend
    zone of either end share weight with the neighbouring bone.
    """
    mc = (config or default_hand_config())["mesh"]
    around, cap_rings, body_rings = mc["around"], mc["cap_rings"], mc["body_rings"]
    blend = mc["blend"]
    rest = skeleton.rest_positions
    parents = skeleton.parents

    verts, tris, idx, wts, parts = [], [], [], [], []
    nv = nt = 0

    def add(name, v, t, bi, bw, a, b, maxd):
        nonlocal nv, nt
        verts.append(v)
        tris.append(t + nv)
        idx.append(bi)
        wts.append(bw)
        parts.append(MeshPart(name, tuple(a), tuple(b), float(maxd), slice(nv, nv + len(v)),
                              slice(nt, nt + len(t))))
        nv += len(v)
        nt += len(t)

    for j in range(1, len(rest)):
        p = parents[j]
        a, b, r = rest[p], rest[j], skeleton.radii[j]
        v, t, s = _capsule(a, b, r, around, cap_rings, body_rings)
        bi = np.zeros((len(v), 4), dtype=np.int32)
        bw = np.zeros((len(v), 4))
        bi[:, 0] = p
        w_prox = np.where(s < blend, 0.5 * (1.0 - np.clip(s, 0.0, None) / blend), 0.0) if p > 0 \
            else np.zeros(len(v))
        w_dist = np.where(s > 1.0 - blend, 0.5 * (1.0 - np.clip(1.0 - s, 0.0, None) / blend), 0.0)
        bi[:, 1] = parents[p] if p > 0 else p
        bi[:, 2] = j
        bw[:, 1] = w_prox
        bw[:, 2] = w_dist
        bw[:, 0] = 1.0 - w_prox - w_dist
        add(skeleton.joints[j].name, v, t, bi, bw, a, b, r)

    mid = skeleton.index("middle_mcp")
    c = np.asarray(skeleton.palm_center)
    v, t = _ellipsoid(c, skeleton.palm_semi_axes, mc["palm_lat"], mc["palm_lon"])
    bi = np.zeros((len(v), 4), dtype=np.int32)
    bw = np.zeros((len(v), 4))
    bw[:, 0] = 1.0
    seg_d = _point_segment_distance(c[None], rest[0], rest[mid])[0]
    add("palm", v, t, bi, bw, rest[0], rest[mid], max(skeleton.palm_semi_axes) + seg_d)

    if skeleton.has_forearm:
        elbow = rest[0] + skeleton.forearm_offset
        v, t, _ = _capsule(rest[0], elbow, skeleton.forearm_radius, around, cap_rings, body_rings)
        bi = np.zeros((len(v), 4), dtype=np.int32)
        bw = np.zeros((len(v), 4))
        bw[:, 0] = 1.0
        add("forearm", v, t, bi, bw, rest[0], elbow, skeleton.forearm_radius)

    out_v = _frozen(np.vstack(verts))
    out_t = np.vstack(tris).astype(np.int32)
    out_i = np.vstack(idx).astype(np.int32)
    out_w = _frozen(np.vstack(wts))
    for a in (out_t, out_i):
        a.setflags(write=False)
    return SkinnedMesh(out_v, out_t, out_i, out_w, tuple(parts))


@functools.lru_cache(maxsize=64)
def cached_mesh(gender, arm_length, handedness="Right"):
    return build_mesh(build_skeleton(gender, arm_length, handedness))


def skin_mesh(mesh: SkinnedMesh, joint_transforms) -> np.ndarray:
    """Linear blend skinning: each vertex becomes the weighted sum of its bones' transforms."""
    t = np.asarray(joint_transforms, dtype=float)
    if t.ndim != 3 or t.shape[0] != NUM_JOINTS or t.shape[1:] not in ((4, 4), (3, 4)):
        raise InvalidArgument(f"expected {NUM_JOINTS} rigid transforms, got shape {t.shape}")
    rot = t[:, :3, :3]
    trans = t[:, :3, 3]
    v = mesh.vertices
    out = np.zeros_like(v)
    for k in range(mesh.bone_indices.shape[1]):
        w = mesh.bone_weights[:, k]
        if not w.any():
            continue
        b = mesh.bone_indices[:, k]
        out += w[:, None] * (np.einsum("nij,nj->ni", rot[b], v) + trans[b])
    return out


# ---------------------------------------------------------------------------
# Skin tone

# D65 reference white and the XYZ -> linear sRGB matrix
_WHITE = np.array([0.95047, 1.0, 1.08883])
_XYZ_TO_RGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])


@dataclass(frozen=True)
class SkinTone:
    ita_degrees: float
    lab: tuple
    albedo: tuple  # linear RGB


def ita(lightness, b_star):
    """Individual Typology Angle in degrees."""
    return float(np.degrees(np.arctan((lightness - 50.0) / b_star)))


def lab_to_linear_rgb(lab):
    lightness, a, b = lab
    fy = (lightness + 16.0) / 116.0
    f = np.array([fy + a / 500.0, fy, fy - b / 200.0])
    delta = 6.0 / 29.0
    xyz = np.where(f > delta, f ** 3, 3 * delta ** 2 * (f - 4.0 / 29.0)) * _WHITE
    return _XYZ_TO_RGB @ xyz


def tone_table(config=None):
    return list((config or default_hand_config())["skin"]["tones"])


def skin_albedo(ita_target, config=None) -> SkinTone:
    """Skin colour hitting ``ita_target`` degrees within one degree.

    Table entries are used when one matches; other targets take b* interpolated from the
    table and solve for L*.
    """
    if not -90.0 < ita_target < 90.0:
        raise InvalidArgument(f"ITA must lie strictly inside (-90, 90), got {ita_target}")
    skin = (config or default_hand_config())["skin"]
    a_star = skin["a_star"]
    b_lo, b_hi = skin["b_range"]
    table = sorted(skin["tones"], key=lambda e: e["ita"])
    match = [e for e in table if abs(ita(e["L"], e["b"]) - ita_target) <= 1.0]
    if match:
        best = min(match, key=lambda e: abs(ita(e["L"], e["b"]) - ita_target))
        lightness, b_star = best["L"], best["b"]
    else:
        b_star = float(np.interp(ita_target, [e["ita"] for e in table], [e["b"] for e in table]))
        slope = np.tan(np.radians(ita_target))
        lightness = 50.0 + b_star * slope
        if not 0.0 <= lightness <= 100.0:
            b_star = 50.0 / abs(slope)
            lightness = 0.0 if slope < 0 else 100.0
        if not b_lo <= b_star <= b_hi:
            raise OutOfGamut(f"ITA {ita_target} is unreachable with b* in [{b_lo}, {b_hi}]")
    rgb = lab_to_linear_rgb((lightness, a_star, b_star))
    if np.any(rgb < 0.0) or np.any(rgb > 1.0):
        raise OutOfGamut(f"Lab ({lightness:.2f}, {a_star}, {b_star:.2f}) is outside linear sRGB")
    return SkinTone(ita(lightness, b_star), (float(lightness), float(a_star), float(b_star)),
                    tuple(float(c) for c in rgb))


def tone_albedos(config=None):
    """The configured tones, darkest first, as :class:`SkinTone` objects."""
    entries = sorted(tone_table(config), key=lambda e: e["ita"])
    return [skin_albedo(e["ita"], config) for e in entries]
