"""Named static poses and wave motions, keyframe interpolation and animation sampling."""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import _quat as quat
from .errors import InvalidArgument, NotFound, SchemaError
from .hand import (FINGERS, Pose, build_skeleton, check_limits, forward_kinematics,
                   pose_from_angles)

POSE_FILE_VERSION = 1

# fingertip within this distance (meters) of the palm centre counts as closed
CLOSED_FIST_DISTANCE = 0.065

# time gap (seconds) inserted between the end of one clip and the start of the next
TRANSITION_SECONDS = 1.0


@dataclass(frozen=True)
class PoseKeyframe:
    name: str
    pose: Pose
    affect_label: str
    angles: tuple = ()  # ((joint, (flex, abduct, twist)), ...) degrees, as authored


@dataclass(frozen=True)
class AnimationClip:
    name: str
    keyframes: tuple  # ((time_s, Pose), ...)

    def __post_init__(self):
        times = [t for t, _ in self.keyframes]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidArgument(f"clip {self.name!r}: keyframe times must strictly increase")

    @property
    def duration(self):
        return self.keyframes[-1][0] - self.keyframes[0][0] if self.keyframes else 0.0

    def evaluate(self, time):
        """Pose at ``time`` seconds, clamped to the clip's span."""
        if not self.keyframes:
            raise InvalidArgument(f"clip {self.name!r} is empty")
        times = [t for t, _ in self.keyframes]
        if time <= times[0]:
            return self.keyframes[0][1]
        if time >= times[-1]:
            return self.keyframes[-1][1]
        k = int(np.searchsorted(times, time, side="right")) - 1
        t0, p0 = self.keyframes[k]
        t1, p1 = self.keyframes[k + 1]
        return interpolate(p0, p1, (time - t0) / (t1 - t0))


def interpolate(a: Pose, b: Pose, t: float) -> Pose:
    """Shortest-arc slerp per joint (and wrist rotation), lerp of the wrist translation."""
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"interpolation parameter must lie in [0, 1], got {t}")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    rot = quat.slerp(a.rotations, b.rotations, t)
    root = quat.slerp(a.root_rotation, b.root_rotation, t)
    trans = (1.0 - t) * a.root_translation + t * b.root_translation
    return Pose(rot, root, trans)


def _as_clip(item):
    if isinstance(item, AnimationClip):
        if not item.keyframes:
            raise InvalidArgument(f"clip {item.name!r} is empty")
        return item
    if isinstance(item, PoseKeyframe):
        return AnimationClip(item.name, ((0.0, item.pose),))
    if isinstance(item, Pose):
        return AnimationClip("pose", ((0.0, item),))
    raise InvalidArgument(f"cannot animate {type(item).__name__}")


def transition_clip(a, b, transition=TRANSITION_SECONDS):
    """One timeline: ``a``'s keyframes, then ``b``'s shifted to start ``transition`` s later."""
    ca, cb = _as_clip(a), _as_clip(b)
    frames = list(ca.keyframes)
    shift = frames[-1][0] + transition - cb.keyframes[0][0]
    frames += [(t + shift, p) for t, p in cb.keyframes]
    return AnimationClip(f"{ca.name}->{cb.name}", tuple(frames))


def sample_animation(a, b, frame_rate, duration, transition=TRANSITION_SECONDS):
    """Sample ``floor(frame_rate * duration)`` poses evenly along the a -> b trajectory.

    The trajectory plays ``a`` (pose or clip), eases into ``b`` and plays it. It is stretched
    so the first frame is the start of ``a`` and the last frame the end of ``b``.
    """
    if frame_rate <= 0 or duration <= 0:
        raise InvalidArgument("frame_rate and duration must be positive")
    clip = transition_clip(a, b, transition)
    n = int(math.floor(frame_rate * duration + 1e-9))
    if n == 0:
        return []
    t0, span = clip.keyframes[0][0], clip.duration
    if n == 1:
        return [clip.evaluate(t0)]
    return [clip.evaluate(t0 + span * k / (n - 1)) for k in range(n)]


class PoseLibrary:
    """Immutable set of named static poses and motion clips."""

    def __init__(self, static, motions, aliases=None, affects=None):
        self._static = dict(static)
        self._motions = dict(motions)
        self._aliases = dict(aliases or {})
        self._affects = dict(affects or {})
        self._order = list(self._static) + list(self._motions)

    def names(self):
        return list(self._order)

    def static_names(self):
        return list(self._static)

    def motion_names(self):
        return list(self._motions)

    def __len__(self):
        return len(self._order)

    def __contains__(self, name):
        return self._canonical(name) is not None

    def _canonical(self, name):
        name = self._aliases.get(name, name)
        if name in self._static or name in self._motions:
            return name
        return None

    def get_pose(self, name) -> PoseKeyframe:
        key = self._canonical(name)
        if key is None:
            raise NotFound(f"no pose named {name!r}")
        if key in self._static:
            return self._static[key]
        clip = self._motions[key]
        return PoseKeyframe(key, clip.keyframes[0][1], self._affects[key])

    def get_clip(self, name) -> AnimationClip:
        key = self._canonical(name)
        if key is None:
            raise NotFound(f"no pose named {name!r}")
        if key in self._motions:
            return self._motions[key]
        return _as_clip(self._static[key])

    def is_motion(self, name):
        return self._canonical(name) in self._motions

    def affect(self, name):
        key = self._canonical(name)
        if key is None:
            raise NotFound(f"no pose named {name!r}")
        return self._affects[key]

    def resolve(self, name, phase=0.0) -> Pose:
        """Static pose, or a motion evaluated at ``phase`` in [0, 1) of its cycle."""
        key = self._canonical(name)
        if key is None:
            raise NotFound(f"no pose named {name!r}")
        if key in self._static:
            return self._static[key].pose
        clip = self._motions[key]
        return clip.evaluate(clip.keyframes[0][0] + phase * clip.duration)


def _motion_clip(spec, base_angles, skeleton):
    amp = float(spec["amplitude_deg"])
    period = float(spec["period_s"])
    axis = {"flex": 0, "abduct": 1, "twist": 2}[spec["axis"]]
    frames = []
    for k, s in enumerate((0.0, 1.0, 0.0, -1.0, 0.0)):
        angles = {j: list(v) for j, v in base_angles.items()}
        vals = angles.get(spec["joint"], [0.0, 0.0, 0.0])
        vals[axis] += s * amp
        angles[spec["joint"]] = vals
        frames.append((period * k / 4.0, pose_from_angles(skeleton, angles)))
    return AnimationClip(spec["name"], tuple(frames))


def load_library(path=None, motion_overrides=None) -> PoseLibrary:
    """Parse a pose data file; ``motion_overrides`` maps motion name -> {amplitude_deg, period_s}."""
    if path is None:
        text = resources.files("handsynth.data").joinpath("poses.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    doc = json.loads(text)
    if doc.get("schema_version") != POSE_FILE_VERSION:
        raise SchemaError(f"pose file schema_version {doc.get('schema_version')!r} "
                          f"!= {POSE_FILE_VERSION}")
    skeleton = build_skeleton("Male", 0.0)
    static, motions, affects, raw = {}, {}, {}, {}
    for rec in doc["static"]:
        name = rec["name"]
        if name in static:
            raise SchemaError(f"duplicate pose name {name!r}")
        pose = pose_from_angles(skeleton, rec["joints"])
        try:
            check_limits(skeleton, pose)
        except InvalidArgument as exc:
            raise SchemaError(f"pose {name!r}: {exc}") from None
        angles = tuple((j, tuple(v)) for j, v in rec["joints"].items())
        static[name] = PoseKeyframe(name, pose, rec["affect"], angles)
        affects[name] = rec["affect"]
        raw[name] = rec["joints"]
    for rec in doc.get("motions", []):
        rec = dict(rec, **(motion_overrides or {}).get(rec["name"], {}))
        name = rec["name"]
        if name in static or name in motions:
            raise SchemaError(f"duplicate pose name {name!r}")
        clip = _motion_clip(rec, raw[rec["base"]], skeleton)
        for _, p in clip.keyframes:
            try:
                check_limits(skeleton, p)
            except InvalidArgument as exc:
                raise SchemaError(f"motion {name!r}: {exc}") from None
        motions[name] = clip
        affects[name] = rec["affect"]
    return PoseLibrary(static, motions, doc.get("aliases"), affects)


@functools.lru_cache(maxsize=None)
def default_library() -> PoseLibrary:
    return load_library()


def get_pose(name) -> PoseKeyframe:
    return default_library().get_pose(name)


# plausibility measures used to guard the authored data


def fingertip_palm_distances(skeleton, pose):
    """Distance (m) from each of the four non-thumb fingertips to the palm centre."""
    pts = forward_kinematics(skeleton, pose)
    wrist, mid_mcp = pts[0], pts[skeleton.index("middle_mcp")]
    palm = 0.5 * (wrist + mid_mcp)
    tips = [skeleton.index(f"{f}_tip") for f in FINGERS[1:]]
    return np.linalg.norm(pts[tips] - palm, axis=1)


def finger_extended(skeleton, pose, finger):
    """Fingertip farther from the wrist than the finger's knuckle by the finger's own length."""
    pts = forward_kinematics(skeleton, pose)
    tip = pts[skeleton.index(f"{finger}_tip")]
    mcp = pts[skeleton.index(f"{finger}_mcp")]
    return bool(np.linalg.norm(tip - pts[0]) > np.linalg.norm(mcp - pts[0]))
