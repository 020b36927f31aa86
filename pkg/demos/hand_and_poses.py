"""
The hand rig and the pose library
=================================

Build both gender presets, pose them with a few library entries and look at
what forward kinematics gives back.
"""

import numpy as np

from handsynth.hand import build_skeleton, build_mesh, forward_kinematics
from handsynth.poses import default_library, fingertip_palm_distances, interpolate

# two skeletons: the female preset is a scaled variant of the same 21-joint chain
male = build_skeleton("Male")
female = build_skeleton("Female")
print("bone lengths (mm), male vs female, index finger:")
print(np.round(1000 * male.bone_lengths()[4:8], 1), np.round(1000 * female.bone_lengths()[4:8], 1))

# the library holds the static poses and three wave motions
lib = default_library()
print(len(lib), "entries, motions:", lib.motion_names())

# a closed fist keeps every fingertip near the palm, an open hand does not
for name in ("Fist", "Five count", "Two count"):
    d = fingertip_palm_distances(male, lib.get_pose(name).pose)
    print(f"{name:12s} fingertip-palm distance (cm):", np.round(100 * d, 1))

# blending two poses rotates joints along the shortest arc, so bones keep their length
a, b = lib.resolve("Fist"), lib.resolve("Five count")
for t in (0.0, 0.5, 1.0):
    pts = forward_kinematics(male, interpolate(a, b, t))
    lengths = np.linalg.norm(pts[1:] - pts[male.parents[1:]], axis=1)
    print(f"t={t}: max bone length change {np.abs(lengths / male.bone_lengths() - 1).max():.1e}")

# the skinned mesh is a capsule per bone plus a palm volume
mesh = build_mesh(male)
print("mesh:", len(mesh.vertices), "vertices,", len(mesh.triangles), "triangles")
