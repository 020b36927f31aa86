"""
Rendering one sample
====================

Draw a scene spec from a seed, render it and save the image next to a skeleton
overlay. The annotation does not depend on lighting, so relighting the same
spec changes pixels but not labels.
"""

import math
import sys

import numpy as np

from handsynth.cli import draw_overlay
from handsynth.dataset import encode_png
from handsynth.render import render
from handsynth.scene import GenerationConfig, sample_spec

out = sys.argv[1] if len(sys.argv) > 1 else "."
spec = sample_spec(17, GenerationConfig())
print(spec.pose_a, "->", spec.pose_b, f"t={spec.blend_t:.2f}", spec.gender, "tone", spec.tone_index,
      spec.handedness)

image, ann = render(spec)
print("visible keypoints:", int(ann.visible.sum()), "of 21")
print("bbox (x, y, w, h):", np.round(ann.bbox, 1))

with open(f"{out}/sample.png", "wb") as fh:
    fh.write(encode_png(image))
with open(f"{out}/sample_overlay.png", "wb") as fh:
    fh.write(encode_png(draw_overlay(image, ann)))

# rotate the environment half a turn and brighten by one stop
relit = spec.replace(env_rotation_z=(spec.env_rotation_z + math.pi) % (2 * math.pi))
image2, ann2 = render(relit)
print("pixels changed:", not np.array_equal(image, image2), " labels equal:", ann2.equals(ann))
