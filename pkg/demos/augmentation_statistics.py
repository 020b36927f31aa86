"""
How often does augmentation fire?
=================================

Each branch is drawn independently: geometric 30%, colour 30%, blur 50%,
flips 50% each, erase 15%. Flips do not count as an alteration, so a plan
changes the image with probability 1 - 0.7 * 0.7 * 0.5 * 0.85.
"""

import collections

from handsynth.augment import sample_plan

n = 100_000
plans = [sample_plan(s) for s in range(n)]
print(f"altered: {sum(p.any_non_flip for p in plans) / n:.4f} "
      f"(analytic {1 - 0.7 * 0.7 * 0.5 * 0.85:.5f})")

ops = collections.Counter()
for p in plans:
    if p.geometric:
        ops[p.geometric["op"]] += 1
    if p.color:
        ops[p.color["op"]] += 1
    ops["blur"] += p.blur is not None
    ops["vflip"] += p.vflip
    ops["hflip"] += p.hflip
    ops["erase"] += p.erase is not None
for name, count in sorted(ops.items(), key=lambda kv: -kv[1]):
    print(f"{name:18s} {100 * count / n:6.2f}%")
