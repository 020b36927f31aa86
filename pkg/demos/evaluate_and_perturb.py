"""
Evaluating predictions, clean and half-occluded
===============================================

Generate a small balanced set, make a copy with half of every hand painted
over, then score a stand-in predictor (ground truth plus noise) by tone.
A real model would be run on the images; here the noise only shows the
reporting path.
"""

import sys
import tempfile

import numpy as np

from handsynth.dataset import audit_balance, generate, perturb_dataset
from handsynth.metrics import PredictionSet, format_table, pooled_epe, stratified_report
from handsynth.scene import GenerationConfig

root = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp()
clean = generate(GenerationConfig(), 3, 24, f"{root}/clean")
print("cells:", audit_balance(clean).cells)

occluded = perturb_dataset(f"{root}/clean", f"{root}/occluded", 5)
print("labels unchanged by perturbation:",
      all(a.annotation.equals(b.annotation) for a, b in zip(clean.records, occluded.records)))

rng = np.random.default_rng(0)
preds = PredictionSet({r.id: r.annotation.keypoints_2d + rng.normal(0, 6.0, (21, 2))
                       for r in clean.records}, "gt+noise")
reports = stratified_report(preds, clean.records, "tone")
print(format_table(stratified_report(preds, clean.records, "all") + reports))
print(f"pooled EPE from groups: {pooled_epe(reports):.3f} px")
