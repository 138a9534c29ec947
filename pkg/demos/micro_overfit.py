"""Overfit the two-branch micro network on one 32x32 crop of the sphere.

Prints the loss terms and the wrapped-phase error as training goes.

    python demos/micro_overfit.py [steps]
"""
import sys

from fringephase.geometry import default_rig
from fringephase.losses import make_prediction, total_loss
from fringephase.micronet import MicroNetConfig
from fringephase.pipeline import _targets, capture_scene, scene_patch, sphere_scene
from fringephase.simulator import NoiseSpec
from fringephase.training import predict, train, wrapped_phase_mae

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
cap = capture_scene(default_rig(), sphere_scene(), NoiseSpec(quantize=True))
patch = scene_patch(cap, *_targets(cap)).crop(224, 304, 32)


def show(step, value, net):
    if (step + 1) % 250 == 0:
        out = predict(net, patch.fringe_h, patch.fringe_l)
        pred = make_prediction(*out, Phi_min=patch.Phi_min, mask=patch.mask)
        terms = total_loss(pred, patch.target()).terms
        print(f"step {step + 1:5d}  loss {value:.4f}  phase {terms['phase']:.4f}  "
              f"consist {terms['consist']:.4f}  geo {terms['geo']:.3f}  "
              f"wrapped MAE {wrapped_phase_mae(net, patch):.4f} rad")
    return False


res = train(MicroNetConfig(), [patch], steps=steps, seed=0, callback=show)
print(f"final learning rate {res.lr_trace[-1]:.2e}")
