"""A two-part object on a plain background, seen by both kinds of map.

Builds a 6x6 feature grid with a "head" region (drives the classifier), a
"body" region (barely drives it), and background, then prints the
conventional weight-based activation map next to the prototype-based one.
The body shows up only in the second.
"""

import numpy as np

from lpcam import (
    ClassifierWeights,
    FeatureBlock,
    PrototypeBankEntry,
    compute_cam,
    compute_lpcam,
)

base = 0.2
head = base + np.array([1.0, 0.0, 0.0])
body = base + np.array([0.0, 1.0, 0.0])
sky = base + np.array([0.0, 0.0, 1.0])

values = np.empty((6, 6, 3))
values[:] = sky
values[1:3, 1:5] = head
values[3:5, 1:5] = body
block = FeatureBlock(values.astype(np.float32))

# A classifier trained on pooled features weights the head far above the
# body: 10 vs 2 here.
weights = ClassifierWeights(np.array([[10.0, 2.0, 0.5]], dtype=np.float32))
cam = compute_cam(block, weights, 0)

entry = PrototypeBankEntry(
    class_id=0,
    fg=np.stack([head, body]),
    bg=sky[None, :],
    fg_scores=np.array([0.99, 0.95]),
    bg_scores=np.array([0.1]),
    fg_indices=(0, 1),
    bg_indices=(0,),
)
lpcam = compute_lpcam(block, entry, mode="full")


def show(title, grid):
    print(title)
    for row in grid:
        print("  " + " ".join(f"{v:4.2f}" for v in row))
    print()


show("weight-based map (head only):", cam.values)
show("prototype-based map (head and body):", lpcam.values)

head_cam, body_cam = cam.values[1, 2], cam.values[3, 2]
head_lp, body_lp = lpcam.values[1, 2], lpcam.values[3, 2]
print(f"body/head activation ratio: {body_cam / head_cam:.2f} (weight-based) "
      f"vs {body_lp / head_lp:.2f} (prototype-based)")
print("a single 0.3 threshold keeps the whole object only in the second map")
