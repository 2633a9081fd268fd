"""
Tiling a large image and scoring detections
===========================================

Splits a 1400 x 900 scene into 600 x 600 patches with 100 pixels of
overlap, moves the labels into patch coordinates, then evaluates a few
hand-made detections with VOC-style AP.
"""
import math
import warnings

from ipssd.dataio import Detection, GroundTruth, assign_to_patch, tile_image
from ipssd.evaluation import compute_ap
from ipssd.geometry import RotatedBox

W, H = 1400, 900
objects = [GroundTruth(RotatedBox(120, 80, 40, 18, 0.3), "plane", 0, "big"),
           GroundTruth(RotatedBox(560, 520, 30, 12, 1.2), "ship", 0, "big"),
           GroundTruth(RotatedBox(1300, 850, 20, 10, 2.0), "ship", 1, "big")]

for p in tile_image(W, H, patch=600, overlap=100, source_id="big"):
    inside = assign_to_patch(objects, p)
    print(f"patch at ({p.origin_x:4d}, {p.origin_y:3d}): {len(inside)} object(s)")

# detections: one exact, one slightly off, one false alarm
dets = [Detection(objects[0].box, "plane", 0.95, "big"),
        Detection(RotatedBox(563, 518, 31, 12, 1.25), "ship", 0.80, "big"),
        Detection(RotatedBox(900, 300, 30, 12, 0.0), "ship", 0.60, "big"),
        Detection(objects[2].box, "ship", 0.50, "big")]  # hits a difficult box: ignored

for mode in ("obb", "hbb"):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = compute_ap(dets, objects, 0.5, mode)
    print(mode, {c: round(r.ap, 4) for c, r in rep.per_class.items()}, "mAP", round(rep.mAP, 4))
    ship = rep.per_class["ship"]
    print("   ship tp/fp/ignored:", ship.tp, ship.fp, ship.ignored)
print("angle of the detected ship in degrees:", round(math.degrees(dets[1].box.theta), 2))
