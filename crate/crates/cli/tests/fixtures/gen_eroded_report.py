"""Reference scores for the eroded-oracle predictor over synthetic_rects.json.

Independent of the Rust implementation: uses scipy morphology and an exact
Euclidean distance transform. Run from this directory:

    python3 gen_eroded_report.py > eroded_report.json
"""
import json
import math

import numpy as np
from scipy import ndimage

SQUARE = np.ones((3, 3), dtype=bool)


def rect_mask(h, w, rects):
    m = np.zeros((h, w), dtype=bool)
    for top, left, bottom, right in rects:
        m[top:bottom, left:right] = True
    return m


def erode(m):
    return ndimage.binary_erosion(m, structure=SQUARE, border_value=0)


def boundary(m):
    return m & ~erode(m)


def ratio(num, den, both_empty):
    if den == 0:
        return 1.0 if both_empty else 0.0
    return num / den


def harmonic(p, r):
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def jaccard(gt, pred):
    union = (gt | pred).sum()
    if union == 0:
        return 1.0
    return (gt & pred).sum() / union


def region_f(gt, pred):
    both = gt.sum() == 0 and pred.sum() == 0
    inter = (gt & pred).sum()
    return harmonic(ratio(inter, pred.sum(), both), ratio(inter, gt.sum(), both))


def matched(src, dst, tol):
    if dst.sum() == 0:
        return 0
    dist = ndimage.distance_transform_edt(~dst)
    return int((src & (dist <= tol)).sum())


def boundary_f(gt, pred, tol):
    gb, pb = boundary(gt), boundary(pred)
    both = gb.sum() == 0 and pb.sum() == 0
    p = ratio(matched(pb, gb, tol), pb.sum(), both)
    r = ratio(matched(gb, pb, tol), gb.sum(), both)
    return harmonic(p, r)


def mean(xs):
    return sum(xs) / len(xs)


def main():
    layout = json.load(open("synthetic_rects.json"))
    frames = []
    for fr in layout["frames"]:
        h, w = fr["height"], fr["width"]
        gt = rect_mask(h, w, fr["rects"])
        pred = erode(gt)
        tol = math.ceil(0.008 * math.hypot(h, w))
        j = float(jaccard(gt, pred))
        fb = float(boundary_f(gt, pred, tol))
        fr_ = float(region_f(gt, pred))
        frames.append({
            "image_id": f"{fr['sequence']}/{fr['frame']}",
            "sequence": fr["sequence"],
            "tolerance_px": tol,
            "j": j,
            "f_region": fr_,
            "f_boundary": fb,
            "jf_boundary": (j + fb) / 2,
        })
    seqs = {}
    for f in frames:
        seqs.setdefault(f["sequence"], []).append(f)
    sequences = []
    for name in sorted(seqs):
        fs = seqs[name]
        j = mean([f["j"] for f in fs])
        fb = mean([f["f_boundary"] for f in fs])
        sequences.append({
            "sequence": name,
            "j": j,
            "f_region": mean([f["f_region"] for f in fs]),
            "f_boundary": fb,
            "jf_boundary": mean([f["jf_boundary"] for f in fs]),
        })
    cats = {}
    for s in sequences:
        cats.setdefault(layout["categories"][s["sequence"]], []).append(s)
    categories = []
    for name in sorted(cats):
        ss = cats[name]
        categories.append({
            "category": name,
            "j": mean([s["j"] for s in ss]),
            "f_boundary": mean([s["f_boundary"] for s in ss]),
            "jf_boundary": mean([s["jf_boundary"] for s in ss]),
        })
    out = {
        "frames": frames,
        "sequences": sequences,
        "categories": categories,
        "overall_by_sequence": {
            "j": mean([s["j"] for s in sequences]),
            "f_boundary": mean([s["f_boundary"] for s in sequences]),
            "jf_boundary": mean([s["jf_boundary"] for s in sequences]),
        },
        "overall_by_category": {
            "j": mean([c["j"] for c in categories]),
            "f_boundary": mean([c["f_boundary"] for c in categories]),
            "jf_boundary": mean([c["jf_boundary"] for c in categories]),
        },
    }
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
