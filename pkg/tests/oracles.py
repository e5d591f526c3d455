"""Independent brute-force re-implementations used as test oracles."""

import math

import numpy as np


def brute_assign(boxes, levels, grids, radius):
    """Per-location loop applying the foreground / tie-break / center-sampling rules.

    Returns per level a dict (i, j) -> (gt index, (l, r, t, b), centerness, center_sampled)
    for foreground locations only.
    """
    out = []
    for spec, g in zip(levels, grids):
        res = {}
        off = g.stride // 2
        for i in range(g.height):
            y = float(off + i * g.stride)
            for j in range(g.width):
                x = float(off + j * g.stride)
                best = None
                for k, (x1, y1, x2, y2) in enumerate(boxes):
                    l, r, t, b = x - x1, x2 - x, y - y1, y2 - y
                    if min(l, r, t, b) <= 0:
                        continue
                    m = max(l, r, t, b)
                    if not (spec.range_min <= m < spec.range_max):
                        continue
                    area = (x2 - x1) * (y2 - y1)
                    if best is None or area < best[0]:
                        best = (area, k, (l, r, t, b))
                if best is None:
                    continue
                _, k, (l, r, t, b) = best
                x1, y1, x2, y2 = boxes[k]
                cx, cy = (x1 + x2) / 2, (y1 + y2) / 2
                half = radius * spec.stride
                inside_center = (max(cx - half, x1) < x < min(cx + half, x2)
                                 and max(cy - half, y1) < y < min(cy + half, y2))
                ctr = math.sqrt((min(l, r) / max(l, r)) * (min(t, b) / max(t, b)))
                res[(i, j)] = (k, (l, r, t, b), ctr, inside_center)
        out.append(res)
    return out


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    out = np.zeros((len(a), len(b)))
    for i in range(len(a)):
        for j in range(len(b)):
            iw = min(a[i, 2], b[j, 2]) - max(a[i, 0], b[j, 0])
            ih = min(a[i, 3], b[j, 3]) - max(a[i, 1], b[j, 1])
            if iw > 0 and ih > 0:
                inter = iw * ih
                area_a = (a[i, 2] - a[i, 0]) * (a[i, 3] - a[i, 1])
                area_b = (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1])
                out[i, j] = inter / (area_a + area_b - inter)
    return out


def iou_matrix_fast(a, b):
    """Broadcast IoU matrix; same arithmetic as iou_matrix, for larger oracle runs."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def nms_oracle(boxes, scores, threshold, ious=None):
    """O(n^2) greedy NMS over a full IoU matrix with suppression flags."""
    n = len(boxes)
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    if ious is None:
        ious = iou_matrix(boxes, boxes)
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(i)
        suppressed |= ious[i] > threshold
    return keep


def max_matching(ious, threshold):
    """Largest number of disjoint proposal-gt pairs with IoU >= threshold, by exhaustive search."""
    P, G = ious.shape
    best = 0

    def rec(g, used, count):
        nonlocal best
        if count + (G - g) <= best:
            return
        if g == G:
            best = max(best, count)
            return
        for p in range(P):
            if p not in used and ious[p, g] >= threshold:
                rec(g + 1, used | {p}, count + 1)
        rec(g + 1, used, count)

    rec(0, frozenset(), 0)
    return best


def exhaustive_recall(props, gts, n, thresholds):
    """Per-threshold optimal matched counts pooled over images, and the GT total."""
    matched = np.zeros(len(thresholds), dtype=np.int64)
    total = 0
    for p, g in zip(props, gts):
        if len(g) == 0:
            continue
        total += len(g)
        p = p[:n]
        if len(p) == 0:
            continue
        m = iou_matrix(p, g)
        for k, t in enumerate(thresholds):
            matched[k] += max_matching(m, t)
    return matched, total


def ar_corpus(seed=2024, size=2000, max_gt=5, max_props=8):
    """Seeded matching instances: (proposals sorted by score, gt boxes).

    Most proposals are jittered copies of a ground-truth box, the rest are
    random, so the instances are dense in near-threshold overlaps.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(size):
        g = int(rng.integers(0, max_gt + 1))
        xy = rng.uniform(0, 60, (g, 2))
        wh = rng.uniform(8, 40, (g, 2))
        gts = np.hstack([xy, xy + wh])
        p = int(rng.integers(0, max_props + 1))
        props = []
        for _ in range(p):
            if g and rng.random() < 0.7:
                b = gts[rng.integers(g)].copy()
                w, h = b[2] - b[0], b[3] - b[1]
                b += rng.normal(0, 0.15, 4) * np.array([w, h, w, h])
                b[2] = max(b[2], b[0] + 1)
                b[3] = max(b[3], b[1] + 1)
            else:
                x, y = rng.uniform(0, 60, 2)
                bw, bh = rng.uniform(8, 40, 2)
                b = np.array([x, y, x + bw, y + bh])
            props.append(b)
        props = np.array(props, dtype=np.float64).reshape(-1, 4)
        scores = rng.random(p)
        out.append((props[np.argsort(-scores, kind="stable")], gts))
    return out
