"""Classification accuracy and binary segmentation metrics."""

import math

import numpy as np
from scipy import ndimage

from .errors import DimensionError


def accuracy(pred_labels, true_labels):
    pred = np.asarray(pred_labels).ravel()
    true = np.asarray(true_labels).ravel()
    if pred.size == 0:
        raise ValueError("accuracy of an empty prediction set")
    if pred.size != true.size:
        raise DimensionError("prediction and label counts differ")
    return float(np.count_nonzero(pred == true)) / pred.size


def _pair(pred, gt):
    p = np.asarray(pred)
    g = np.asarray(gt)
    if p.shape != g.shape:
        raise DimensionError(f"mask extents differ: {p.shape} vs {g.shape}")
    return p.astype(bool), g.astype(bool)


def confusion(pred, gt):
    p, g = _pair(pred, gt)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return tp, fp, fn


def f1_binary(pred, gt):
    tp, fp, fn = confusion(pred, gt)
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def tversky(pred, gt, alpha=0.5, beta=0.5):
    if alpha < 0 or beta < 0:
        raise ValueError("alpha and beta must be nonnegative")
    tp, fp, fn = confusion(pred, gt)
    denom = tp + alpha * fp + beta * fn
    if denom == 0:
        # no foreground anywhere (or only ignored errors with tp == 0)
        return 1.0 if tp + fp + fn == 0 else 0.0
    return tp / denom


def _directed(a, b):
    """max over foreground pixels of ``a`` of the distance to the nearest pixel of ``b``."""
    # exact Euclidean distance to the nearest True pixel of b
    dist = ndimage.distance_transform_edt(~b)
    return float(dist[a].max())


def hausdorff(pred, gt):
    """Symmetric Hausdorff distance between foreground pixel sets.

    Both empty gives 0. Exactly one empty gives the sentinel
    ``sqrt(h**2 + w**2)``, larger than any in-grid distance.
    """
    p, g = _pair(pred, gt)
    has_p, has_g = p.any(), g.any()
    if not has_p and not has_g:
        return 0.0
    if not (has_p and has_g):
        return math.hypot(*p.shape)
    return max(_directed(p, g), _directed(g, p))


def segmentation_scores(pred_masks, gt_masks, alpha=0.5, beta=0.5):
    """Per-metric means over a stack of mask pairs."""
    f1s, tvs, hds = [], [], []
    for p, g in zip(pred_masks, gt_masks):
        f1s.append(f1_binary(p, g))
        tvs.append(tversky(p, g, alpha, beta))
        hds.append(hausdorff(p, g))
    return {"f1": float(np.mean(f1s)), "tversky": float(np.mean(tvs)), "hausdorff": float(np.mean(hds))}
