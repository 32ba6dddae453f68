"""Clustering and alignment scores against ground truth.

``accuracy`` matches predicted to true clusters by optimal assignment on
the contingency table. AMI, homogeneity and completeness use natural logs
and follow the usual reference semantics: homogeneity is high when every
predicted cluster is pure, completeness when every true cluster stays
together. AE-2 and TE-2 are RMS relative pose errors over pairs that share
both their true and their predicted cluster.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn import metrics as skm

from .fbspca import wrap_angle


class UndefinedMetricError(ValueError):
    pass


def _pair(true_labels, pred_labels):
    c = np.asarray(true_labels)
    k = np.asarray(pred_labels)
    if c.shape != k.shape or c.ndim != 1:
        raise ValueError(f"label vectors differ in length: {c.shape} vs {k.shape}")
    if c.size == 0:
        raise ValueError("label vectors are empty")
    if (c < 0).any() or (k < 0).any():
        raise ValueError("labels must be nonnegative")
    return c.astype(int), k.astype(int)


def contingency(true_labels, pred_labels):
    c, k = _pair(true_labels, pred_labels)
    _, ci = np.unique(c, return_inverse=True)
    _, ki = np.unique(k, return_inverse=True)
    table = np.zeros((ci.max() + 1, ki.max() + 1), dtype=np.int64)
    np.add.at(table, (ci, ki), 1)
    return table


def accuracy(true_labels, pred_labels):
    """Fraction of samples matched under the best one-to-one label map."""
    table = contingency(true_labels, pred_labels)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum() / table.sum())


def adjusted_mutual_information(true_labels, pred_labels):
    c, k = _pair(true_labels, pred_labels)
    return float(skm.adjusted_mutual_info_score(c, k, average_method="arithmetic"))


def homogeneity_completeness(true_labels, pred_labels):
    c, k = _pair(true_labels, pred_labels)
    h, comp, _ = skm.homogeneity_completeness_v_measure(c, k)
    return float(h), float(comp)


@dataclass(frozen=True)
class AlignmentErrors:
    ae2: float
    te2: float
    n_pairs: int


def relative_alignment_errors(alpha_true, t_true, alpha_pred, t_pred, true_labels, pred_labels):
    """RMS relative rotation (rad) and translation (px) errors.

    Sums run over ordered pairs ``i != j`` with equal true and equal
    predicted labels. Angle mismatches are wrapped to ``[0, pi]``.
    """
    c, k = _pair(true_labels, pred_labels)
    a_t = np.asarray(alpha_true, dtype=float)
    a_p = np.asarray(alpha_pred, dtype=float)
    t_t = np.asarray(t_true, dtype=float).reshape(-1, 2)
    t_p = np.asarray(t_pred, dtype=float).reshape(-1, 2)
    if not (len(a_t) == len(a_p) == len(t_t) == len(t_p) == len(c)):
        raise ValueError("pose arrays and labels differ in length")
    groups = {}
    for i, key in enumerate(zip(c.tolist(), k.tolist())):
        groups.setdefault(key, []).append(i)
    sq_a = sq_t = 0.0
    n_pairs = 0
    for idx in groups.values():
        if len(idx) < 2:
            continue
        idx = np.array(idx)
        da = a_t[idx] - a_p[idx]
        dt = t_t[idx] - t_p[idx]
        ang = np.abs(wrap_angle(da[:, None] - da[None, :]))
        sq_a += float((ang**2).sum())
        sq_t += float(((dt[:, None, :] - dt[None, :, :]) ** 2).sum())
        n_pairs += len(idx) * (len(idx) - 1)
    if n_pairs == 0:
        raise UndefinedMetricError("undefined AE-2/TE-2: no pair shares both its true "
                                   "and its predicted cluster")
    return AlignmentErrors(ae2=math.sqrt(sq_a / n_pairs), te2=math.sqrt(sq_t / n_pairs),
                           n_pairs=n_pairs)


UNDEFINED = "UNDEFINED"


def format_report(values):
    """``NAME<TAB>value`` lines; floats get 9 significant digits."""
    lines = []
    for name, value in values.items():
        if isinstance(value, str):
            text = value
        elif isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            text = str(int(value))
        else:
            text = f"{float(value):.9g}"
        lines.append(f"{name}\t{text}\n")
    return "".join(lines)


def score_all(true_labels, pred_labels, alpha_true=None, t_true=None, alpha_pred=None,
              t_pred=None, translation=True):
    """Every metric as an ordered dict ready for ``format_report``."""
    h, comp = homogeneity_completeness(true_labels, pred_labels)
    out = {
        "ACC": accuracy(true_labels, pred_labels),
        "AMI": adjusted_mutual_information(true_labels, pred_labels),
        "H": h,
        "C": comp,
    }
    if alpha_true is not None:
        try:
            err = relative_alignment_errors(alpha_true, t_true, alpha_pred, t_pred,
                                            true_labels, pred_labels)
            out["AE2"] = err.ae2
            out["TE2"] = err.te2 if translation else UNDEFINED
            out["N_PAIRS"] = err.n_pairs
        except UndefinedMetricError:
            out["AE2"] = out["TE2"] = UNDEFINED
            out["N_PAIRS"] = 0
    return out
