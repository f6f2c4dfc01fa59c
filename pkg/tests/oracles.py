"""Brute-force reference implementations used to check the package.

Written directly from the feature and metric definitions with plain Python
loops, ``math`` and ``fractions``; nothing here imports the package.
"""

from __future__ import annotations

import math
from fractions import Fraction


def cosine(xL, xR):
    dot = sum(a * b for a, b in zip(xL, xR))
    nL = math.sqrt(sum(a * a for a in xL))
    nR = math.sqrt(sum(b * b for b in xR))
    if nL == 0 or nR == 0:
        return None
    return max(-1.0, min(1.0, dot / (nL * nR)))


def deviation(xL, xR, guard=1e-12):
    mL = math.fsum(xL) / len(xL)
    mR = math.fsum(xR) / len(xR)
    if abs(mL) <= guard or abs(mR) <= guard:
        return None
    return math.fsum(abs(mL - a) / abs(mL) * abs(mR - b) / abs(mR) for a, b in zip(xL, xR))


def count_beyond(x, k, side):
    """Exact count of entries strictly beyond mean +/- k*std (population std)."""
    F = [Fraction(v) for v in x]
    if max(F) == min(F):
        return 0
    m = sum(F) / len(F)
    var = sum((v - m) ** 2 for v in F) / len(F)
    n = 0
    for v in F:
        d = v - m if side == "above" else m - v
        # d > k*sqrt(var)  <=>  d > 0 and d^2 > k^2 var
        if d > 0 and d * d > Fraction(k) ** 2 * var:
            n += 1
    return n


def count_ratio(yL, yR):
    if yL == 0 and yR == 0:
        return 1.0
    if yL == 0 or yR == 0:
        return 0.0
    return min(yL, yR) / max(yL, yR)


def ratios(xL, xR):
    out = []
    for a, b in zip(xL, xR):
        if a == 0 and b == 0:
            out.append(1.0)
        elif a == 0 or b == 0:
            out.append(0.0)
        else:
            r = min(a / b, b / a)
            out.append(r if r >= 0 else 0.0)
    return out


def seven_features(xL, xR, k=1.0):
    """f1..f7 with the same degenerate-case conventions as the package (None -> 0)."""
    r = ratios(xL, xR)
    mean_r = math.fsum(r) / len(r)
    std_r = math.sqrt(math.fsum((v - mean_r) ** 2 for v in r) / len(r))
    f1 = cosine(xL, xR)
    f2 = deviation(xL, xR)
    return [
        0.0 if f1 is None else f1,
        0.0 if f2 is None else f2,
        count_ratio(count_beyond(xL, k, "above"), count_beyond(xR, k, "above")),
        count_ratio(count_beyond(xL, k, "below"), count_beyond(xR, k, "below")),
        mean_r,
        std_r,
        min(r),
    ]


# -- metrics ------------------------------------------------------------------

def exact_metrics(tp, tn, fp, fn):
    def q(a, b):
        return None if b == 0 else Fraction(a, b)
    return {
        "accuracy": q(tp + tn, tp + tn + fp + fn),
        "sensitivity": q(tp, tp + fn),
        "specificity": q(tn, tn + fp),
        "f1": q(2 * tp, 2 * tp + fp + fn),
    }


def auroc_pairs(scores, labels):
    """Probability a random positive outscores a random negative; ties count half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    wins = Fraction(0)
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                wins += Fraction(1, 2)
    return wins / (len(pos) * len(neg))
