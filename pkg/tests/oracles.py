"""Slow, loop-based reference implementations used only by the tests."""

import math
from fractions import Fraction


def softmax_ref(values):
    top = max(values)
    e = [math.exp(v - top) for v in values]
    s = math.fsum(e)
    return [x / s for x in e]


def behavior_ref(p, rows, cols, alpha):
    """Per-frame behavior vectors evaluated formula by formula with Python loops."""
    n, m, d = len(p), len(p[0]), len(p[0][0])
    out, attention = [], []
    for i in range(n):
        sal = []
        for k in range(m):
            delta_t = [0.0] * d if i == 0 else [p[i][k][j] - p[i - 1][k][j] for j in range(d)]
            r, c = divmod(k, cols)
            nbrs = [(r + dr) * cols + (c + dc) for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1))
                    if 0 <= r + dr < rows and 0 <= c + dc < cols]
            if nbrs:
                delta_s = [p[i][k][j] - sum(p[i][l][j] for l in nbrs) / len(nbrs) for j in range(d)]
            else:
                delta_s = [0.0] * d
            sal.append([abs(a) + abs(b) for a, b in zip(delta_t, delta_s)])
        att = softmax_ref([alpha * sum(s) / d for s in sal])
        attention.append(att)
        out.append([math.fsum(att[k] * sal[k][j] for k in range(m)) for j in range(d)])
    return out, attention


def kernel_ref(n, sigma):
    return [softmax_ref([-abs(i - j) / sigma for j in range(n)]) for i in range(n)]


def layer_norm_ref(row, gain, bias, eps=1e-5):
    d = len(row)
    mu = math.fsum(row) / d
    var = math.fsum((x - mu) ** 2 for x in row) / d
    return [(x - mu) / math.sqrt(var + eps) * g + b for x, g, b in zip(row, gain, bias)]


def bce_ref(pred, labels, clamp=1e-7):
    total = []
    for p, y in zip(pred, labels):
        p = min(max(p, clamp), 1 - clamp)
        total.append(-(y * math.log(p) + (1 - y) * math.log(1 - p)))
    return math.fsum(total) / len(total)


def average_precision_ref(scores, labels):
    """Enumerate every distinct threshold; sum recall increments times precision."""
    pos = sum(labels)
    ap, last_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        chosen = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(chosen)
        recall = Fraction(tp, pos)
        ap += (recall - last_recall) * Fraction(tp, len(chosen))
        last_recall = recall
    return float(ap)


def roc_auc_ref(scores, labels):
    """All positive/negative pairs, half credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(2 if a > b else 1 if a == b else 0 for a in pos for b in neg)
    return float(Fraction(wins, 2 * len(pos) * len(neg)))
