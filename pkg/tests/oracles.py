"""Slow, loop-based reference versions of the evaluation measures.

Written directly from the measure definitions with plain Python arithmetic,
sharing no code with ``codnet.metrics``. Used only as test oracles.
"""

import math


def _to_lists(pred, gt):
    p = [[float(v) for v in row] for row in pred]
    g = [[1 if v > 0.5 else 0 for v in row] for row in gt]
    lo = min(min(r) for r in p)
    hi = max(max(r) for r in p)
    if lo < 0 or hi > 1:
        p = [[(v - lo) / (hi - lo) if hi > lo else 0.0 for v in r] for r in p]
    return p, g


def naive_mae(pred, gt):
    p, g = _to_lists(pred, gt)
    h, w = len(g), len(g[0])
    return sum(abs(p[i][j] - g[i][j]) for i in range(h) for j in range(w)) / (h * w)


def _mean(xs):
    return sum(xs) / len(xs)


def _std1(xs):
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def _obj(xs):
    m = _mean(xs)
    return 2 * m / (m * m + 1 + _std1(xs))


def _ssim(pv, gv):
    n = len(pv)
    if n == 0:
        return 0.0
    x = _mean(pv)
    y = _mean(gv)
    d = max(n - 1, 1)
    sx = sum((a - x) ** 2 for a in pv) / d
    sy = sum((b - y) ** 2 for b in gv) / d
    sxy = sum((a - x) * (b - y) for a, b in zip(pv, gv)) / d
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return a / b
    return 1.0 if b == 0 else 0.0


def naive_s_measure(pred, gt, alpha=0.5):
    p, g = _to_lists(pred, gt)
    h, w = len(g), len(g[0])
    n = h * w
    fg = [(i, j) for i in range(h) for j in range(w) if g[i][j]]
    ratio = len(fg) / n
    if ratio == 0:
        return 1 - sum(map(sum, p)) / n
    if ratio == 1:
        return sum(map(sum, p)) / n
    fg_vals = [p[i][j] for i, j in fg]
    bg_vals = [1 - p[i][j] for i in range(h) for j in range(w) if not g[i][j]]
    s_obj = ratio * _obj(fg_vals) + (1 - ratio) * _obj(bg_vals)

    cy = round(sum(i for i, _ in fg) / len(fg))
    cx = round(sum(j for _, j in fg) / len(fg))
    x, y = cx + 1, cy + 1
    s_reg = 0.0
    for r0, r1, c0, c1 in ((0, y, 0, x), (0, y, x, w), (y, h, 0, x), (y, h, x, w)):
        pv = [p[i][j] for i in range(r0, min(r1, h)) for j in range(c0, min(c1, w))]
        gv = [g[i][j] for i in range(r0, min(r1, h)) for j in range(c0, min(c1, w))]
        s_reg += len(pv) / n * _ssim(pv, gv)
    return max(alpha * s_obj + (1 - alpha) * s_reg, 0.0)


def naive_e_measure(pred, gt):
    p, g = _to_lists(pred, gt)
    h, w = len(g), len(g[0])
    n = h * w
    thr = min(2 * sum(map(sum, p)) / n, 1.0)
    b = [[1.0 if (p[i][j] >= thr and p[i][j] > 0) else 0.0 for j in range(w)] for i in range(h)]
    total_g = sum(map(sum, g))
    acc = 0.0
    if total_g == 0:
        acc = sum(1 - b[i][j] for i in range(h) for j in range(w))
    elif total_g == n:
        acc = sum(b[i][j] for i in range(h) for j in range(w))
    else:
        mg = total_g / n
        mb = sum(map(sum, b)) / n
        for i in range(h):
            for j in range(w):
                a = g[i][j] - mg
                c = b[i][j] - mb
                xi = 2 * a * c / (a * a + c * c)
                acc += (1 + xi) ** 2 / 4
    return acc / n


def naive_weighted_f(pred, gt, beta2=1.0):
    p, g = _to_lists(pred, gt)
    h, w = len(g), len(g[0])
    fg = [(i, j) for i in range(h) for j in range(w) if g[i][j]]
    if not fg:
        return 0.0
    err = [[abs(p[i][j] - g[i][j]) for j in range(w)] for i in range(h)]

    dist = [[0.0] * w for _ in range(h)]
    err_t = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            best = None
            for (a, b) in fg:  # row-major order; strict '<' keeps the first of any tie
                d = math.sqrt((i - a) ** 2 + (j - b) ** 2)
                if best is None or d < best[0]:
                    best = (d, a, b)
            dist[i][j] = best[0]
            err_t[i][j] = err[best[1]][best[2]]

    sigma = 5.0
    k = [[math.exp(-((u - 3) ** 2 + (v - 3) ** 2) / (2 * sigma * sigma)) for v in range(7)] for u in range(7)]
    ksum = sum(map(sum, k))
    k = [[v / ksum for v in row] for row in k]
    ea = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            s = 0.0
            for u in range(7):
                for v in range(7):
                    a, b = i + u - 3, j + v - 3
                    if 0 <= a < h and 0 <= b < w:
                        s += k[u][v] * err_t[a][b]
            ea[i][j] = s

    tp_sum = 0.0
    fg_err = 0.0
    fp = 0.0
    for i in range(h):
        for j in range(w):
            if g[i][j]:
                e = ea[i][j] if ea[i][j] < err[i][j] else err[i][j]
                fg_err += e
            else:
                fp += err[i][j] * (2 - math.exp(math.log(0.5) / 5 * dist[i][j]))
    tp = len(fg) - fg_err
    recall = 1 - fg_err / len(fg)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    den = recall + beta2 * precision
    return (1 + beta2) * recall * precision / den if den > 0 else 0.0
