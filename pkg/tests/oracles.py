"""Independent brute-force oracles.

Everything here is deliberately written as plain Python loops over scalars,
sharing no code with the package implementations it is used to check.
"""

import math

import numpy as np


def naive_unfold(x, size, stride, padding):
    h, w, c = x.shape
    gh = (h + 2 * padding - size) // stride + 1
    gw = (w + 2 * padding - size) // stride + 1
    out = np.zeros((gh * gw, size * size * c), dtype=x.dtype)
    for gi in range(gh):
        for gj in range(gw):
            row = gi * gw + gj
            col = 0
            for wi in range(size):
                for wj in range(size):
                    si = gi * stride - padding + wi
                    sj = gj * stride - padding + wj
                    for ch in range(c):
                        if 0 <= si < h and 0 <= sj < w:
                            out[row, col] = x[si, sj, ch]
                        col += 1
    return out


def naive_correlation(a, b, eps=1e-8):
    na, d = a.shape
    nb = b.shape[0]
    mean_a = [sum(a[i][k] for i in range(na)) / na for k in range(d)]
    mean_b = [sum(b[j][k] for j in range(nb)) / nb for k in range(d)]
    out = np.zeros((na, nb))
    for i in range(na):
        for j in range(nb):
            dot = norm_a = norm_b = 0.0
            for k in range(d):
                ca = a[i][k] - mean_a[k]
                cb = b[j][k] - mean_b[k]
                dot += ca * cb
                norm_a += ca * ca
                norm_b += cb * cb
            out[i, j] = dot / (math.sqrt(norm_a) * math.sqrt(norm_b) + eps)
    return out


def naive_dense_warp(scores, x, alpha):
    n, m = scores.shape
    c = x.shape[1]
    out = np.zeros((n, c))
    for u in range(n):
        row = [alpha * scores[u][v] for v in range(m)]
        peak = max(row)
        exps = [math.exp(r - peak) for r in row]
        denom = sum(exps)
        for ch in range(c):
            out[u, ch] = sum(exps[v] / denom * x[v][ch] for v in range(m))
    return out


def naive_cross_entropy(logits, labels):
    h, w, k = logits.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            row = [logits[i][j][t] for t in range(k)]
            peak = max(row)
            lse = peak + math.log(sum(math.exp(r - peak) for r in row))
            total += lse - row[labels[i][j]]
    return total / (h * w)


def naive_gram(f):
    h, w, c = f.shape
    out = np.zeros((c, c))
    for a in range(c):
        for b in range(c):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc += f[i][j][a] * f[i][j][b]
            out[a, b] = acc / (h * w)
    return out


def naive_contextual(x, y, bandwidth=0.5, eps=1e-5):
    n, d = x.shape
    m = y.shape[0]
    mu = [sum(y[j][k] for j in range(m)) / m for k in range(d)]
    xc = [[x[i][k] - mu[k] for k in range(d)] for i in range(n)]
    yc = [[y[j][k] - mu[k] for k in range(d)] for j in range(m)]
    dist = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            dot = sum(xc[i][k] * yc[j][k] for k in range(d))
            nx = math.sqrt(sum(v * v for v in xc[i]))
            ny = math.sqrt(sum(v * v for v in yc[j]))
            dist[i][j] = 1.0 - dot / (nx * ny + eps)
    rel = [[dist[i][j] / (min(dist[i]) + eps) for j in range(m)] for i in range(n)]
    w = [[math.exp((1.0 - rel[i][j]) / bandwidth) for j in range(m)] for i in range(n)]
    aff = [[w[i][j] / sum(w[i]) for j in range(m)] for i in range(n)]
    best = [max(aff[i][j] for i in range(n)) for j in range(m)]
    return -math.log(sum(best) / m)


def naive_distance_field(width, height, joints):
    """joints: list of 18 entries, each None or rounded (row, col)."""
    diag = math.sqrt(width * width + height * height)
    out = np.ones((height, width, len(joints)))
    for ch, joint in enumerate(joints):
        if joint is None:
            continue
        jr, jc = joint
        for r in range(height):
            for c in range(width):
                out[r, c, ch] = math.sqrt((r - jr) ** 2 + (c - jc) ** 2) / diag
    return out


def naive_bilinear(img, row, col):
    h, w, c = img.shape
    r0, c0 = math.floor(row), math.floor(col)
    out = [0.0] * c
    for dr in (0, 1):
        for dc in (0, 1):
            ri, ci = r0 + dr, c0 + dc
            wgt = (row - r0 if dr else 1 - (row - r0)) * \
                  (col - c0 if dc else 1 - (col - c0))
            if 0 <= ri < h and 0 <= ci < w:
                for ch in range(c):
                    out[ch] += wgt * img[ri][ci][ch]
    return np.array(out)
