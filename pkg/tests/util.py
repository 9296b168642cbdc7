"""Straight line reimplementations used as oracles by the tests"""

from collections import Counter
import math

import numpy as np


def random_box(rng, min_size=0.0):
    x = np.sort(rng.uniform(0, 1, 2))
    y = np.sort(rng.uniform(0, 1, 2))
    if min_size:
        x[1] = min(1.0, x[0] + max(x[1] - x[0], min_size))
        y[1] = min(1.0, y[0] + max(y[1] - y[0], min_size))
    return [float(x[0]), float(y[0]), float(x[1]), float(y[1])]


def brute_iou(a, b):
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union if union > 0 else 0.0


def brute_curve(values, thresholds, above):
    result = []
    for t in thresholds:
        count = 0
        for v in values:
            if (above and v > t) or (not above and v <= t):
                count += 1
        result.append(count / len(values))
    return result


# Kalman filter with explicit matrices and inverses

def _xyah(box):
    w = box[2] - box[0]
    h = box[3] - box[1]
    return np.array([box[0] + w / 2, box[1] + h / 2, w / h, h])


def kalman_oracle(boxes):
    """Means and covariances after each update along consecutive frames"""
    F = np.eye(8)
    for i in range(4):
        F[i, i + 4] = 1.0
    H = np.zeros((4, 8))
    for i in range(4):
        H[i, i] = 1.0
    wp, wv = 1 / 20, 1 / 160
    z = _xyah(boxes[0])
    mean = np.concatenate([z, np.zeros(4)])
    h = z[3]
    P = np.diag([(2 * wp * h) ** 2, (2 * wp * h) ** 2, 1e-4, (2 * wp * h) ** 2,
                 (10 * wv * h) ** 2, (10 * wv * h) ** 2, 1e-10, (10 * wv * h) ** 2])
    means, covs = [mean], [P]
    for box in boxes[1:]:
        h = mean[3]
        Q = np.diag([(wp * h) ** 2, (wp * h) ** 2, 1e-4, (wp * h) ** 2,
                     (wv * h) ** 2, (wv * h) ** 2, 1e-10, (wv * h) ** 2])
        mean = F.dot(mean)
        P = F.dot(P).dot(F.T) + Q
        h = mean[3]
        R = np.diag([(wp * h) ** 2, (wp * h) ** 2, 1e-2, (wp * h) ** 2])
        S = H.dot(P).dot(H.T) + R
        K = P.dot(H.T).dot(np.linalg.inv(S))
        mean = mean + K.dot(_xyah(box) - H.dot(mean))
        P = P - K.dot(S).dot(K.T)
        means.append(mean)
        covs.append(P)
    return means, covs


def gate_oracle(mean, P, box):
    H = np.eye(4, 8)
    h = mean[3]
    wp = 1 / 20
    R = np.diag([(wp * h) ** 2, (wp * h) ** 2, 1e-2, (wp * h) ** 2])
    S = H.dot(P).dot(H.T) + R
    d = _xyah(box) - H.dot(mean)
    return float(d.dot(np.linalg.inv(S)).dot(d))


# Token selector

def gate_scores_oracle(F, p):
    """Gate MLP one token at a time, then a plain softmax"""
    c = math.sqrt(2 / math.pi)
    logits = []
    for row in F:
        logit = p.gate_b2[0]
        for j in range(p.gate_w1.shape[1]):
            z = sum(row[i] * p.gate_w1[i, j] for i in range(len(row))) + p.gate_b1[j]
            a = 0.5 * z * (1 + math.tanh(c * (z + 0.044715 * z ** 3)))
            logit += a * p.gate_w2[j, 0]
        logits.append(logit)
    top = max(logits)
    exps = [math.exp(x - top) for x in logits]
    return [e / sum(exps) for e in exps]


# Text metrics

def _words(text):
    return "".join(c if c.isalnum() or c.isspace() or c == "_" else " "
                   for c in text.lower()).split()


def _ngrams(words, n):
    counts = Counter()
    for k in range(1, n + 1):
        for i in range(len(words) - k + 1):
            counts[tuple(words[i:i + k])] += 1
    return counts


def cider_oracle(candidates, references, n=4, sigma=6.0):
    df = Counter()
    for refs in references:
        seen = set()
        for r in refs:
            seen.update(_ngrams(_words(r), n))
        for g in seen:
            df[g] += 1
    log_items = math.log(len(references))

    def vectors(text):
        counts = _ngrams(_words(text), n)
        vec = [dict() for _ in range(n)]
        for g, tf in counts.items():
            vec[len(g) - 1][g] = tf * (log_items - math.log(max(1.0, df[g])))
        norms = [math.sqrt(sum(x * x for x in v.values())) for v in vec]
        return vec, norms, len(_words(text))

    scores = []
    for cand, refs in zip(candidates, references):
        vc, nc, lc = vectors(cand)
        total = [0.0] * n
        for r in refs:
            vr, nr, lr = vectors(r)
            for k in range(n):
                s = sum(min(w, vr[k].get(g, 0.0)) * vr[k].get(g, 0.0) for g, w in vc[k].items())
                if nc[k] and nr[k]:
                    s /= nc[k] * nr[k]
                total[k] += s * math.exp(-((lc - lr) ** 2) / (2 * sigma ** 2))
        scores.append(sum(total) / n / len(refs) * 10)
    return scores


def meteor_oracle(candidate, reference, stem):
    c = _words(candidate)
    r = _words(reference)
    if not c or not r:
        return 0.0
    matched_c = [None] * len(c)
    used = [False] * len(r)
    for key in (lambda w: w, stem):
        for i, w in enumerate(c):
            if matched_c[i] is not None:
                continue
            for j, v in enumerate(r):
                if not used[j] and key(v) == key(w):
                    matched_c[i] = j
                    used[j] = True
                    break
    pairs = [(i, j) for i, j in enumerate(matched_c) if j is not None]
    m = len(pairs)
    if m == 0:
        return 0.0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    p = m / len(c)
    rc = m / len(r)
    fmean = p * rc / (0.9 * p + 0.1 * rc)
    return fmean * (1 - 0.5 * (chunks / m) ** 3)
