"""Brute-force reference implementations used as test oracles.

Deliberately naive: plain Python loops, no shared code with the package.
"""

import math

import numpy as np


def top_conf_and_correct(probs, labels):
    conf, correct = [], []
    for row, y in zip(np.asarray(probs).tolist(), np.asarray(labels).tolist()):
        best = 0
        for k in range(1, len(row)):
            if row[k] > row[best]:
                best = k
        conf.append(row[best])
        correct.append(1.0 if best == y else 0.0)
    return conf, correct


def _ece_of_groups(groups, n):
    total = 0.0
    for g in groups:
        if not g:
            continue
        c = sum(x[0] for x in g) / len(g)
        a = sum(x[1] for x in g) / len(g)
        total += len(g) / n * abs(c - a)
    return total


def _width_groups(conf, correct, m):
    groups = [[] for _ in range(m)]
    for c, a in zip(conf, correct):
        for i in range(m):
            if i / m < c <= (i + 1) / m:
                groups[i].append((c, a))
                break
    return groups


def _mass_groups(conf, correct, m):
    """Sort, then cut after floor(i*N/M) items. Assumes distinct confidences."""
    pairs = sorted(zip(conf, correct))
    n = len(pairs)
    cuts = [0] + [(i * n) // m for i in range(1, m)] + [n]
    return [pairs[cuts[i] : cuts[i + 1]] for i in range(m)]


def ece_equal_width(probs, labels, m):
    conf, correct = top_conf_and_correct(probs, labels)
    return _ece_of_groups(_width_groups(conf, correct, m), len(conf))


def ece_equal_mass(probs, labels, m):
    conf, correct = top_conf_and_correct(probs, labels)
    return _ece_of_groups(_mass_groups(conf, correct, m), len(conf))


def ece_sweep(probs, labels, scheme):
    """Try every bin count 1..N; keep the last one before monotonicity first fails."""
    conf, correct = top_conf_and_correct(probs, labels)
    n = len(conf)
    grouper = _mass_groups if scheme == "equal_mass" else _width_groups
    best_value, best_m = None, None
    for m in range(1, n + 1):
        groups = grouper(conf, correct, m)
        accs = [sum(x[1] for x in g) / len(g) for g in groups if g]
        if any(accs[i + 1] < accs[i] for i in range(len(accs) - 1)):
            break
        best_value, best_m = _ece_of_groups(groups, n), m
    return best_value, best_m


def auroc_pairs(in_scores, out_scores):
    wins = 0.0
    for o in out_scores:
        for i in in_scores:
            if o > i:
                wins += 1.0
            elif o == i:
                wins += 0.5
    return wins / (len(in_scores) * len(out_scores))


def softmax_rows(logits):
    out = []
    for row in np.asarray(logits, dtype=float).tolist():
        top = max(row)
        e = [math.exp(v - top) for v in row]
        s = sum(e)
        out.append([v / s for v in e])
    return np.array(out)


def random_records(rng, n=200, k=3):
    """Random probability rows and labels with continuous confidences."""
    probs = rng.dirichlet(np.ones(k), size=n)
    labels = rng.integers(0, k, size=n)
    return probs, labels


def central_difference(f, x, h=1e-6):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        up = f(x)
        x[i] = orig - h
        down = f(x)
        x[i] = orig
        grad[i] = (up - down) / (2 * h)
    return grad


def rel_err(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / scale)


def calibrated_records(rng, n):
    """Two-class records where P(correct | confidence c) is exactly c."""
    c = rng.uniform(0.5, 1.0, n)
    correct = rng.random(n) < c
    probs = np.stack([c, 1.0 - c], axis=1)
    labels = np.where(correct, 0, 1)
    return probs, labels


def debias_bias_simulation(ece_debias, ece_ew, resamples=200, n=200, seed=0):
    """Paired one-sided test that ECE_DEBIAS sits below ECE_EW on calibrated data.

    Returns ``(mean_debias, mean_ew, upper_95)`` where ``upper_95`` is the
    one-sided 95% upper confidence bound on ``mean(debias - ew)``.
    """
    from adafocal.binning import EvalBatch

    rng = np.random.default_rng(seed)
    d, e = [], []
    for _ in range(resamples):
        probs, labels = calibrated_records(rng, n)
        batch = EvalBatch(probs, labels)
        d.append(ece_debias(batch, 15))
        e.append(ece_ew(batch, 15))
    diff = np.array(d) - np.array(e)
    upper = diff.mean() + 1.6449 * diff.std(ddof=1) / math.sqrt(resamples)
    return float(np.mean(d)), float(np.mean(e)), float(upper)
