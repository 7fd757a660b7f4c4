"""Independent oracles used across the test suite.

These deliberately avoid the library's own computation paths: finite
differences for gradients, and mpmath scalar loops (50 significant digits)
for the contrastive losses.
"""

import mpmath
import numpy as np

mpmath.mp.dps = 50


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-8)
    return np.abs(a - b).max(initial=0.0) / denom


def nll_oracle(logits, targets):
    """Scalar-loop extended-precision mean NLL of softmax(logits)[target]."""
    logits = np.asarray(logits, dtype=np.float64)
    total = mpmath.mpf(0)
    for row, t in zip(logits, np.asarray(targets).reshape(-1)):
        denom = mpmath.mpf(0)
        for v in row:
            denom += mpmath.e ** mpmath.mpf(float(v))
        p = (mpmath.e ** mpmath.mpf(float(row[t]))) / denom
        total += -mpmath.log(p)
    return float(total / len(logits))


def info_nce_oracle(q, k_pos, negatives, tau):
    """Brute-force Eq.-style InfoNCE: one positive, K queue negatives."""
    q = np.asarray(q, dtype=np.float64)
    k_pos = np.asarray(k_pos, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, q.shape[1])
    tau = mpmath.mpf(float(tau))
    total = mpmath.mpf(0)
    for r in range(q.shape[0]):
        pos = mpmath.e ** (mpmath.mpf(float(np.dot(q[r], k_pos[r]))) / tau)
        denom = pos
        for neg in negatives:
            denom += mpmath.e ** (mpmath.mpf(float(np.dot(q[r], neg))) / tau)
        total += -mpmath.log(pos / denom)
    return float(total / q.shape[0])


def looc_loss_oracle(z_q, z_keys, queues, tau):
    """Scalar-loop evaluation of the multi-head leave-one-out objective.

    z_q: list of n+1 arrays [b, d]      (query through each head)
    z_keys: z_keys[j][i] = view k_j through head i, arrays [b, d]
    queues: list of n+1 arrays [K_i, d] (may be empty)
    Returns (total, per_head) as floats; total is the mean of per-head terms.
    """
    n_heads = len(z_q)
    b = np.asarray(z_q[0]).shape[0]
    tau = mpmath.mpf(float(tau))
    per_head = []
    for i in range(n_heads):
        head_total = mpmath.mpf(0)
        for r in range(b):
            qv = np.asarray(z_q[i])[r]
            pos = mpmath.e ** (mpmath.mpf(float(np.dot(qv, np.asarray(z_keys[i][i])[r]))) / tau)
            denom = pos
            if i > 0:
                for j in range(n_heads):
                    if j == i:
                        continue
                    other = np.asarray(z_keys[j][i])[r]
                    denom += mpmath.e ** (mpmath.mpf(float(np.dot(qv, other))) / tau)
            for neg in np.asarray(queues[i]).reshape(-1, qv.shape[0]):
                denom += mpmath.e ** (mpmath.mpf(float(np.dot(qv, neg))) / tau)
            head_total += -mpmath.log(pos / denom)
        per_head.append(float(head_total / b))
    total = float(sum(mpmath.mpf(x) for x in per_head) / n_heads)
    return total, per_head


def random_unit_rows(rng, rows, dim):
    x = rng.normal(size=(rows, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)
