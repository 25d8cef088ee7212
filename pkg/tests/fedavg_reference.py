"""A deliberately plain FedAvg loop, written without the package's nn/fl code.

It serves as the oracle for the single-cohort run: same seeds, same
arithmetic order, but its own forward pass, backprop, momentum step,
aggregation and stopping rule. Parameters are kept as flat Python lists of
arrays ``[W0, b0, W1, b1, ...]``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from cpfl import seeding


def glorot(dims, rng):
    params = []
    for a, b in zip(dims[:-1], dims[1:]):
        lim = np.sqrt(6.0 / (a + b))
        params.append(rng.uniform(-lim, lim, size=(a, b)))
        params.append(np.zeros(b))
    return params


def logits_and_inputs(params, x):
    inputs = [x]
    h = x
    layers = len(params) // 2
    for l in range(layers):
        z = h @ params[2 * l] + params[2 * l + 1]
        if l == layers - 1:
            return z, inputs
        h = np.maximum(z, 0.0)
        inputs.append(h)


def mean_ce(params, x, y):
    z, _ = logits_and_inputs(params, x)
    s = z - z.max(axis=1, keepdims=True)
    logp = s - np.log(np.exp(s).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean()), logp


def sgd_epoch(params, x, y, batch_size, lr, mu, rng):
    params = [p.copy() for p in params]
    velocity = [np.zeros_like(p) for p in params]
    order = rng.permutation(len(y))
    losses, batches = [], 0
    for start in range(0, len(y), batch_size):
        idx = order[start:start + batch_size]
        xb, yb = x[idx], y[idx]
        loss, logp = mean_ce(params, xb, yb)
        _, inputs = logits_and_inputs(params, xb)
        delta = np.exp(logp)
        delta[np.arange(len(yb)), yb] -= 1.0
        delta /= len(yb)
        grads = [None] * len(params)
        for l in reversed(range(len(params) // 2)):
            grads[2 * l] = inputs[l].T @ delta
            grads[2 * l + 1] = delta.sum(axis=0)
            if l:
                delta = (delta @ params[2 * l].T) * (inputs[l] > 0.0)
        for p, v, g in zip(params, velocity, grads):
            v *= mu
            v += g
            p -= lr * v
        losses.append(loss)
        batches += 1
    return params, batches


def run_reference(clients, profiles, dims, seed, rounds, batch_size, lr, mu, window, patience, model_bytes):
    """``clients``: {id: (x_train, y_train, x_val or None, y_val or None)}.

    Returns one record per round: (params, mean val loss, round duration,
    compute seconds) and stops early under the same patience rule.
    """
    ids = sorted(clients)
    params = glorot(dims, seeding.rng(seed, "init", 0))
    history, best, waited = [], None, 0
    out = []
    for t in range(rounds):
        local, durations, compute = [], [], []
        for k in ids:
            x, y, _, _ = clients[k]
            new, batches = sgd_epoch(params, x, y, batch_size, lr, mu, seeding.rng(seed, "local", 0, t, k))
            local.append((new, len(y)))
            cpu = batches * profiles[k].compute_sec_per_batch
            link = model_bytes / profiles[k].network_bytes_per_sec
            durations.append(link + cpu + link)
            compute.append(cpu)
        total = float(sum(float(n) for _, n in local))
        shares = [float(n) / total for _, n in local]
        params = [shares[0] * p for p in local[0][0]]
        for (new, _), s in zip(local[1:], shares[1:]):
            for acc, p in zip(params, new):
                acc += s * p
        vals = [mean_ce(params, xv, yv)[0] for _, _, xv, yv in (clients[k] for k in ids) if xv is not None]
        val = float(np.mean(vals))
        out.append(([p.copy() for p in params], val, max(durations), compute))
        history.append(val)
        tail = history[-window:]
        smooth = sum(Fraction(v) for v in tail) / len(tail)
        if best is None or smooth < best:
            best, waited = smooth, 0
        else:
            waited += 1
        if waited >= patience:
            break
    return out
