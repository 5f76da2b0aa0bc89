#!/usr/bin/env python3
"""Reverse-mode gradients on the tape vs central finite differences.

Builds a small separable-conv -> batch-norm -> dense chain, runs one
backward pass, and compares a few analytic gradients against numeric
ones.
"""

import numpy as np

from msthar import ops
from msthar.tensor import Parameter, Tape, Tensor

rng = np.random.default_rng(0)
x = rng.uniform(-1, 1, (4, 2, 16))
dw = Parameter(rng.uniform(-1, 1, (2, 3)))
pw = Parameter(rng.uniform(-1, 1, (4, 2)))
gamma, beta = Parameter(np.ones(4)), Parameter(np.zeros(4))
w = Parameter(rng.uniform(-1, 1, (4, 3)))
b = Parameter(np.zeros(3))
proj = rng.uniform(-1, 1, (4, 3))


def forward(tape=None):
    rm, rv = np.zeros(4), np.ones(4)
    h = ops.separable_conv1d(Tensor(x), dw, pw, stride=2, padding="same", tape=tape)
    h = ops.batch_norm(h, gamma, beta, rm, rv, mode="train", tape=tape)
    h = ops.relu(h, tape)
    h = ops.global_avg_pool(h, tape)
    h = ops.dense(h, w, b, tape)
    return ops.weighted_sum(ops.softmax(h, tape), proj, tape)


tape = Tape()
loss = forward(tape)
tape.backward(loss)
print(f"loss = {loss.data.item():.6f}, tape length = {len(tape)} ops")

h = 1e-5
for name, param in [("depthwise", dw), ("pointwise", pw), ("gamma", gamma), ("dense", w)]:
    flat = param.data.ravel()
    i = rng.integers(flat.size)
    orig = flat[i]
    flat[i] = orig + h
    up = forward().data.item()
    flat[i] = orig - h
    down = forward().data.item()
    flat[i] = orig
    numeric = (up - down) / (2 * h)
    analytic = param.grad.ravel()[i]
    rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1.0)
    print(f"{name:>10}[{i}]: analytic {analytic:+.9f}  numeric {numeric:+.9f}  "
          f"rel err {rel:.2e}")
