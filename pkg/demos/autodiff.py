"""
Reverse-mode differentiation on numpy
=====================================

Every operation records how to push a gradient back to its inputs.
`grad` walks the graph once in reverse and returns one array per
parameter.
"""

import numpy as np

from vltok.numerics import (
    OptimHyper,
    ParamStore,
    adamw_step,
    cross_entropy,
    finite_difference_check,
    grad,
    linear,
    relu,
)

rng = np.random.default_rng(0)
ps = ParamStore()
w1 = ps.add("w1", rng.normal(0, 0.5, (2, 16)))
b1 = ps.add("b1", np.zeros(16))
w2 = ps.add("w2", rng.normal(0, 0.5, (16, 2)))

# two interleaved spirals-ish blobs
x = rng.normal(size=(64, 2))
y = (x[:, 0] * x[:, 1] > 0).astype(np.int64)


def loss_fn():
    return cross_entropy(linear(relu(linear(x, w1, b1)), w2), y)


errors = finite_difference_check(loss_fn, ps, samples_per_param=8)
print("finite-difference relative errors:", {k: f"{v:.1e}" for k, v in errors.items()})

hyper = OptimHyper(learning_rate=0.05, weight_decay=0.0)
for step in range(301):
    loss = loss_fn()
    adamw_step(ps, grad(loss, ps), hyper)
    if step % 100 == 0:
        print(f"step {step:3d}  loss {float(loss.data):.4f}")
