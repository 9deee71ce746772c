"""Dense float64 kernels: matmul, seeded RNG, RMSProp, finite differences.

Matrices are plain 2-D C-contiguous float64 numpy arrays. The PRNG is
numpy's PCG64 (O'Neill's permuted congruential generator, 128-bit state,
as shipped by numpy) so that a given seed yields the same stream on every
platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Matrix = np.ndarray


def as_matrix(rows: int, cols: int, entries) -> Matrix:
    """Build a rows x cols float64 matrix from row-major entries."""
    m = np.asarray(entries, dtype=np.float64).reshape(rows, cols)
    return np.ascontiguousarray(m)


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Standard matrix product with explicit shape validation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.ndim}-D and {b.ndim}-D")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: ({a.shape[0]}x{a.shape[1]}) @ ({b.shape[0]}x{b.shape[1]})")
    return a @ b


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic generator; identical seed gives an identical stream.

    PCG64 with numpy's SeedSequence expansion. Streams are reproducible
    across runs and platforms for a fixed numpy major version.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class RmspropState:
    """Squared-gradient accumulators plus the optimizer constants.

    rho and epsilon default to the canonical RMSProp values; only the
    learning rate is experiment-specific.
    """

    learning_rate: float
    rho: float = 0.9
    epsilon: float = 1e-8
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RmspropState,
) -> dict[str, np.ndarray]:
    """One RMSProp update over named parameter blocks.

    v <- rho*v + (1-rho)*g^2 ; theta <- theta - lr * g / (sqrt(v) + eps).
    Accumulators live in ``state.v`` keyed like ``params`` and are updated
    in place; missing blocks start at zero. Returns the new parameters.
    """
    if set(params) != set(grads):
        missing = set(params) ^ set(grads)
        raise ValueError(f"parameter/gradient key mismatch: {sorted(missing)}")
    out: dict[str, np.ndarray] = {}
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in block '{name}'")
        if g.shape != params[name].shape:
            raise ValueError(f"shape mismatch in block '{name}': {params[name].shape} vs {g.shape}")
        v = state.v.get(name)
        if v is None:
            v = np.zeros_like(params[name])
        v = state.rho * v + (1.0 - state.rho) * g * g
        state.v[name] = v
        out[name] = params[name] - state.learning_rate * g / (np.sqrt(v) + state.epsilon)
    return out


def finite_diff_grad(
    loss_fn: Callable[[np.ndarray], float],
    params: np.ndarray,
    h: float = 1e-5,
) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time.

    The workhorse oracle for checking hand-derived backpropagation; it is
    O(h^2) accurate and deliberately knows nothing about the analytic path.
    """
    if h <= 0.0:
        raise ValueError(f"step h must be positive, got {h}")
    theta = np.asarray(params, dtype=np.float64).ravel().copy()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        up = loss_fn(theta.reshape(np.shape(params)))
        theta[i] = orig - h
        down = loss_fn(theta.reshape(np.shape(params)))
        theta[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss at coordinate {i}")
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(np.shape(params))


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all blocks so the joint L2 norm is at most ``max_norm``."""
    if max_norm <= 0.0:
        return grads
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return {name: g * scale for name, g in grads.items()}
