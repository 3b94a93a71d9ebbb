"""Dense block transfer operators of the steady-state filter and smoother.

By linearity, stacking a horizon of measurements into one long vector turns
each estimator into a single matrix: ``stacked estimates = operator @ stacked
measurements``. Two layouts exist for each estimator:

  * measurement form, (n*N, m*N): right operand is the stacked z sequence;
  * adversary form, (n*N, n*N): the measurement form times blockdiag(H'),
    so the right operand is a stacked state-space input u with z = H' u.

The filter operator is strictly block lower triangular (prediction k uses
measurements before k); the smoother operator is dense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularA, SingularSigma
from .estimators import SteadyStateKalman

__all__ = [
    "BlockOperators",
    "build_filter_operator",
    "build_smoother_operator",
    "adversary_form",
    "apply",
    "stack_rows",
    "split_rows",
]


def stack_rows(seq: np.ndarray) -> np.ndarray:
    """Flatten an (N, d) sequence into one stacked vector of length N*d."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d sequence, got shape {seq.shape}")
    return seq.reshape(-1)

def split_rows(vec: np.ndarray, block: int) -> np.ndarray:
    """Inverse of :func:`stack_rows` for a given block size."""
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or vec.size % block != 0:
        raise DimensionMismatch(
            f"stacked vector of length {vec.size} is not divisible into blocks of {block}"
        )
    return vec.reshape(-1, block)


def _closed_loop_powers(kal: SteadyStateKalman, upto: int) -> np.ndarray:
    """Powers 0..upto of the closed-loop matrix, stacked (upto+1, n, n)."""
    n = kal.system.n
    out = np.empty((upto + 1, n, n))
    out[0] = np.eye(n)
    for p in range(1, upto + 1):
        out[p] = out[p - 1] @ kal.closed_loop
    return out


def build_filter_operator(kal: SteadyStateKalman, horizon: int) -> np.ndarray:
    """Measurement-form filter operator: block (r, c) is At^(r-1-c) K for c < r."""
    if horizon < 1:
        raise DimensionMismatch("horizon must be at least 1")
    n, m = kal.system.n, kal.system.m
    powers = _closed_loop_powers(kal, horizon - 1)
    blocks = powers @ kal.gain  # (horizon, n, m); blocks[p] = At^p K
    op = np.zeros((n * horizon, m * horizon))
    for r in range(horizon):
        for c in range(r):
            op[r * n : (r + 1) * n, c * m : (c + 1) * m] = blocks[r - 1 - c]
    return op


def build_smoother_operator(kal: SteadyStateKalman, horizon: int) -> np.ndarray:
    """Measurement-form smoother operator.

    Block (k, i) applies the causal branch for i < k and the anticausal branch
    for i >= k. Both branches share the tail sums

        D(k, i, q0) = sum_{q=q0}^{N-1} (At')^(q-k) (A S)^-1 K H' At^(q-i-1)

    evaluated here with cached power tables and one vectorized contraction per
    block. Cost is O(N^3) small-matrix work, fine at desk scale.
    """
    if horizon < 1:
        raise DimensionMismatch("horizon must be at least 1")
    n, m = kal.system.n, kal.system.m
    N = horizon
    S = kal.predicted_cov
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularSigma("predicted_cov is singular; smoother operator undefined")
    AS = kal.system.A @ S
    if np.linalg.cond(AS) > 1e12:
        raise SingularA("A @ predicted_cov is not invertible")
    AS_inv = np.linalg.inv(AS)
    core = AS_inv @ kal.gain @ kal.system.H.T  # (A S)^-1 K H'

    powers = _closed_loop_powers(kal, N)            # At^p
    powers_t = powers.transpose(0, 2, 1).copy()     # (At')^p
    left = powers_t @ core                          # left[p] = (At')^p (A S)^-1 K H'

    def tail_sum(k: int, i: int, q0: int) -> np.ndarray:
        qs = np.arange(q0, N)
        if qs.size == 0:
            return np.zeros((n, n))
        return np.einsum("qab,qbc->ac", left[qs - k], powers[qs - i - 1])

    op = np.empty((n * N, m * N))
    for k in range(N):
        for i in range(N):
            if i < k:
                G = powers[k - i - 1] - S @ tail_sum(k, i, k)
            else:
                G = S @ (powers_t[i - k] @ AS_inv - tail_sum(k, i, i + 1))
            op[k * n : (k + 1) * n, i * m : (i + 1) * m] = G @ kal.gain
    return op


def adversary_form(op: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Convert a measurement-form operator to act on stacked state-space inputs.

    Right-multiplies by blockdiag(H', ..., H'): exact, no approximation.
    """
    H = np.asarray(H, dtype=float)
    n, m = H.shape
    if op.shape[1] % m != 0:
        raise DimensionMismatch(
            f"operator column count {op.shape[1]} is not a multiple of m={m}"
        )
    N = op.shape[1] // m
    if op.shape[0] % N != 0:
        raise DimensionMismatch(
            f"operator rows {op.shape[0]} do not split into {N} blocks"
        )
    # Equivalent to op @ kron(I_N, H.T) without forming the kron.
    cols = op.reshape(op.shape[0], N, m)
    out = np.einsum("rNm,mn->rNn", cols, H.T)
    return out.reshape(op.shape[0], N * n)


def apply(op: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Dense operator application with a shape check."""
    vec = np.asarray(vec, dtype=float)
    if vec.ndim != 1 or op.shape[1] != vec.shape[0]:
        raise DimensionMismatch(
            f"cannot apply {op.shape} operator to vector of shape {vec.shape}"
        )
    return op @ vec


@dataclass(frozen=True)
class BlockOperators:
    """Filter and smoother operators for one system at one horizon, both forms."""

    xi_filter: np.ndarray        # (n*N, m*N) measurement form
    xi_smoother: np.ndarray      # (n*N, m*N)
    xi_filter_adv: np.ndarray    # (n*N, n*N) adversary form
    xi_smoother_adv: np.ndarray  # (n*N, n*N)
    horizon: int
    n: int
    m: int

    @staticmethod
    def build(kal: SteadyStateKalman, horizon: int) -> "BlockOperators":
        xf = build_filter_operator(kal, horizon)
        xs = build_smoother_operator(kal, horizon)
        ops = BlockOperators(
            xi_filter=xf,
            xi_smoother=xs,
            xi_filter_adv=adversary_form(xf, kal.system.H),
            xi_smoother_adv=adversary_form(xs, kal.system.H),
            horizon=horizon,
            n=kal.system.n,
            m=kal.system.m,
        )
        for M in (ops.xi_filter, ops.xi_smoother, ops.xi_filter_adv, ops.xi_smoother_adv):
            M.flags.writeable = False
        return ops

    def gram_filter(self) -> np.ndarray:
        """Adversary-form Gram matrix of the filter operator (symmetric PSD)."""
        G = self.xi_filter_adv.T @ self.xi_filter_adv
        return 0.5 * (G + G.T)

    def gram_smoother(self) -> np.ndarray:
        G = self.xi_smoother_adv.T @ self.xi_smoother_adv
        return 0.5 * (G + G.T)
