"""Steady-state Kalman filtering and smoothing.

The filter is the time-invariant one-step predictor

    xhat[k+1|k] = (A - K H') xhat[k|k-1] + K z[k]

with gain ``K = A S H (H' S H + R)^-1`` where ``S`` solves the steady-state
Riccati fixed point. Two smoother implementations are provided on purpose:
the backward recursion and the innovations-driven fixed-point form. They are
algebraically identical and cross-check each other in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    IllConditioned,
    LengthMismatch,
    NoConvergence,
    SingularA,
    SingularSigma,
)
from .model import LinearSystem, Trajectory

__all__ = [
    "SteadyStateKalman",
    "EstimateSequence",
    "ErrorEnergies",
    "solve_riccati",
    "filter_run",
    "smoother_run_recursive",
    "smoother_run_fixed_point",
    "run_estimators_batch",
    "error_energies",
]


@dataclass(frozen=True)
class SteadyStateKalman:
    """Converged steady-state filter quantities for one system.

    ``predicted_cov`` is the steady-state one-step-prediction error covariance,
    ``gain`` the prediction-form Kalman gain, and ``closed_loop`` the stable
    filter matrix ``A - gain @ H.T``.
    """

    system: LinearSystem
    predicted_cov: np.ndarray  # (n, n)
    gain: np.ndarray           # (n, m)
    closed_loop: np.ndarray    # (n, n)
    residual: float
    iterations: int

    @property
    def innovation_cov(self) -> np.ndarray:
        H, R = self.system.H, self.system.R
        return H.T @ self.predicted_cov @ H + R


@dataclass(frozen=True)
class EstimateSequence:
    """State estimates over a horizon; ``kind`` is ``"filter"`` or ``"smoother"``.

    Filter values are one-step predictions (entry k uses measurements before k);
    smoother values condition on the whole horizon.
    """

    kind: str
    values: np.ndarray  # (N, n)

    @property
    def horizon(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class ErrorEnergies:
    """Squared estimation errors of a filter/smoother pair on one trajectory."""

    filter_costs: np.ndarray    # (N,) per-step squared filter error
    smoother_costs: np.ndarray  # (N,)
    filter_total: float
    smoother_total: float
    filter_mse: float
    smoother_mse: float


def solve_riccati(
    sys: LinearSystem, tol: float = 1e-12, max_iter: int = 10**6
) -> SteadyStateKalman:
    """Solve the steady-state prediction Riccati equation by fixed-point iteration.

    Iterates ``S <- A (S - S H (H'SH+R)^-1 H'S) A' + Q`` from ``S = Q``,
    re-symmetrizing each step, until the Frobenius update norm drops below
    ``tol``. Raises :class:`IllConditioned` if the innovation matrix becomes
    numerically untrustworthy and :class:`NoConvergence` on iteration budget.
    """
    A, H, Q, R = sys.A, sys.H, sys.Q, sys.R
    S = Q.copy()
    for it in range(1, max_iter + 1):
        inn = H.T @ S @ H + R
        if np.linalg.cond(inn) > 1e12:
            raise IllConditioned(
                f"innovation covariance condition number exceeds 1e12 at iteration {it}"
            )
        S_next = A @ (S - S @ H @ np.linalg.solve(inn, H.T @ S)) @ A.T + Q
        S_next = 0.5 * (S_next + S_next.T)
        delta = np.linalg.norm(S_next - S, "fro")
        S = S_next
        if delta < tol:
            inn = H.T @ S @ H + R
            gain = A @ S @ H @ np.linalg.inv(inn)
            closed_loop = A - gain @ H.T
            one_more = A @ (S - S @ H @ np.linalg.solve(inn, H.T @ S)) @ A.T + Q
            residual = float(np.linalg.norm(S - 0.5 * (one_more + one_more.T), "fro"))
            for M in (S, gain, closed_loop):
                M.flags.writeable = False
            return SteadyStateKalman(
                system=sys,
                predicted_cov=S,
                gain=gain,
                closed_loop=closed_loop,
                residual=residual,
                iterations=it,
            )
    raise NoConvergence(f"Riccati iteration did not reach {tol} within {max_iter} steps")


def _inv_spd(M: np.ndarray, what: str) -> np.ndarray:
    """Invert a symmetric matrix through its Cholesky factor; error if not PD."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularSigma(f"{what} is singular; smoothing requires it to be invertible")
    L_inv = np.linalg.inv(L)
    return L_inv.T @ L_inv


def _terminal_map(kal: SteadyStateKalman) -> np.ndarray:
    """The matrix ``S (A S)^-1`` mapping the final prediction to the final update."""
    AS = kal.system.A @ kal.predicted_cov
    if np.linalg.cond(AS) > 1e12:
        raise SingularA("A @ predicted_cov is not invertible")
    return kal.predicted_cov @ np.linalg.inv(AS)


def filter_run(
    kal: SteadyStateKalman, meas: np.ndarray, prior: np.ndarray | None = None
) -> EstimateSequence:
    """Run the steady-state filter over a measurement sequence.

    Entry ``k`` of the output is the prediction of ``x[k]`` from measurements
    strictly before ``k``; entry 0 is the prior (zero unless given).
    """
    meas = np.asarray(meas, dtype=float)
    if meas.ndim != 2 or meas.shape[1] != kal.system.m:
        raise LengthMismatch(
            f"measurements must be (N, {kal.system.m}), got {meas.shape}"
        )
    N = meas.shape[0]
    out = np.empty((N, kal.system.n))
    x = np.zeros(kal.system.n) if prior is None else np.asarray(prior, dtype=float)
    for k in range(N):
        out[k] = x
        x = kal.closed_loop @ x + kal.gain @ meas[k]
    return EstimateSequence(kind="filter", values=out)


def smoother_run_recursive(
    kal: SteadyStateKalman, meas: np.ndarray, filter_out: EstimateSequence
) -> EstimateSequence:
    """Backward-recursion smoother seeded from a filter pass with zero prior.

    The terminal smoothed estimate is the filtered update of the last step,
    written through ``S (A S)^-1`` applied to the one-past-the-end prediction;
    earlier steps blend the next smoothed estimate with the next prediction.
    """
    meas = np.asarray(meas, dtype=float)
    N = meas.shape[0]
    if filter_out.horizon != N:
        raise LengthMismatch("filter output and measurements disagree on horizon")
    S = kal.predicted_cov
    S_inv = _inv_spd(S, "predicted_cov")
    J = S @ kal.closed_loop.T @ S_inv
    A_inv = np.linalg.inv(kal.system.A)
    T0 = _terminal_map(kal)

    filt = filter_out.values
    final_pred = kal.closed_loop @ filt[N - 1] + kal.gain @ meas[N - 1]
    out = np.empty_like(filt)
    # The companion term is analytically zero because T0 @ (closed_loop
    # + gain @ H') collapses to the identity; it is kept for fidelity to the
    # update form and costs nothing.
    companion = np.eye(kal.system.n) - T0 @ kal.closed_loop - T0 @ kal.gain @ kal.system.H.T
    out[N - 1] = T0 @ final_pred + companion @ filt[N - 1]
    for k in range(N - 2, -1, -1):
        out[k] = J @ out[k + 1] + (A_inv - J) @ filt[k + 1]
    return EstimateSequence(kind="smoother", values=out)


def smoother_run_fixed_point(kal: SteadyStateKalman, meas: np.ndarray) -> EstimateSequence:
    """Innovations-driven smoother: each anchor accumulates gained innovations.

    For anchor j the estimate is the filter prediction plus
    ``sum_k G[k-j] (z[k] - H' xhat[k|k-1])`` over k >= j, with lag gains
    ``G[p] = S (closed_loop')^p (A S)^-1 K``. Runs an internal zero-prior
    filter pass to form the innovations.
    """
    meas = np.asarray(meas, dtype=float)
    N = meas.shape[0]
    filt = filter_run(kal, meas).values
    innov = meas - filt @ kal.system.H  # z[k] - H' xhat[k|k-1]

    AS = kal.system.A @ kal.predicted_cov
    if np.linalg.cond(AS) > 1e12:
        raise SingularA("A @ predicted_cov is not invertible")
    AS_inv = np.linalg.inv(AS)
    gains = np.empty((N, kal.system.n, kal.system.m))
    power = np.eye(kal.system.n)
    for p in range(N):
        gains[p] = kal.predicted_cov @ power @ AS_inv @ kal.gain
        power = power @ kal.closed_loop.T

    out = np.empty_like(filt)
    for j in range(N):
        corr = np.zeros(kal.system.n)
        for k in range(j, N):
            corr += gains[k - j] @ innov[k]
        out[j] = filt[j] + corr
    return EstimateSequence(kind="smoother", values=out)


def run_estimators_batch(
    kal: SteadyStateKalman, meas_batch: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized zero-prior filter + recursive smoother over (count, N, m) input.

    Returns ``(filtered, smoothed)`` arrays of shape (count, N, n). Row i equals
    the single-sequence functions run on ``meas_batch[i]``.
    """
    meas_batch = np.asarray(meas_batch, dtype=float)
    count, N, _ = meas_batch.shape
    n = kal.system.n
    At, K = kal.closed_loop, kal.gain

    filt = np.empty((count, N, n))
    x = np.zeros((count, n))
    for k in range(N):
        filt[:, k] = x
        x = x @ At.T + meas_batch[:, k] @ K.T
    final_pred = x

    S_inv = _inv_spd(kal.predicted_cov, "predicted_cov")
    J = kal.predicted_cov @ At.T @ S_inv
    A_inv = np.linalg.inv(kal.system.A)
    T0 = _terminal_map(kal)
    companion = np.eye(n) - T0 @ At - T0 @ K @ kal.system.H.T

    smth = np.empty_like(filt)
    smth[:, N - 1] = final_pred @ T0.T + filt[:, N - 1] @ companion.T
    blend = (A_inv - J).T
    for k in range(N - 2, -1, -1):
        smth[:, k] = smth[:, k + 1] @ J.T + filt[:, k + 1] @ blend
    return filt, smth


def error_energies(
    traj: Trajectory, filt: EstimateSequence, smth: EstimateSequence
) -> ErrorEnergies:
    """Per-step squared errors and horizon MSEs of both estimators vs true states."""
    N = traj.horizon
    if filt.horizon != N or smth.horizon != N:
        raise LengthMismatch(
            f"horizons disagree: trajectory {N}, filter {filt.horizon}, smoother {smth.horizon}"
        )
    e_f = traj.states - filt.values
    e_s = traj.states - smth.values
    cf = np.sum(e_f**2, axis=1)
    cs = np.sum(e_s**2, axis=1)
    return ErrorEnergies(
        filter_costs=cf,
        smoother_costs=cs,
        filter_total=float(cf.sum()),
        smoother_total=float(cs.sum()),
        filter_mse=float(cf.mean()),
        smoother_mse=float(cs.mean()),
    )
