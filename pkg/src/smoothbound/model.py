"""Linear time-invariant systems, trajectory simulation, and measurement corruption.

The model is

    x[k+1] = A x[k] + w[k],      w ~ N(0, Q)
    z[k]   = H' x[k] + v[k],     v ~ N(0, R)

with an optional unmodeled input ``u[k]`` that corrupts what the estimators
receive: ``ztilde[k] = z[k] + H' u[k]``. The estimators never see ``u``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NonPSDNoise,
    SingularA,
    UnstableSystem,
)
from .rngstream import derive_seed_sequence

__all__ = [
    "LinearSystem",
    "Trajectory",
    "TrajectoryBatch",
    "Injector",
    "GammaEstimate",
    "validate_system",
    "system_from_dict",
    "system_to_dict",
    "nonlinear_injector",
    "simulate",
    "simulate_batch",
    "stationary_state_covariance",
    "measure_gamma",
]

STABILITY_MARGIN = 1e-9
SYMMETRY_TOL = 1e-10
DEFAULT_BURN_IN = 200


@dataclass(frozen=True)
class LinearSystem:
    """A validated, asymptotically stable linear-Gaussian system.

    ``H`` is stored in its n-by-m orientation and applied transposed in the
    measurement map, so ``z = H.T @ x + v``.
    """

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True)
class Trajectory:
    """One simulated run: states, clean and corrupted measurements, adversary input."""

    states: np.ndarray          # (N, n)
    clean_meas: np.ndarray      # (N, m)
    corrupted_meas: np.ndarray  # (N, m)
    adversary: np.ndarray       # (N, n)

    @property
    def horizon(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class TrajectoryBatch:
    """A stack of independently seeded trajectories with shared shapes."""

    states: np.ndarray          # (count, N, n)
    clean_meas: np.ndarray      # (count, N, m)
    corrupted_meas: np.ndarray  # (count, N, m)
    adversary: np.ndarray       # (count, N, n)

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def row(self, i: int) -> Trajectory:
        return Trajectory(
            states=self.states[i],
            clean_meas=self.clean_meas[i],
            corrupted_meas=self.corrupted_meas[i],
            adversary=self.adversary[i],
        )


@dataclass(frozen=True)
class Injector:
    """Maps (step index, batch of states) to the unmodeled input ``u``.

    Kinds:
      * ``none`` — u = 0.
      * ``nonlinear_square`` — the cross-coupled one-sided square law
        (2-state systems only), see :func:`nonlinear_injector`.
      * ``custom_table`` — a fixed per-step table of inputs, independent of
        the state; used to replay a chosen adversary sequence.
    """

    kind: str
    table: np.ndarray | None = field(default=None)

    @staticmethod
    def none() -> "Injector":
        return Injector(kind="none")

    @staticmethod
    def nonlinear_square() -> "Injector":
        return Injector(kind="nonlinear_square")

    @staticmethod
    def custom_table(table: np.ndarray) -> "Injector":
        table = np.atleast_2d(np.asarray(table, dtype=float))
        return Injector(kind="custom_table", table=table)

    def apply(self, step: int, states: np.ndarray) -> np.ndarray:
        """Inputs for a (count, n) batch of states at recorded step ``step``."""
        if self.kind == "none":
            return np.zeros_like(states)
        if self.kind == "nonlinear_square":
            return _square_law(states)
        if self.kind == "custom_table":
            if self.table is None or step >= self.table.shape[0]:
                raise DimensionMismatch(
                    f"custom table has no entry for step {step}"
                )
            row = self.table[step]
            if row.shape[0] != states.shape[1]:
                raise DimensionMismatch(
                    f"table row has dimension {row.shape[0]}, state has {states.shape[1]}"
                )
            return np.broadcast_to(row, states.shape).copy()
        raise ValueError(f"unknown injector kind {self.kind!r}")


@dataclass(frozen=True)
class GammaEstimate:
    """Per-step unmodeled-input energy estimate with its standard error."""

    value: float
    std_err: float
    num_samples: int
    num_chunks: int


def _as_matrix(M, name: str, shape: tuple[int, int]) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.shape != shape:
        raise DimensionMismatch(f"{name} has shape {M.shape}, expected {shape}")
    return M


def _check_sym_psd(M: np.ndarray, name: str, *, definite: bool) -> None:
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > SYMMETRY_TOL * scale:
        raise NonPSDNoise(f"{name} is not symmetric within tolerance {SYMMETRY_TOL}")
    eigmin = float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())
    if definite:
        if eigmin <= SYMMETRY_TOL * scale:
            raise NonPSDNoise(f"{name} must be positive definite (min eigenvalue {eigmin:g})")
    elif eigmin < -SYMMETRY_TOL * scale:
        raise NonPSDNoise(f"{name} must be positive semidefinite (min eigenvalue {eigmin:g})")


def validate_system(A, H, Q, R) -> LinearSystem:
    """Validate matrices and freeze them into a :class:`LinearSystem`.

    Raises :class:`UnstableSystem` if any eigenvalue modulus of ``A`` reaches
    ``1 - 1e-9``, :class:`SingularA` if ``A`` is not safely invertible, and
    :class:`NonPSDNoise` if ``Q`` (PSD) or ``R`` (PD) fails its check.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != n:
        raise DimensionMismatch(f"H must have {n} rows, got shape {H.shape}")
    m = H.shape[1]
    Q = _as_matrix(Q, "Q", (n, n))
    R = _as_matrix(R, "R", (m, m))

    moduli = np.abs(np.linalg.eigvals(A))
    if moduli.max() >= 1.0 - STABILITY_MARGIN:
        raise UnstableSystem(
            f"spectral radius {moduli.max():.12g} is not strictly below 1"
        )
    if np.linalg.cond(A) > 1e12:
        raise SingularA("A is singular or too ill-conditioned to invert")
    _check_sym_psd(Q, "Q", definite=False)
    _check_sym_psd(R, "R", definite=True)

    parts = tuple(M.copy() for M in (A, H, Q, R))
    for M in parts:
        M.flags.writeable = False
    return LinearSystem(*parts)


def system_from_dict(doc: dict) -> LinearSystem:
    """Build a validated system from a JSON-style dict with A, H, Q, R."""
    missing = [k for k in ("A", "H", "Q", "R") if k not in doc]
    if missing:
        raise DimensionMismatch(f"system document missing fields: {missing}")
    return validate_system(doc["A"], doc["H"], doc["Q"], doc["R"])


def system_to_dict(sys: LinearSystem) -> dict:
    return {
        "A": sys.A.tolist(),
        "H": sys.H.tolist(),
        "Q": sys.Q.tolist(),
        "R": sys.R.tolist(),
    }


def _square_law(states: np.ndarray) -> np.ndarray:
    if states.shape[-1] != 2:
        raise DimensionMismatch(
            f"square-law injector is defined for 2-state systems, got n={states.shape[-1]}"
        )
    u = np.zeros_like(states)
    u[..., 0] = np.where(states[..., 1] > 0.0, states[..., 1] ** 2, 0.0)
    u[..., 1] = np.where(states[..., 0] > 0.0, states[..., 0] ** 2, 0.0)
    return u


def nonlinear_injector(x: np.ndarray) -> np.ndarray:
    """One-sided square-law input for a single 2-vector state.

    Component 0 responds to positive values of state 1 and vice versa:
    ``u[0] = x[1]**2 if x[1] > 0 else 0``, ``u[1] = x[0]**2 if x[0] > 0 else 0``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (2,):
        raise DimensionMismatch(f"expected a 2-vector, got shape {x.shape}")
    return _square_law(x[None, :])[0]


def _psd_factor(M: np.ndarray) -> np.ndarray:
    """A factor L with L @ L.T = M for symmetric PSD M (works when singular)."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def stationary_state_covariance(
    sys: LinearSystem, tol: float = 1e-12, max_iter: int = 10**6
) -> np.ndarray:
    """Solve P = A P A' + Q by fixed-point iteration from P1 = Q."""
    P = sys.Q.copy()
    for _ in range(max_iter):
        P_next = sys.A @ P @ sys.A.T + sys.Q
        P_next = 0.5 * (P_next + P_next.T)
        if np.linalg.norm(P_next - P, "fro") < tol:
            return P_next
        P = P_next
    raise NoConvergence(
        f"stationary covariance iteration did not reach residual {tol} in {max_iter} steps"
    )


def _resolve_init_cov(sys: LinearSystem, init) -> np.ndarray:
    if isinstance(init, str):
        if init == "stationary":
            return stationary_state_covariance(sys)
        if init == "zero":
            return np.zeros((sys.n, sys.n))
        raise ValueError(f"unknown init spec {init!r}; use 'stationary', 'zero', or a covariance")
    cov = _as_matrix(init, "initial covariance", (sys.n, sys.n))
    return cov


def _simulate_stacked(
    sys: LinearSystem,
    horizon: int,
    injector: Injector,
    seed_seqs: list[np.random.SeedSequence],
    init,
    burn_in: int,
) -> TrajectoryBatch:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n, m = sys.n, sys.m
    count = len(seed_seqs)
    total = horizon + burn_in

    L0 = _psd_factor(_resolve_init_cov(sys, init))
    LQ = _psd_factor(sys.Q)
    LR = _psd_factor(sys.R)

    # Per-trajectory streams: draw order (x0, process noise, measurement noise)
    # is part of the reproducibility contract.
    x0 = np.empty((count, n))
    W = np.empty((count, total, n))
    V = np.empty((count, total, m))
    for i, ss in enumerate(seed_seqs):
        gen = np.random.Generator(np.random.Philox(ss))
        x0[i] = L0 @ gen.standard_normal(n)
        W[i] = gen.standard_normal((total, n)) @ LQ.T
        V[i] = gen.standard_normal((total, m)) @ LR.T

    X = np.empty((count, horizon, n))
    Z = np.empty((count, horizon, m))
    U = np.empty((count, horizon, n))
    x = x0
    for k in range(total):
        if k >= burn_in:
            rec = k - burn_in
            X[:, rec] = x
            Z[:, rec] = x @ sys.H + V[:, k]
            U[:, rec] = injector.apply(rec, x)
        x = x @ sys.A.T + W[:, k]
    Zt = Z + U @ sys.H
    for arr in (X, Z, Zt, U):
        arr.flags.writeable = False
    return TrajectoryBatch(states=X, clean_meas=Z, corrupted_meas=Zt, adversary=U)


def simulate(
    sys: LinearSystem,
    horizon: int,
    injector: Injector,
    seed,
    *,
    init="stationary",
    burn_in: int = 0,
) -> Trajectory:
    """Simulate one trajectory; deterministic given the seed.

    ``init`` selects the x0 distribution: ``"stationary"`` (solves the state
    covariance fixed point), ``"zero"``, or an explicit covariance matrix.
    ``burn_in`` extra steps are simulated and discarded before recording.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else derive_seed_sequence(int(seed))
    return _simulate_stacked(sys, horizon, injector, [ss], init, burn_in).row(0)


def simulate_batch(
    sys: LinearSystem,
    horizon: int,
    count: int,
    injector: Injector,
    root_seed: int,
    *,
    path: tuple = ("trajectory",),
    init="stationary",
    burn_in: int = 0,
) -> TrajectoryBatch:
    """Simulate ``count`` independent trajectories with derived per-row streams.

    Row ``i`` is bit-identical to ``simulate(..., seed=derive_seed_sequence(
    root_seed, *path, i))``, so batching never changes results.
    """
    seqs = [derive_seed_sequence(root_seed, *path, i) for i in range(count)]
    return _simulate_stacked(sys, horizon, injector, seqs, init, burn_in)


def measure_gamma(
    sys: LinearSystem,
    injector: Injector,
    num_samples: int,
    seed: int,
    *,
    chunk_length: int = 500,
    burn_in: int = DEFAULT_BURN_IN,
) -> GammaEstimate:
    """Estimate the per-step energy of the unmodeled input under stationary states.

    Simulates independent burned-in chunks and averages ``||u[k]||^2`` over all
    recorded steps; the standard error comes from the spread of per-chunk means,
    which keeps it honest in the presence of within-chunk correlation.
    Intended sample sizes are 1e4 and up.
    """
    if num_samples < 1:
        raise ValueError("num_samples must be positive")
    chunk_length = min(chunk_length, num_samples)
    num_chunks = (num_samples + chunk_length - 1) // chunk_length
    batch = simulate_batch(
        sys,
        chunk_length,
        num_chunks,
        injector,
        seed,
        path=("gamma", "chunk"),
        init="stationary",
        burn_in=burn_in,
    )
    energies = np.sum(batch.adversary**2, axis=2)  # (num_chunks, chunk_length)
    chunk_means = energies.mean(axis=1)
    value = float(energies.mean())
    if num_chunks > 1:
        std_err = float(chunk_means.std(ddof=1) / np.sqrt(num_chunks))
    else:
        std_err = float(energies.std(ddof=1) / np.sqrt(energies.size))
    return GammaEstimate(
        value=value,
        std_err=std_err,
        num_samples=int(energies.size),
        num_chunks=num_chunks,
    )
