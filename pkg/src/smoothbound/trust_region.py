"""Global minimization of a (possibly indefinite) quadratic over the unit ball.

Solves ``min u'Bu + 2b'u  s.t. ||u|| <= 1`` exactly through its scalar dual:
the multiplier solves ``sum_i c_i^2/(w_i + lam)^2 = 1`` over
``lam >= max(-w_min, 0)``, where (w_i, v_i) are eigenpairs of B and
``c_i = v_i' b``. Strong duality holds for this problem even when B is
indefinite, so the recovered point is a certified global minimizer. The
degenerate branch (linear term orthogonal to the bottom eigenspace with an
interior secular solution) is handled by augmenting with a bottom-eigenspace
direction to reach the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NumericalBreakdown, PoleHit

__all__ = [
    "TrustRegionProblem",
    "TrustRegionSolution",
    "eig_sym",
    "dual_value",
    "solve_unit_ball",
]

HARD_CASE_REL_TOL = 1e-10   # |c_i| below this times ||b|| counts as zero
EIGENSPACE_REL_TOL = 1e-10  # eigenvalues this close to the bottom share its space
PSD_TOL = 1e-12


@dataclass(frozen=True)
class TrustRegionProblem:
    """Quadratic ``u' matrix u + 2 linear' u``; the matrix is symmetrized on ingest."""

    matrix: np.ndarray  # (d, d), symmetric
    linear: np.ndarray  # (d,)

    @staticmethod
    def ingest(B, b) -> "TrustRegionProblem":
        B = np.asarray(B, dtype=float)
        b = np.asarray(b, dtype=float).reshape(-1)
        if B.ndim != 2 or B.shape[0] != B.shape[1] or B.shape[0] != b.shape[0]:
            raise ValueError(f"incompatible shapes {B.shape} and {b.shape}")
        return TrustRegionProblem(matrix=0.5 * (B + B.T), linear=b)

    def objective(self, u: np.ndarray) -> float:
        return float(u @ self.matrix @ u + 2.0 * self.linear @ u)


@dataclass(frozen=True)
class TrustRegionSolution:
    u_star: np.ndarray
    lambda_star: float
    value: float
    kkt_residual: float
    case: str  # "interior" | "boundary" | "hard_case"


def eig_sym(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvector columns of a symmetric matrix."""
    B = np.asarray(B, dtype=float)
    try:
        w, V = np.linalg.eigh(0.5 * (B + B.T))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"symmetric eigendecomposition failed: {exc}")
    return w, V


def dual_value(prob: TrustRegionProblem, lam: float) -> float:
    """Evaluate the scalar dual ``sum_i c_i^2/(w_i + lam) + lam``.

    Terms with zero weight at a zero denominator are skipped; a nonzero weight
    at a zero denominator is a pole and raises :class:`PoleHit`.
    """
    w, V = eig_sym(prob.matrix)
    c = V.T @ prob.linear
    d = w + lam
    scale = max(1.0, float(np.abs(w).max()), abs(lam))
    zero_den = np.abs(d) <= 1e-15 * scale
    zero_wt = np.abs(c) <= 1e-14 * max(1.0, float(np.linalg.norm(c)))
    if np.any(zero_den & ~zero_wt):
        raise PoleHit(f"dual evaluated at a pole: lambda = {lam}")
    keep = ~zero_den
    return float(np.sum(c[keep] ** 2 / d[keep]) + lam)


def _secular_root(
    w: np.ndarray, c2: np.ndarray, lam_lb: float, b_norm: float, B_fro: float
) -> float:
    """Root of ``sum c_i^2/(w_i+lam)^2 = 1`` on (lam_lb, inf).

    The left side is decreasing and convex in lam, so a Newton iterate started
    left of the root stays left and increases monotonically; a bracket guards
    against non-finite evaluations near lam_lb.
    """

    def psi(lam: float) -> float:
        d = w + lam
        with np.errstate(divide="ignore", over="ignore"):
            return float(np.sum(c2 / d**2)) - 1.0

    def dpsi(lam: float) -> float:
        d = w + lam
        return float(-2.0 * np.sum(c2 / d**3))

    hi = lam_lb + b_norm + B_fro + 1.0
    while psi(hi) > 0.0:
        hi = 2.0 * hi + 1.0
    lo = lam_lb
    lam = lo
    psi_lo = psi(lo)
    if not np.isfinite(psi_lo):
        # Start strictly inside the bracket; bisection will recover.
        lam = lo + 0.5 * (hi - lo)
    for _ in range(200):
        val = psi(lam)
        if np.isfinite(val):
            if abs(val) <= 1e-14:
                return lam
            if val > 0.0:
                lo = lam
            else:
                hi = lam
            step_ok = False
            if val > 0.0:
                der = dpsi(lam)
                if np.isfinite(der) and der < 0.0:
                    cand = lam - val / der
                    if lo < cand < hi:
                        lam = cand
                        step_ok = True
            if not step_ok:
                lam = 0.5 * (lo + hi)
        else:
            lo = lam
            lam = 0.5 * (lo + hi)
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return lam


def solve_unit_ball(prob: TrustRegionProblem, tol: float = 1e-8) -> TrustRegionSolution:
    """Globally minimize the quadratic over the unit ball.

    Returns the minimizer with its multiplier, objective value, KKT residual
    ``||(B + lam I)u + b||`` and case label. Raises
    :class:`NumericalBreakdown` if the KKT residual exceeds
    ``tol * (1 + ||b||)``.
    """
    B, b = prob.matrix, prob.linear
    if not (np.all(np.isfinite(B)) and np.all(np.isfinite(b))):
        raise ValueError("problem contains non-finite entries")
    d = b.shape[0]
    w, V = eig_sym(B)
    c = V.T @ b
    b_norm = float(np.linalg.norm(b))
    eig_scale = max(1.0, float(np.abs(w).max()))
    null_tol = PSD_TOL * eig_scale
    hard_tol = HARD_CASE_REL_TOL * b_norm
    lam_min = float(w[0])
    lam_lb = max(-lam_min, 0.0)

    def finish(coef: np.ndarray, lam: float, case: str) -> TrustRegionSolution:
        u = V @ coef
        value = prob.objective(u)
        kkt = float(np.linalg.norm((B + lam * np.eye(d)) @ u + b))
        if kkt > tol * (1.0 + b_norm):
            raise NumericalBreakdown(
                f"KKT residual {kkt:.3e} above tolerance in case {case!r}"
            )
        return TrustRegionSolution(
            u_star=u, lambda_star=lam, value=value, kkt_residual=kkt, case=case
        )

    # Interior minimizer: only possible when B is PSD and the (pseudo-)inverse
    # candidate is feasible.
    if lam_min >= -null_tol:
        coef = np.zeros(d)
        admissible = True
        for i in range(d):
            if w[i] > null_tol:
                coef[i] = -c[i] / w[i]
            elif abs(c[i]) > hard_tol:
                admissible = False
                break
        if admissible and float(np.linalg.norm(coef)) <= 1.0:
            return finish(coef, 0.0, "interior")

    bottom = w <= lam_min + EIGENSPACE_REL_TOL * eig_scale
    bottom_weightless = bool(np.all(np.abs(c[bottom]) <= hard_tol))
    c_eff = c.copy()
    if bottom_weightless:
        # Thresholding below the documented cutoff; the KKT check at the end
        # bounds the error this introduces.
        c_eff[bottom] = 0.0

    d_lb = w + lam_lb
    active = np.abs(c_eff) > 0.0
    with np.errstate(divide="ignore", over="ignore"):
        psi_lb = float(np.sum((c_eff[active] / d_lb[active]) ** 2)) - 1.0 if active.any() else -1.0

    if bottom_weightless and psi_lb <= 0.0:
        coef = np.zeros(d)
        nz = active & ~bottom
        coef[nz] = -c_eff[nz] / d_lb[nz]
        if lam_lb <= 0.0:
            return finish(coef, 0.0, "interior")
        # Degenerate branch: the secular norm never reaches 1, so pad with a
        # bottom-eigenspace direction until the boundary is met.
        gap = 1.0 - float(np.sum(coef**2))
        coef[int(np.argmax(bottom))] = np.sqrt(max(gap, 0.0))
        return finish(coef, lam_lb, "hard_case")

    lam_star = _secular_root(
        w, c_eff**2, lam_lb, b_norm, float(np.linalg.norm(B, "fro"))
    )
    den = w + lam_star
    coef = np.where(np.abs(c_eff) > 0.0, -c_eff / np.where(den == 0.0, 1.0, den), 0.0)
    return finish(coef, lam_star, "boundary")
