"""State-feedback synthesis: LQR, pole placement, and reference scaling.

Both controllers produce a feedback row K for u = N r - K x together
with the precompensation scalar N that makes the closed-loop DC gain
from reference to cart position exactly one, removing steady-state
error without integral action:

    N = [-C (A - B K)^-1 B]^-1

LQR solves the continuous algebraic Riccati equation

    P A + A' P - P B R^-1 B' P + Q = 0

for its stabilizing solution via the Schur decomposition of the
associated Hamiltonian, polished by Newton-Kleinman iterations (each a
Lyapunov solve) until the residual stops improving.  The gain is
K = R^-1 B' P.

Pole placement maps a percent-overshoot / settling-time request onto a
dominant second-order pair

    eps = |ln(PO/100)| / sqrt(pi^2 + ln(PO/100)^2)
    wn  = 4 / (eps ts)
    s   = -eps wn +- wn sqrt(eps^2 - 1)

and parks the remaining poles on the real axis `spread` times farther
left, spaced apart by a configurable factor so they stay numerically
simple.  The gain comes from Ackermann's formula

    K = e_n' Ctrb(A, B)^-1 phi_d(A)

evaluated in extended precision: at state dimension 10 the
controllability matrix has a condition number around 1e17, so the solve
is done with mpmath and only the final K is rounded to float64.  The
controllability conditioning is reported on the result so callers can
judge how much to trust a placement.
"""

from __future__ import annotations

import cmath
import warnings
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy import linalg as _sla

from . import linalg

__all__ = [
    "NotStabilizableError",
    "UncontrollableError",
    "InvalidDesignError",
    "ZeroDcGainError",
    "IllConditionedPlacementWarning",
    "LqrWeights",
    "PoleDesign",
    "Gains",
    "solve_care",
    "lqr_gain",
    "second_order_poles",
    "place_poles",
    "precompensation_gain",
    "pair_poles",
]

CARE_RESIDUAL_RTOL = 1e-7
DC_GAIN_FLOOR = 1e-12
CONDITION_WARN_THRESHOLD = 1e6


class NotStabilizableError(RuntimeError):
    """No stabilizing solution was found (Riccati or placement)."""


class UncontrollableError(RuntimeError):
    """The pair (A, B) is numerically uncontrollable."""


class InvalidDesignError(ValueError):
    """Design request outside its valid range."""


class ZeroDcGainError(ArithmeticError):
    """The closed loop has (numerically) zero DC gain; no finite
    precompensation exists."""


class IllConditionedPlacementWarning(UserWarning):
    """The controllability matrix loses more than ~6 digits; the gain is
    still returned but its placement accuracy is degraded."""


# --------------------------------------------------------------------------
# request / result containers
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LqrWeights:
    """Quadratic cost weights: Q (state, PSD) and R (input, PD)."""

    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        r = np.atleast_2d(np.asarray(self.r, dtype=float))
        if q.shape[0] != q.shape[1]:
            raise ValueError(f"Q must be square, got {q.shape}")
        if r.shape[0] != r.shape[1]:
            raise ValueError(f"R must be square, got {r.shape}")
        if np.abs(q - q.T).max() > 1e-10 * max(1.0, np.abs(q).max()):
            raise ValueError("Q must be symmetric")
        if np.linalg.eigvalsh(0.5 * (q + q.T)).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (r + r.T)).min() <= 0.0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)

    @classmethod
    def position_weighted(
        cls, n_states: int, position_weight: float = 10.0, velocity_weight: float = 1.0
    ) -> "LqrWeights":
        """Diagonal Q putting `position_weight` on every position/angle
        state and `velocity_weight` on every rate, R = [1].  Interleaved
        ordering puts positions at even indices."""
        diag = np.empty(n_states)
        diag[0::2] = position_weight
        diag[1::2] = velocity_weight
        return cls(q=np.diag(diag), r=np.array([[1.0]]))


@dataclass(frozen=True)
class PoleDesign:
    """Percent-overshoot / settling-time request for pole placement.

    spread is the dominant-to-far pole ratio; far poles sit at
    spread * Re(s1) * (1 + far_spacing * k).  A spacing of 0.2 keeps the
    far poles well separated: clustering them any tighter makes the
    closed-loop spectrum so sensitive that rounding K to float64 already
    moves the realized poles by more than 1e-5 relative.
    """

    percent_overshoot: float
    settling_time: float
    spread: float = 10.0
    far_spacing: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.percent_overshoot < 100.0:
            raise InvalidDesignError(
                f"percent overshoot must be in (0, 100), got {self.percent_overshoot}"
            )
        if self.settling_time <= 0.0:
            raise InvalidDesignError(f"settling time must be positive, got {self.settling_time}")
        if self.spread <= 1.0:
            raise InvalidDesignError(f"spread must exceed 1, got {self.spread}")
        if self.far_spacing < 0.0:
            raise InvalidDesignError(f"far_spacing must be >= 0, got {self.far_spacing}")

    def damping_ratio(self) -> float:
        ln_po = np.log(self.percent_overshoot / 100.0)
        return abs(ln_po) / np.sqrt(np.pi**2 + ln_po**2)

    def natural_frequency(self) -> float:
        return 4.0 / (self.damping_ratio() * self.settling_time)


@dataclass(frozen=True, eq=False)
class Gains:
    """Feedback row K, precompensation N and synthesis diagnostics."""

    k: np.ndarray
    n_precomp: float
    method: str
    closed_loop_poles: np.ndarray
    riccati_residual: float | None = None
    ctrb_condition: float | None = None
    placement_error: float | None = None
    ill_conditioned: bool = False

    def to_json_dict(self) -> dict:
        out = {
            "method": self.method,
            "K": [float(v) for v in self.k],
            "N": float(self.n_precomp),
            "closed_loop_poles": [
                [float(p.real), float(p.imag)] for p in self.closed_loop_poles
            ],
        }
        if self.riccati_residual is not None:
            out["residual"] = float(self.riccati_residual)
        if self.ctrb_condition is not None:
            out["ctrb_condition"] = float(self.ctrb_condition)
        if self.placement_error is not None:
            out["placement_error"] = float(self.placement_error)
        if self.ill_conditioned:
            out["ill_conditioned"] = True
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "Gains":
        poles = np.array([complex(re, im) for re, im in data["closed_loop_poles"]])
        return cls(
            k=np.asarray(data["K"], dtype=float),
            n_precomp=float(data["N"]),
            method=data["method"],
            closed_loop_poles=poles,
            riccati_residual=data.get("residual"),
            ctrb_condition=data.get("ctrb_condition"),
            placement_error=data.get("placement_error"),
            ill_conditioned=bool(data.get("ill_conditioned", False)),
        )


# --------------------------------------------------------------------------
# Riccati / LQR
# --------------------------------------------------------------------------


def care_residual(p, a, b, q, r) -> float:
    """Inf-norm of P A + A' P - P B R^-1 B' P + Q."""
    pb = p @ b
    res = p @ a + a.T @ p - pb @ np.linalg.solve(r, pb.T) + q
    return float(np.abs(res).max())


def solve_care(a, b, q, r, refine_steps: int = 6) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Schur decomposition of the Hamiltonian picks out the stable invariant
    subspace; Newton-Kleinman iterations then polish the solution until
    the residual stops improving.  The result satisfies
    ||P A + A' P - P B R^-1 B' P + Q||_inf <= 1e-7 ||Q||_inf.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = a.shape[0]

    brb = b @ np.linalg.solve(r, b.T)
    ham = np.block([[a, -brb], [-q, -a.T]])
    _, z, sdim = _sla.schur(ham, sort="lhp")
    if sdim != n:
        raise NotStabilizableError(
            f"Hamiltonian has {sdim} stable eigenvalues, expected {n}; "
            "(A, B) is not stabilizable or the spectrum touches the imaginary axis"
        )
    u1 = z[:n, :n]
    u2 = z[n:, :n]
    p = np.linalg.solve(u1.T, u2.T).T
    p = 0.5 * (p + p.T)

    best = p
    best_res = care_residual(p, a, b, q, r)
    for _ in range(refine_steps):
        k = np.linalg.solve(r, b.T @ p)
        a_cl = a - b @ k
        if np.linalg.eigvals(a_cl).real.max() >= 0.0:
            break
        p = _sla.solve_continuous_lyapunov(a_cl.T, -(q + k.T @ r @ k))
        p = 0.5 * (p + p.T)
        res = care_residual(p, a, b, q, r)
        if res < best_res:
            best, best_res = p, res
        else:
            break

    bound = CARE_RESIDUAL_RTOL * max(np.abs(q).sum(axis=1).max(), 1e-300)
    if best_res > bound:
        raise NotStabilizableError(
            f"Riccati residual {best_res:.3e} exceeds bound {bound:.3e}"
        )
    k = np.linalg.solve(r, b.T @ best)
    if np.linalg.eigvals(a - b @ k).real.max() >= 0.0:
        raise NotStabilizableError("Riccati solution is not stabilizing")
    return best


def lqr_gain(a, b, weights: LqrWeights, c=None) -> Gains:
    """Optimal state feedback K = R^-1 B' P plus precompensation.

    `c` defaults to picking the first state (the cart position in the
    interleaved ordering).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b_col = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    p = solve_care(a, b_col, weights.q, weights.r)
    k = np.linalg.solve(weights.r, b_col.T @ p).ravel()
    poles = linalg.eigenvalues(a - np.outer(b_col.ravel(), k))
    if poles.real.max() >= 0.0:
        raise NotStabilizableError("LQR closed loop is not stable")
    if c is None:
        c = np.zeros((1, a.shape[0]))
        c[0, 0] = 1.0
    n_pre = precompensation_gain(a, b_col, c, k)
    return Gains(
        k=k,
        n_precomp=n_pre,
        method="lqr",
        closed_loop_poles=poles,
        riccati_residual=care_residual(p, a, b_col, weights.q, weights.r),
    )


# --------------------------------------------------------------------------
# pole placement
# --------------------------------------------------------------------------


def second_order_poles(design: PoleDesign, total: int) -> np.ndarray:
    """Desired closed-loop pole set for a PO/ts request.

    Two dominant poles from the second-order formulas; the remaining
    total - 2 poles real, at spread * Re(s1) * (1 + far_spacing * k).
    The set is closed under conjugation.
    """
    if total < 2:
        raise InvalidDesignError(f"need at least 2 poles, got {total}")
    eps = design.damping_ratio()
    wn = design.natural_frequency()
    root = cmath.sqrt(complex(eps * eps - 1.0))
    s1 = -eps * wn + wn * root
    s2 = -eps * wn - wn * root
    far_base = design.spread * s1.real
    far = [far_base * (1.0 + design.far_spacing * k) for k in range(total - 2)]
    return np.array([s1, s2] + far, dtype=complex)


def _conjugation_closed(poles: np.ndarray, tol: float = 1e-9) -> bool:
    remaining = list(poles)
    while remaining:
        p = remaining.pop()
        if abs(p.imag) <= tol:
            continue
        match = min(range(len(remaining)), key=lambda i: abs(remaining[i] - p.conjugate()),
                    default=None)
        if match is None or abs(remaining[match] - p.conjugate()) > tol * max(1.0, abs(p)):
            return False
        remaining.pop(match)
    return True


def _ackermann_mp(a: np.ndarray, b: np.ndarray, poles: np.ndarray, dps: int) -> np.ndarray:
    """Ackermann's formula in extended precision, rounded to float64."""
    n = a.shape[0]
    with mp.workdps(dps):
        am = mp.matrix(a.tolist())
        # char polynomial coefficients of the desired set, highest first
        coeffs = [mp.mpc(1)]
        for p in poles:
            pm = mp.mpc(p.real, p.imag)
            nxt = [mp.mpc(0)] * (len(coeffs) + 1)
            for i, cc in enumerate(coeffs):
                nxt[i] += cc
                nxt[i + 1] -= cc * pm
            coeffs = nxt
        coeffs = [mp.re(cc) for cc in coeffs]  # conjugation-closed set -> real

        ctrb = mp.zeros(n, n)
        v = mp.matrix([[float(x)] for x in b])
        for col in range(n):
            for row in range(n):
                ctrb[row, col] = v[row]
            v = am * v

        # phi_d(A) by Horner: ((I*c0*A + c1 I) A + ...) with monic c0 = 1
        phi = mp.eye(n)
        for cc in coeffs[1:]:
            phi = phi * am + cc * mp.eye(n)

        e_last = mp.zeros(n, 1)
        e_last[n - 1] = 1
        zrow = mp.lu_solve(ctrb.T, e_last)
        km = zrow.T * phi
        return np.array([float(km[0, j]) for j in range(n)])


def place_poles(a, b, desired, c=None, dps: int = 50) -> Gains:
    """Single-input pole placement by Ackermann's formula.

    Requires (A, B) controllable and a conjugation-closed desired set of
    size n.  The controllability conditioning (singular-value ratio of
    the column-normalized controllability matrix) is reported on the
    result; when it loses more than ~6 digits the gain is still returned
    but flagged and a warning is emitted.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b_flat = np.asarray(b, dtype=float).ravel()
    n = a.shape[0]
    desired = np.asarray(desired, dtype=complex)
    if desired.shape != (n,):
        raise ValueError(f"need exactly {n} desired poles, got {desired.shape}")
    if not _conjugation_closed(desired):
        raise InvalidDesignError("desired pole set is not closed under conjugation")
    if desired.real.max() >= 0.0:
        raise InvalidDesignError("desired poles must lie strictly in the left half plane")

    rank, sv_ratio = linalg.controllability_rank(a, b_flat)
    if rank < n:
        raise UncontrollableError(
            f"controllability rank {rank} < {n} (sv ratio {sv_ratio:.3e})"
        )
    condition = 1.0 / sv_ratio
    flagged = condition > CONDITION_WARN_THRESHOLD
    if flagged:
        warnings.warn(
            f"controllability matrix condition ~{condition:.2e}; placement "
            "accuracy is degraded",
            IllConditionedPlacementWarning,
            stacklevel=2,
        )

    k = _ackermann_mp(a, b_flat, desired, dps=dps)
    poles = linalg.eigenvalues(a - np.outer(b_flat, k))
    if poles.real.max() >= 0.0:
        raise NotStabilizableError(
            f"computed placement is unstable (max Re = {poles.real.max():.3e})"
        )
    err = pair_poles(poles, desired)
    if c is None:
        c = np.zeros((1, n))
        c[0, 0] = 1.0
    n_pre = precompensation_gain(a, b_flat, c, k)
    return Gains(
        k=k,
        n_precomp=n_pre,
        method="pole-placement",
        closed_loop_poles=poles,
        ctrb_condition=condition,
        placement_error=err,
        ill_conditioned=flagged,
    )


def precompensation_gain(a, b, c, k) -> float:
    """Reference scaling N = [-C (A - B K)^-1 B]^-1.

    With u = N r - K x and a step reference of amplitude rho, the linear
    closed loop settles at output exactly rho.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b_flat = np.asarray(b, dtype=float).ravel()
    c_row = np.asarray(c, dtype=float).reshape(1, -1)
    k_row = np.asarray(k, dtype=float).ravel()
    a_cl = a - np.outer(b_flat, k_row)
    x = linalg.lu_solve(a_cl, b_flat.reshape(-1, 1))
    dc = -float(c_row @ x)
    if abs(dc) < DC_GAIN_FLOOR:
        raise ZeroDcGainError(f"closed-loop DC gain {dc:.3e} below {DC_GAIN_FLOOR:g}")
    return 1.0 / dc


def pair_poles(computed, desired) -> float:
    """Greedy minimal-distance pairing; returns the worst relative error
    max |computed - desired| / max(1, |desired|) over the matching."""
    got = list(np.asarray(computed, dtype=complex))
    worst = 0.0
    for want in np.asarray(desired, dtype=complex):
        dists = [abs(g - want) for g in got]
        i = int(np.argmin(dists))
        worst = max(worst, dists[i] / max(1.0, abs(want)))
        got.pop(i)
    return worst
