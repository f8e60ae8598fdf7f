"""Linearization of the chain dynamics about an equilibrium.

The upright chain (all coordinates zero, zero force) and the hanging
chain (first link angle pi, zero force) are exact equilibria of the
model; `linearize` builds the state-space quadruple (A, B, C, D) about
one of them by central finite differences of the forward dynamics,
then permutes the result into the interleaved state ordering
``[x, xdot, th1, th1dot, ...]``.

The plant output is the cart position alone, so C picks the first
interleaved state and D = [0].

The cart mass is the one physical parameter the published reference
data for the four-link benchmark does not state.  `calibrate_cart_mass`
recovers it from the cart-acceleration input gain (the second entry of
B), which equals the (0,0) entry of the inverse mass matrix at the
upright configuration and is strictly decreasing in the cart mass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .dynamics import (
    PlantParams,
    State,
    forward_dynamics,
    mass_matrix,
    paper_order_indices,
)

__all__ = [
    "StateSpace",
    "NonFiniteDerivativeError",
    "find_equilibrium",
    "jacobian_linearize",
    "linearize",
    "calibrate_cart_mass",
]

EQUILIBRIUM_RESIDUAL_TOL = 1e-10


class NonFiniteDerivativeError(ArithmeticError):
    """A finite-difference quotient came out NaN or infinite."""


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Linear model xdot = A x + B u, y = C x in interleaved ordering,
    valid near the operating point (x_eq, u_eq)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    x_eq: np.ndarray
    u_eq: float
    ordering: str = "interleaved"

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigenvalues(self.a)

    def summary(self) -> dict:
        rank, ratio = linalg.controllability_rank(self.a, self.b)
        eigs = self.eigenvalues()
        return {
            "n_states": int(self.n_states),
            "ordering": self.ordering,
            "operating_point": {
                "x_eq": [float(v) for v in self.x_eq],
                "u_eq": float(self.u_eq),
            },
            "open_loop_eigenvalues": [[float(e.real), float(e.imag)] for e in eigs],
            "controllability_rank": rank,
            "controllability_sv_ratio": ratio,
        }

    def save(self, outdir) -> None:
        """Write A.csv, B.csv, C.csv, D.csv and summary.json."""
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        linalg.save_matrix(outdir / "A.csv", self.a)
        linalg.save_matrix(outdir / "B.csv", self.b.reshape(-1, 1))
        linalg.save_matrix(outdir / "C.csv", self.c.reshape(1, -1))
        linalg.save_matrix(outdir / "D.csv", self.d.reshape(1, 1))
        with open(outdir / "summary.json", "w") as fh:
            json.dump(self.summary(), fh, indent=2)
            fh.write("\n")


def find_equilibrium(params: PlantParams, which: str = "upright") -> tuple[State, float]:
    """Equilibrium state and force for the chain.

    'upright': all coordinates zero (potential-energy maximum);
    'hanging': first link angle pi, the rest aligned (minimum).
    Both have zero equilibrium force; the result is validated against
    the forward dynamics to EQUILIBRIUM_RESIDUAL_TOL.
    """
    if which == "upright":
        eq = State.upright(params.n)
    elif which == "hanging":
        eq = State.hanging(params.n)
    else:
        raise ValueError(f"which must be 'upright' or 'hanging', got {which!r}")
    residual = np.abs(forward_dynamics(eq, 0.0, params)).max()
    if residual > EQUILIBRIUM_RESIDUAL_TOL:
        raise RuntimeError(f"{which} equilibrium residual {residual:.3e} too large")
    return eq, 0.0


def jacobian_linearize(f, x_eq, u_eq: float, h_floor: float = 1e-6):
    """Central-difference Jacobians (df/dx, df/du) of f(x, u) at a point.

    Per-coordinate step h_i = max(h_floor, h_floor * |x_i|); second-order
    accurate, which the smooth trigonometric dynamics reward with ~1e-9
    relative error at the default step.
    """
    x_eq = np.asarray(x_eq, dtype=float)
    nx = x_eq.shape[0]
    a = np.empty((nx, nx))
    for j in range(nx):
        h = max(h_floor, h_floor * abs(x_eq[j]))
        step = np.zeros(nx)
        step[j] = h
        a[:, j] = (f(x_eq + step, u_eq) - f(x_eq - step, u_eq)) / (2.0 * h)
    hu = max(h_floor, h_floor * abs(u_eq))
    b = (f(x_eq, u_eq + hu) - f(x_eq, u_eq - hu)) / (2.0 * hu)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NonFiniteDerivativeError("non-finite difference quotient in Jacobian")
    return a, b


def linearize(params: PlantParams, which: str = "upright", h_floor: float = 1e-6) -> StateSpace:
    """State-space quadruple about an equilibrium, interleaved ordering."""
    eq, u_eq = find_equilibrium(params, which)
    x_eq = eq.as_vector()

    def f(x, u):
        return forward_dynamics(x, u, params)

    a_block, b_block = jacobian_linearize(f, x_eq, u_eq, h_floor=h_floor)
    perm = paper_order_indices(params.n)
    a = a_block[np.ix_(perm, perm)]
    b = b_block[perm]
    nx = params.n_states
    c = np.zeros((1, nx))
    c[0, 0] = 1.0
    d = np.zeros((1, 1))
    return StateSpace(a=a, b=b, c=c, d=d, x_eq=x_eq[perm], u_eq=u_eq)


def cart_input_gain(cart_mass: float, masses, lengths) -> float:
    """Upright cart acceleration per unit force: [M(0)^-1]_{00}."""
    n = len(masses)
    params = PlantParams(n=n, cart_mass=cart_mass, masses=tuple(masses), lengths=tuple(lengths))
    m0 = mass_matrix(np.zeros(n + 1), params)
    e0 = np.zeros((n + 1, 1))
    e0[0, 0] = 1.0
    return float(linalg.lu_solve(m0, e0)[0, 0])


def calibrate_cart_mass(
    masses,
    lengths,
    target_gain: float,
    initial: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 60,
) -> float:
    """Cart mass whose upright input gain matches `target_gain`.

    Scalar secant iteration on g(M) = [M(0)^-1]_{00} - target; g is
    smooth and strictly decreasing in M, so the iteration converges from
    any reasonable bracket.
    """
    def g(mc):
        return cart_input_gain(mc, masses, lengths) - target_gain

    m0, m1 = initial, initial * 1.5
    g0, g1 = g(m0), g(m1)
    for _ in range(max_iter):
        if g1 == g0:
            break
        m2 = m1 - g1 * (m1 - m0) / (g1 - g0)
        m2 = max(m2, 1e-6)
        if abs(m2 - m1) < tol * max(1.0, abs(m1)):
            return m2
        m0, g0, m1 = m1, g1, m2
        g1 = g(m1)
    raise RuntimeError(
        f"cart-mass calibration did not converge to {tol:g} in {max_iter} iterations"
    )
