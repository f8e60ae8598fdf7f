"""Nonlinear dynamics of an n-link inverted pendulum on a cart.

Model
-----
A cart of mass ``cart_mass`` slides on a horizontal rail; a serial chain
of n uniform thin rods hangs off it through frictionless revolute
joints.  The input is a horizontal force on the cart.  Generalized
coordinates are ``q = [x, th_1, ..., th_n]`` where ``x`` is the cart
position and ``th_i`` is the angle of link i measured *relative to link
i-1* (``th_1`` relative to the upward vertical), positive
counterclockwise.  All angles zero means the chain is upright.

Each link is a uniform rod of mass m_i and length l_i, so its inertia
about its own center of mass is m_i l_i^2 / 12.  The center of mass of
link i sits at

    x_i = x - sum_{j<i} l_j sin(phi_j) - (l_i/2) sin(phi_i)
    y_i =     sum_{j<i} l_j cos(phi_j) + (l_i/2) cos(phi_i)

with phi_i = th_1 + ... + th_i the absolute angle of link i.  Height is
measured from the cart rail, which is the zero of potential energy.

Equations of motion
-------------------
The Lagrangian route gives the compact form

    M(q) qdd + C(q, qd) qd + D qd + G(q) = F_gen

with M(q) the kinetic-energy Hessian in qd, G(q) the gradient of the
potential, D an optional viscous damping matrix, and F_gen the
generalized force ``[F, tau_1, ..., tau_n]``.  Rather than transcribing
closed-form trigonometric expansions (error-prone and n-specific), all
three state-dependent terms are assembled from the per-link
center-of-mass Jacobians J_i(q):

    M(q)           = M_cart e_0 e_0' + sum_i m_i J_i' J_i + I_i S_i S_i'
    G(q)           = g * sum_i m_i * (y-row of J_i)
    C(q, qd) qd    = sum_i m_i J_i' (Jdot_i qd)

The last identity follows from d/dt(dT/dqd) - dT/dq with T a Gram
quadratic form; the cross terms cancel by symmetry of second
derivatives, leaving only the centripetal accelerations Jdot_i qd.
This is exact (no finite differencing) and works for any n.

State vectors
-------------
Internally states are block vectors ``[q; qd]`` of length 2(n+1).  The
interleaved ordering ``[x, xdot, th_1, th_1_dot, ...]`` used by the
linearized model and all exported artifacts is reached through
`to_paper_order` / `from_paper_order`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import SingularMatrixError, _pivoted_solve

__all__ = [
    "PlantParams",
    "State",
    "SingularMassMatrixError",
    "mass_matrix",
    "gravity_vector",
    "coriolis_force",
    "forward_dynamics",
    "total_energy",
    "to_paper_order",
    "from_paper_order",
    "paper_order_indices",
]


class SingularMassMatrixError(RuntimeError):
    """The mass matrix failed to factor; signals a modeling bug, since
    M(q) is positive definite for any positive masses and lengths."""


@dataclass(frozen=True)
class PlantParams:
    """Physical description of the cart + n-link chain.

    damping is an optional (n+1)x(n+1) viscous matrix acting on qd
    (N·s/m on the cart coordinate, N·m·s/rad on the joints); it must be
    positive semidefinite.  None means no damping.
    """

    n: int
    cart_mass: float
    masses: tuple[float, ...]
    lengths: tuple[float, ...]
    gravity: float = 9.81
    damping: np.ndarray | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        object.__setattr__(self, "lengths", tuple(float(l) for l in self.lengths))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if len(self.masses) != self.n:
            raise ValueError(f"masses: expected {self.n} values, got {len(self.masses)}")
        if len(self.lengths) != self.n:
            raise ValueError(f"lengths: expected {self.n} values, got {len(self.lengths)}")
        if self.cart_mass <= 0.0:
            raise ValueError(f"cart_mass must be positive, got {self.cart_mass}")
        if any(m <= 0.0 for m in self.masses):
            raise ValueError(f"masses must be positive, got {self.masses}")
        if any(l <= 0.0 for l in self.lengths):
            raise ValueError(f"lengths must be positive, got {self.lengths}")
        if self.gravity <= 0.0:
            raise ValueError(f"gravity must be positive, got {self.gravity}")
        if self.damping is not None:
            d = np.asarray(self.damping, dtype=float)
            if d.shape != (self.n + 1, self.n + 1):
                raise ValueError(
                    f"damping must be {(self.n + 1, self.n + 1)}, got {d.shape}"
                )
            sym_eigs = np.linalg.eigvalsh(0.5 * (d + d.T))
            if sym_eigs.min() < -1e-12:
                raise ValueError(
                    f"damping must be positive semidefinite; symmetric part has "
                    f"eigenvalue {sym_eigs.min():.3e}"
                )
            object.__setattr__(self, "damping", d)

    @property
    def n_coords(self) -> int:
        return self.n + 1

    @property
    def n_states(self) -> int:
        return 2 * (self.n + 1)

    # -- cached constant terms ------------------------------------------------

    @cached_property
    def _m(self) -> np.ndarray:
        return np.asarray(self.masses)

    @cached_property
    def _l(self) -> np.ndarray:
        return np.asarray(self.lengths)

    @cached_property
    def _total_mass(self) -> float:
        return self.cart_mass + float(self._m.sum())

    @cached_property
    def _rot_inertia(self) -> np.ndarray:
        """Constant rotational block: sum_i I_i S_i S_i' over the angle
        coordinates, with S_i the row mapping relative to absolute rates."""
        lower = np.tril(np.ones((self.n, self.n)))
        inertia = self._m * self._l**2 / 12.0
        return lower.T @ (inertia[:, None] * lower)

    @cached_property
    def _angle_mask(self) -> np.ndarray:
        # mask[i, k] = 1 where angle k moves link i (k <= i)
        return np.tril(np.ones((self.n, self.n)))

    @classmethod
    def from_config(cls, path) -> "PlantParams":
        """Load from the [plant] section of an INI-style config file."""
        from .config import load_plant

        return load_plant(path)


@dataclass(frozen=True, eq=False)
class State:
    """Generalized coordinates and velocities of the cart + chain."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qdot, dtype=float)
        if q.ndim != 1 or qd.shape != q.shape:
            raise ValueError(f"q and qdot must be equal-length vectors, got {q.shape} and {qd.shape}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    def as_vector(self) -> np.ndarray:
        """Block state vector [q; qdot]."""
        return np.concatenate([self.q, self.qdot])

    @classmethod
    def from_vector(cls, x) -> "State":
        x = np.asarray(x, dtype=float)
        half = x.shape[0] // 2
        return cls(x[:half], x[half:])

    @classmethod
    def upright(cls, n: int) -> "State":
        return cls(np.zeros(n + 1), np.zeros(n + 1))

    @classmethod
    def hanging(cls, n: int) -> "State":
        q = np.zeros(n + 1)
        q[1] = np.pi
        return cls(q, np.zeros(n + 1))


def _as_block_vector(x, params: PlantParams) -> np.ndarray:
    if isinstance(x, State):
        x = x.as_vector()
    x = np.asarray(x, dtype=float)
    if x.shape != (params.n_states,):
        raise ValueError(f"state must have shape ({params.n_states},), got {x.shape}")
    return x


def _com_jacobians(params: PlantParams, q: np.ndarray):
    """Angle part of the per-link COM Jacobians, in phasor form.

    Link direction vectors are packed as complex numbers
    w_j = l_j exp(i phi_j) = l_j (cos phi_j + i sin phi_j), so the x- and
    y-parts of every kinematic quantity travel together: the returned
    jw[i, k] = d x_i/d th_k + i * d y_i/d th_k.  The cart column of every
    per-link Jacobian is (1, 0) and is handled separately by callers.
    """
    phi = q[1:].cumsum()
    w = params._l * np.exp(1j * phi)
    n = params.n
    pref = np.empty(n + 1, dtype=complex)
    pref[0] = 0.0
    w.cumsum(out=pref[1:])
    jw = -(pref[1:, None] - pref[None, :-1] - 0.5 * w[:, None]) * params._angle_mask
    return phi, w, jw


def mass_matrix(q, params: PlantParams) -> np.ndarray:
    """Kinetic-energy Hessian M(q), symmetric positive definite.

    Entry (0, 0) is the total translating mass for any q.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (params.n_coords,):
        raise ValueError(f"q must have shape ({params.n_coords},), got {q.shape}")
    _, _, jw = _com_jacobians(params, q)
    m = params._m
    out = np.empty((params.n_coords, params.n_coords))
    out[0, 0] = params._total_mass
    out[0, 1:] = (m @ jw).real
    out[1:, 0] = out[0, 1:]
    out[1:, 1:] = (jw.conj().T @ (m[:, None] * jw)).real + params._rot_inertia
    return out


def gravity_vector(q, params: PlantParams) -> np.ndarray:
    """Gradient of the potential energy with respect to q."""
    q = np.asarray(q, dtype=float)
    _, _, jw = _com_jacobians(params, q)
    g = np.zeros(params.n_coords)
    g[1:] = params.gravity * (params._m @ jw).imag
    return g


def coriolis_force(q, qd, params: PlantParams) -> np.ndarray:
    """Velocity-dependent generalized force C(q, qd) qd."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    _, w, jw = _com_jacobians(params, q)
    return _bias_from_jac(params, qd, w, jw)


def _bias_from_jac(params, qd, w, jw):
    # Centripetal COM accelerations a_i = Jdot_i qd (the only velocity
    # bias for a Gram-form kinetic energy), then b = sum m_i J_i' a_i.
    # In phasor form the acceleration terms are -i w_j phid_j^2.
    n = params.n
    phid = qd[1:].cumsum()
    a_t = (-1j * (phid * phid)) * w
    pref = np.empty(n + 1, dtype=complex)
    pref[0] = 0.0
    a_t.cumsum(out=pref[1:])
    a = pref[:-1] + 0.5 * a_t
    ma = params._m * a
    b = np.empty(n + 1)
    b[0] = ma.sum().real
    b[1:] = (jw.conj().T @ ma).real
    return b


def forward_dynamics(x, force: float, params: PlantParams, joint_torques=None) -> np.ndarray:
    """State derivative [qd; qdd] under a cart force and optional joint torques.

    The generalized force is [force, 0, ..., 0] plus any joint torques
    (one per link, conjugate to the relative angles).  The accelerations
    solve M(q) qdd = F_gen - C qd - D qd - G via a pivoted LU solve.
    """
    x = _as_block_vector(x, params)
    nc = params.n_coords
    q, qd = x[:nc], x[nc:]
    _, w, jw = _com_jacobians(params, q)
    m = params._m

    mm = np.empty((nc, nc))
    mrow = m @ jw  # real part: cart-angle coupling; imag part: gravity gradient / g
    mm[0, 0] = params._total_mass
    mm[0, 1:] = mrow.real
    mm[1:, 0] = mrow.real
    mm[1:, 1:] = (jw.conj().T @ (m[:, None] * jw)).real + params._rot_inertia

    rhs = -_bias_from_jac(params, qd, w, jw)
    rhs[1:] -= params.gravity * mrow.imag
    rhs[0] += force
    if joint_torques is not None:
        rhs[1:] += np.asarray(joint_torques, dtype=float)
    if params.damping is not None:
        rhs -= params.damping @ qd

    try:
        qdd = _pivoted_solve(mm, rhs)
    except SingularMatrixError as exc:
        raise SingularMassMatrixError(f"mass matrix singular at q={q}") from exc
    out = np.empty_like(x)
    out[:nc] = qd
    out[nc:] = qdd
    return out


def total_energy(x, params: PlantParams) -> tuple[float, float]:
    """Kinetic and potential energy (T, V); V is zero at the cart rail."""
    x = _as_block_vector(x, params)
    nc = params.n_coords
    q, qd = x[:nc], x[nc:]
    t = 0.5 * qd @ mass_matrix(q, params) @ qd
    phi = q[1:].cumsum()
    rise = params._l * np.cos(phi)
    pref = np.concatenate([[0.0], np.cumsum(rise)])
    heights = pref[:-1] + 0.5 * rise
    v = params.gravity * (params._m @ heights)
    return float(t), float(v)


def paper_order_indices(n: int) -> np.ndarray:
    """Index array p with interleaved[j] = block[p[j]]."""
    idx = np.empty(2 * (n + 1), dtype=int)
    idx[0::2] = np.arange(n + 1)
    idx[1::2] = np.arange(n + 1) + (n + 1)
    return idx


def to_paper_order(x) -> np.ndarray:
    """Permute a block state [q; qd] into interleaved [x, xdot, th1, th1dot, ...].

    Accepts a single vector or a 2-D array of row states.
    """
    if isinstance(x, State):
        x = x.as_vector()
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2 - 1
    return x[..., paper_order_indices(n)]


def from_paper_order(x) -> np.ndarray:
    """Inverse of `to_paper_order`."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] // 2 - 1
    inv = np.empty(2 * (n + 1), dtype=int)
    inv[paper_order_indices(n)] = np.arange(2 * (n + 1))
    return x[..., inv]


def four_link_benchmark(cart_mass: float = 0.1) -> PlantParams:
    """The standard four-link benchmark chain used by the demos and the
    bundled reference data: 0.1 kg links of 3, 4, 7 and 10 cm.

    The cart mass defaults to the value recovered by
    `linearize.calibrate_cart_mass` against the published input matrix.
    """
    return PlantParams(
        n=4,
        cart_mass=cart_mass,
        masses=(0.1, 0.1, 0.1, 0.1),
        lengths=(0.03, 0.04, 0.07, 0.10),
        gravity=9.81,
    )
