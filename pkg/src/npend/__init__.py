"""Modeling, linear control synthesis and nonlinear simulation of an
n-link inverted pendulum on a cart.

Pipeline: build the nonlinear multibody dynamics from the chain's
energies (`npend.dynamics`), linearize about the upright equilibrium
(`npend.linearize`), synthesize LQR or pole-placement state feedback
with a precompensation gain that removes steady-state error
(`npend.synthesis`), and validate the closed loop on the full nonlinear
plant with a deterministic fixed-step integrator (`npend.simulate`).
"""

__version__ = "0.1.0"

from .dynamics import (
    PlantParams,
    State,
    forward_dynamics,
    four_link_benchmark,
    from_paper_order,
    mass_matrix,
    to_paper_order,
    total_energy,
)
from .linearize import StateSpace, calibrate_cart_mass, find_equilibrium, linearize
from .simulate import (
    ResponseMetrics,
    SimConfig,
    SimTrace,
    metrics,
    simulate,
    sweep_settling_times,
)
from .synthesis import (
    Gains,
    LqrWeights,
    PoleDesign,
    lqr_gain,
    place_poles,
    precompensation_gain,
    second_order_poles,
    solve_care,
)

__all__ = [
    "__version__",
    "PlantParams",
    "State",
    "forward_dynamics",
    "four_link_benchmark",
    "from_paper_order",
    "mass_matrix",
    "to_paper_order",
    "total_energy",
    "StateSpace",
    "calibrate_cart_mass",
    "find_equilibrium",
    "linearize",
    "ResponseMetrics",
    "SimConfig",
    "SimTrace",
    "metrics",
    "simulate",
    "sweep_settling_times",
    "Gains",
    "LqrWeights",
    "PoleDesign",
    "lqr_gain",
    "place_poles",
    "precompensation_gain",
    "second_order_poles",
    "solve_care",
]
