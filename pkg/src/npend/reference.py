"""Published reference data for the four-link benchmark.

The bundled fixtures carry the linearized state-space matrices and the
feedback/precompensation gains published for the standard four-link
cart-pendulum benchmark, plus the plant config that reproduces them.
`compare_linearization` quantifies how closely a freshly built model
matches the published matrices (relative deviation for large entries,
absolute for entries below one, where five printed significant figures
leave no relative resolution).

Two reproduction caveats, both visible in `check-paper` reports:

* The published LQR gain was computed from a weight matrix whose
  printed diagonal has the wrong length for a 10-state model; the
  position-10 / velocity-1 weighting reproduces the printed gain to all
  shown digits, so that is what the default weights use.

* The published pole-placement gain is inconsistent with the stated
  far-pole rule (10x the dominant pole): the unique single-input gain
  for that pole set has a first entry of ~1e-5, not ~11.  Working back
  from the published gain, the far poles actually sit ~65x the dominant
  real part (see `paper_equivalent_spread`), which is also the design
  whose step responses and settling-time sweep behave like the
  published ones.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

__all__ = [
    "reference_state_matrices",
    "reference_gains",
    "paper_equivalent_spread",
    "benchmark_config_path",
    "compare_matrices",
]

ABS_TOL_SMALL_ENTRIES = 0.05
SMALL_ENTRY_CUTOFF = 1.0


def _fixture(name: str):
    return resources.files("npend.fixtures").joinpath(name)


def reference_state_matrices() -> tuple[np.ndarray, np.ndarray]:
    """Published (A, B) of the benchmark linearization, interleaved order."""
    from .linalg import load_matrix

    with resources.as_file(_fixture("reference_A.csv")) as pa:
        a = load_matrix(pa)
    with resources.as_file(_fixture("reference_B.csv")) as pb:
        b = load_matrix(pb).ravel()
    return a, b


def reference_gains() -> dict:
    """Published gain vectors and precompensation values."""
    return json.loads(_fixture("reference_gains.json").read_text())


def paper_equivalent_spread() -> float:
    """Far-pole spread that reproduces the published pole-placement gain."""
    return float(reference_gains()["paper_equivalent_spread"])


def benchmark_config_path():
    """Context manager yielding a filesystem path to the bundled config."""
    return resources.as_file(_fixture("quadruple.ini"))


def compare_matrices(computed, reference) -> dict:
    """Elementwise deviation report between two equally shaped arrays.

    Entries with |reference| >= 1 are compared relatively; smaller ones
    absolutely (tolerance 0.05), since their printed precision carries
    no meaningful relative information.  Returns max deviations and a
    per-entry table of the offenders above tolerance.
    """
    computed = np.asarray(computed, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if computed.shape != reference.shape:
        raise ValueError(f"shape mismatch: {computed.shape} vs {reference.shape}")
    rel_mask = np.abs(reference) >= SMALL_ENTRY_CUTOFF
    rel_dev = np.zeros_like(reference)
    rel_dev[rel_mask] = np.abs(computed[rel_mask] - reference[rel_mask]) / np.abs(
        reference[rel_mask]
    )
    abs_dev = np.abs(computed - reference)
    worst_rel = float(rel_dev.max()) if rel_mask.any() else 0.0
    worst_abs_small = float(abs_dev[~rel_mask].max()) if (~rel_mask).any() else 0.0
    entries = []
    it = np.nditer(reference, flags=["multi_index"])
    for ref in it:
        idx = it.multi_index
        ref = float(ref)
        comp = float(computed[idx])
        if abs(ref) >= SMALL_ENTRY_CUTOFF:
            dev = abs(comp - ref) / abs(ref)
            kind = "rel"
        else:
            dev = abs(comp - ref)
            kind = "abs"
        entries.append(
            {
                "index": [int(i) for i in idx],
                "reference": ref,
                "computed": comp,
                "deviation": dev,
                "kind": kind,
            }
        )
    return {
        "worst_relative": worst_rel,
        "worst_absolute_small": worst_abs_small,
        "entries": entries,
    }
