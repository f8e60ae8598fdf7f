"""Command-line pipeline: linearize -> synthesize -> simulate, plus the
settling-time sweep and a regression check against the published
benchmark values.

The pipeline is staged through files so every stage is independently
inspectable: `linearize` writes the state-space matrices, `synthesize`
turns them into a gains.json, `simulate` runs the nonlinear closed loop
from a config + gains.json, and `sweep` repeats design/placement/run
for a list of settling times.  Every output directory receives a copy
of the resolved configuration and a manifest.json for provenance.  All
file writes are whole-file atomic (temp file + rename).

Exit codes:
    0   success
    2   configuration / validation error
    3   synthesis failure (uncontrollable, not stabilizable, bad design)
    4   simulation diverged
    5   reference regression check failed
    1   unexpected crash
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, linalg, reference
from .dynamics import PlantParams
from .linearize import linearize
from .simulate import SimConfig, metrics, simulate, sweep_settling_times
from .synthesis import (
    Gains,
    InvalidDesignError,
    LqrWeights,
    NotStabilizableError,
    PoleDesign,
    UncontrollableError,
    ZeroDcGainError,
    lqr_gain,
    place_poles,
    second_order_poles,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_SIMULATION = 4
EXIT_REGRESSION = 5

_EPILOG = """\
exit codes:
  0  success
  2  configuration / validation error
  3  synthesis failure (uncontrollable, not stabilizable, invalid design)
  4  simulation diverged
  5  reference regression check failed
  1  unexpected crash
"""


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2) + "\n")


def _atomic_via(path: Path, writer) -> None:
    """Run writer(tmp_path) then atomically rename onto path."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(outdir: Path, command: str, args: argparse.Namespace, seed=None) -> None:
    manifest = {
        "command": command,
        "config": str(getattr(args, "config", "")),
        "output_dir": str(outdir),
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if seed is not None:
        manifest["seed"] = int(seed)
    _atomic_write_json(outdir / "manifest.json", manifest)


def _copy_resolved_config(outdir: Path, args: argparse.Namespace) -> None:
    cfg_path = getattr(args, "config", None)
    if cfg_path:
        _atomic_write_text(outdir / "config.ini", Path(cfg_path).read_text())


def _prepare_outdir(args) -> Path:
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _resolved_sim_config(args, n_states: int) -> SimConfig:
    base = cfgmod.load_sim_config(args.config, n_states)
    overrides = {}
    for attr, field_name in [
        ("dt", "dt"),
        ("duration", "duration"),
        ("rho", "reference_amplitude"),
        ("seed", "seed"),
        ("sigma_force", "sigma_force"),
        ("sigma_torque", "sigma_torque"),
        ("step_time", "step_time"),
    ]:
        v = getattr(args, attr, None)
        if v is not None:
            overrides[field_name] = v
    if not overrides:
        return base
    from dataclasses import replace

    return replace(base, **overrides)


def _resolved_design(args) -> PoleDesign:
    base = cfgmod.load_pole_design(args.config)
    kw = {
        "percent_overshoot": args.po if args.po is not None else base.percent_overshoot,
        "settling_time": args.ts if args.ts is not None else base.settling_time,
        "spread": args.spread if args.spread is not None else base.spread,
        "far_spacing": args.far_spacing
        if args.far_spacing is not None
        else base.far_spacing,
    }
    return PoleDesign(**kw)


# ------------------------------------------------------------------ commands


def _cmd_linearize(args) -> int:
    plant = cfgmod.load_plant(args.config)
    ss = linearize(plant, which=args.which)
    outdir = _prepare_outdir(args)
    _atomic_via(outdir / "A.csv", lambda p: linalg.save_matrix(p, ss.a))
    _atomic_via(outdir / "B.csv", lambda p: linalg.save_matrix(p, ss.b.reshape(-1, 1)))
    _atomic_via(outdir / "C.csv", lambda p: linalg.save_matrix(p, ss.c))
    _atomic_via(outdir / "D.csv", lambda p: linalg.save_matrix(p, ss.d))
    _atomic_write_json(outdir / "summary.json", ss.summary())
    _copy_resolved_config(outdir, args)
    _write_manifest(outdir, "linearize", args)
    print(f"linearize: wrote {outdir}/A.csv B.csv C.csv D.csv summary.json")
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    plant = cfgmod.load_plant(args.config)
    ss = linearize(plant)
    if args.method == "lqr":
        weights = cfgmod.load_lqr_weights(args.config, plant.n_states)
        gains = lqr_gain(ss.a, ss.b, weights, c=ss.c)
        extras = {"q_diag": [float(v) for v in np.diag(weights.q)], "r": float(weights.r[0, 0])}
    else:
        design = _resolved_design(args)
        poles = second_order_poles(design, plant.n_states)
        gains = place_poles(ss.a, ss.b, poles, c=ss.c)
        extras = {
            "percent_overshoot": design.percent_overshoot,
            "settling_time": design.settling_time,
            "spread": design.spread,
            "far_spacing": design.far_spacing,
        }
    payload = gains.to_json_dict()
    payload["design"] = extras
    outdir = _prepare_outdir(args)
    _atomic_write_json(outdir / "gains.json", payload)
    _copy_resolved_config(outdir, args)
    _write_manifest(outdir, "synthesize", args)
    worst = max(p.real for p in gains.closed_loop_poles)
    print(
        f"synthesize[{args.method}]: N = {gains.n_precomp:.6g}, "
        f"max Re(closed-loop poles) = {worst:.4g} -> {outdir}/gains.json"
    )
    return EXIT_OK


def _load_gains(path) -> Gains:
    with open(path) as fh:
        return Gains.from_json_dict(json.load(fh))


def _cmd_simulate(args) -> int:
    plant = cfgmod.load_plant(args.config)
    try:
        gains = _load_gains(args.gains)
    except (OSError, KeyError, ValueError) as exc:
        raise cfgmod.ConfigError("gains", str(args.gains), str(exc)) from exc
    if gains.k.shape[0] != plant.n_states:
        raise cfgmod.ConfigError(
            "gains", "K", f"has {gains.k.shape[0]} entries, plant has {plant.n_states} states"
        )
    sim_cfg = _resolved_sim_config(args, plant.n_states)
    trace = simulate(plant, gains, sim_cfg)
    outdir = _prepare_outdir(args)
    _atomic_via(outdir / "trace.csv", trace.to_csv)
    try:
        m = metrics(trace, sim_cfg.reference_amplitude)
        metrics_dict = m.to_json_dict()
    except Exception:
        metrics_dict = {"stabilized": False, "note": "metrics unavailable (zero reference)"}
    metrics_dict["outcome"] = trace.outcome
    _atomic_write_json(outdir / "metrics.json", metrics_dict)
    _copy_resolved_config(outdir, args)
    _write_manifest(outdir, "simulate", args, seed=sim_cfg.seed)
    print(
        f"simulate: outcome={trace.outcome}, stabilized={metrics_dict.get('stabilized')}"
        f" -> {outdir}/trace.csv metrics.json"
    )
    return EXIT_SIMULATION if trace.outcome == "diverged" else EXIT_OK


def _cmd_sweep(args) -> int:
    plant = cfgmod.load_plant(args.config)
    ss = linearize(plant)
    base = _resolved_design(args)
    sim_cfg = _resolved_sim_config(args, plant.n_states)
    try:
        ts_list = [float(v) for v in args.ts_list.split(",") if v.strip()]
    except ValueError as exc:
        raise cfgmod.ConfigError("sweep", "--ts-list", str(exc)) from exc
    if not ts_list:
        raise cfgmod.ConfigError("sweep", "--ts-list", "no settling times given")
    rows = sweep_settling_times(plant, ss, base, ts_list, sim_cfg)
    outdir = _prepare_outdir(args)
    _atomic_write_json(outdir / "sweep.json", [r.to_json_dict() for r in rows])
    _copy_resolved_config(outdir, args)
    _write_manifest(outdir, "sweep", args, seed=sim_cfg.seed)
    for r in rows:
        label = "Yes" if r.stabilized else "No"
        print(f"  ts = {r.settling_time:g}s  stabilized: {label}"
              + (f"  ({r.reason})" if r.reason else ""))
    print(f"sweep: {len(rows)} rows -> {outdir}/sweep.json")
    return EXIT_OK


def _cmd_check_paper(args) -> int:
    if args.config:
        plant = cfgmod.load_plant(args.config)
    else:
        with reference.benchmark_config_path() as p:
            plant = cfgmod.load_plant(p)
    ss = linearize(plant)
    ref_a, ref_b = reference.reference_state_matrices()
    rep_a = reference.compare_matrices(ss.a, ref_a)
    rep_b = reference.compare_matrices(ss.b, ref_b)

    gains_ref = reference.reference_gains()
    weights = LqrWeights.position_weighted(plant.n_states)
    glqr = lqr_gain(ss.a, ss.b, weights, c=ss.c)
    k_ref = np.asarray(gains_ref["lqr"]["K"])
    sign_ok = bool(np.all(np.sign(glqr.k) == np.sign(k_ref)))
    n_lqr_dev = abs(glqr.n_precomp - gains_ref["lqr"]["N"])

    design = PoleDesign(
        percent_overshoot=gains_ref["pole_placement"]["percent_overshoot"],
        settling_time=gains_ref["pole_placement"]["settling_time"],
        spread=reference.paper_equivalent_spread(),
        far_spacing=0.0,
    )
    gpp = place_poles(ss.a, ss.b, second_order_poles(design, plant.n_states), c=ss.c)
    n_pp_dev = abs(gpp.n_precomp - gains_ref["pole_placement"]["N"]) / gains_ref[
        "pole_placement"
    ]["N"]

    checks = {
        "A_worst_relative": rep_a["worst_relative"],
        "A_worst_absolute_small": rep_a["worst_absolute_small"],
        "B_worst_relative": rep_b["worst_relative"],
        "lqr_sign_pattern_matches": sign_ok,
        "lqr_leading_gain": float(glqr.k[0]),
        "N_lqr": float(glqr.n_precomp),
        "N_lqr_abs_deviation": float(n_lqr_dev),
        "N_pp_at_paper_equivalent_spread": float(gpp.n_precomp),
        "N_pp_rel_deviation": float(n_pp_dev),
        "paper_equivalent_spread": reference.paper_equivalent_spread(),
    }
    passed = (
        rep_a["worst_relative"] <= 0.005
        and rep_a["worst_absolute_small"] <= 0.05
        and rep_b["worst_relative"] <= 0.005
        and sign_ok
        and n_lqr_dev <= 1e-3
        and n_pp_dev <= 0.01
    )
    checks["passed"] = bool(passed)

    outdir = _prepare_outdir(args)
    report = {
        "checks": checks,
        "A_deviations": [e for e in rep_a["entries"] if e["reference"] != 0.0],
        "B_deviations": rep_b["entries"],
        "K_lqr_computed": [float(v) for v in glqr.k],
        "K_lqr_reference": [float(v) for v in k_ref],
        "K_pp_computed": [float(v) for v in gpp.k],
        "K_pp_reference": [float(v) for v in gains_ref["pole_placement"]["K"]],
    }
    _atomic_write_json(outdir / "report.json", report)
    _write_manifest(outdir, "check-paper", args)

    print("reference regression report")
    print(f"  A: worst relative dev {rep_a['worst_relative']:.3e}, "
          f"worst small-entry abs dev {rep_a['worst_absolute_small']:.3e}")
    print(f"  B: worst relative dev {rep_b['worst_relative']:.3e}")
    print(f"  LQR: sign pattern match {sign_ok}, K[0] = {glqr.k[0]:.5f}, "
          f"N = {glqr.n_precomp:.5f} (|dev| {n_lqr_dev:.2e})")
    print(f"  PP @ spread {design.spread:.3f}: N = {gpp.n_precomp:.5f} "
          f"(rel dev {n_pp_dev:.2e})")
    print(f"  verdict: {'PASS' if passed else 'FAIL'} -> {outdir}/report.json")
    return EXIT_OK if passed else EXIT_REGRESSION


# ------------------------------------------------------------------ parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="npend",
        description=__doc__.split("\n\n")[0],
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"npend {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_lin = sub.add_parser("linearize", help="write the state-space quadruple as CSV")
    p_lin.add_argument("--config", required=True)
    p_lin.add_argument("--out", required=True)
    p_lin.add_argument("--which", choices=("upright", "hanging"), default="upright")
    p_lin.set_defaults(func=_cmd_linearize)

    p_syn = sub.add_parser("synthesize", help="compute feedback + precompensation gains")
    p_syn.add_argument("--config", required=True)
    p_syn.add_argument("--out", required=True)
    p_syn.add_argument("--method", choices=("lqr", "pp"), required=True)
    p_syn.add_argument("--po", type=float, help="percent overshoot (pp)")
    p_syn.add_argument("--ts", type=float, help="settling time in s (pp)")
    p_syn.add_argument("--spread", type=float, help="far-pole spread (pp)")
    p_syn.add_argument("--far-spacing", type=float, help="far-pole spacing factor (pp)")
    p_syn.set_defaults(func=_cmd_synthesize)

    p_sim = sub.add_parser("simulate", help="nonlinear closed-loop run")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--gains", required=True, help="gains.json from synthesize")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--dt", type=float)
    p_sim.add_argument("--duration", type=float)
    p_sim.add_argument("--rho", type=float, help="reference step amplitude in m")
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--sigma-force", type=float)
    p_sim.add_argument("--sigma-torque", type=float)
    p_sim.add_argument("--step-time", type=float)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sw = sub.add_parser("sweep", help="re-design and re-simulate over settling times")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--ts-list", default="3,4,5,6,7,8,9", help="comma-separated settling times")
    p_sw.add_argument("--po", type=float)
    p_sw.add_argument("--ts", type=float, help=argparse.SUPPRESS)
    p_sw.add_argument("--spread", type=float)
    p_sw.add_argument("--far-spacing", type=float)
    p_sw.add_argument("--dt", type=float)
    p_sw.add_argument("--duration", type=float)
    p_sw.add_argument("--rho", type=float)
    p_sw.add_argument("--seed", type=int)
    p_sw.add_argument("--sigma-force", type=float)
    p_sw.add_argument("--sigma-torque", type=float)
    p_sw.add_argument("--step-time", type=float)
    p_sw.set_defaults(func=_cmd_sweep)

    p_chk = sub.add_parser(
        "check-paper",
        help="regress the pipeline against the published benchmark values",
    )
    p_chk.add_argument("--config", help="defaults to the bundled benchmark config")
    p_chk.add_argument("--out", required=True)
    p_chk.set_defaults(func=_cmd_check_paper)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except cfgmod.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, InvalidDesignError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UncontrollableError, NotStabilizableError, ZeroDcGainError) as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS


if __name__ == "__main__":
    sys.exit(main())
