"""Command line interface: ``basinforge <command> [options]``.

Every command also accepts ``--config FILE`` with ``key = value`` lines; keys
are option names without the leading dashes, and flags given on the command
line override the file.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from .basin import (
    RunSpec, SamplingDomain, checkpoint_load, default_domain, ramp_sweep,
    run_spec, sample_ics, write_labels_csv, write_report_csv, write_report_json,
)
from .classify import ClassifierConfig
from .errors import BasinforgeError, NotFound, SchemaError
from .integrate import IntegratorConfig
from .models import CubicParams, SpinOrbitParams, make_schedule

EXIT_USAGE = 2
EXIT_ALARM = 3
EXIT_FAILED = 1

log = logging.getLogger("basinforge")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _fraction(text: str) -> tuple[int, int]:
    try:
        f = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a ratio p/q: {text!r}")
    return f.numerator, f.denominator


def _ratio_list(text: str) -> list[tuple[int, int]]:
    return [_fraction(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _domain(text: str) -> SamplingDomain:
    vals = _float_list(text)
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("domain needs q_lo,q_hi,v_lo,v_hi")
    try:
        return SamplingDomain(*vals)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--model", choices=["cubic", "spinorbit"], default="cubic")
    g.add_argument("--eps", type=float, default=0.1, help="forcing amplitude epsilon")
    g.add_argument("--e", type=float, default=0.0, help="eccentricity (spin-orbit)")
    g.add_argument("--schedule", choices=["constant", "linear", "exp"], default="constant")
    g.add_argument("--gamma", type=float, default=0.01, help="final damping gamma0")
    g.add_argument("--delta", type=float, default=0.0, help="ramp product Delta = gamma0 T0")


def _add_run_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sampling")
    g.add_argument("--domain", type=_domain, default=None, help="q_lo,q_hi,v_lo,v_hi")
    g.add_argument("--n", type=int, default=10000, help="number of initial conditions")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: BASINFORGE_WORKERS or all cores)")
    i = p.add_argument_group("integration and classification")
    i.add_argument("--method", choices=["taylor", "rk"], default="taylor")
    i.add_argument("--tol", type=float, default=1e-12)
    i.add_argument("--series-order", type=int, default=25)
    i.add_argument("--n-transient", type=float, default=20.0, help="N in T_int = N / gamma0")
    i.add_argument("--q-max", type=int, default=16)
    i.add_argument("--origin-tol", type=float, default=1e-8)
    i.add_argument("--period-tol", type=float, default=1e-5)
    i.add_argument("--cluster-radius", type=float, default=0.05)
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")


def _params(a):
    if a.gamma is None or not a.gamma > 0:
        raise UsageError("gamma: must be > 0")
    if a.delta < 0:
        raise UsageError("delta: must be >= 0")
    if a.eps < 0:
        raise UsageError("eps: must be >= 0")
    sched = make_schedule(a.schedule, a.gamma, a.delta)
    if a.model == "cubic":
        return CubicParams(a.eps, sched)
    if not 0 <= a.e <= 0.5:
        raise UsageError("e: must lie in [0, 0.5]")
    return SpinOrbitParams(a.e, a.eps, sched)


def _configs(a):
    try:
        icfg = IntegratorConfig(method=a.method, tol=a.tol, series_order=a.series_order)
        ccfg = ClassifierConfig(n_transient_factor=a.n_transient, q_max=a.q_max,
                                origin_energy_tol=a.origin_tol, period_match_tol=a.period_tol,
                                variant_cluster_radius=a.cluster_radius)
    except ValueError as exc:
        raise UsageError(str(exc))
    if a.model == "spinorbit" and icfg.method.value == "taylor":
        icfg = IntegratorConfig(method="rk", tol=a.tol, series_order=a.series_order)
    return ccfg, icfg


def _spec(a, params=None) -> RunSpec:
    if a.n < 1:
        raise UsageError("n: must be >= 1")
    if not 0 <= a.seed < 2**64:
        raise UsageError("seed: must be an unsigned 64-bit integer")
    if a.workers is not None and a.workers < 1:
        raise UsageError("workers: must be >= 1")
    params = params or _params(a)
    ccfg, icfg = _configs(a)
    return RunSpec(params, a.domain or default_domain(params), a.n, a.seed, ccfg, icfg)


# ---------------------------------------------------------------------------
# commands


def cmd_basins(a) -> int:
    spec = _spec(a)
    a.out.mkdir(parents=True, exist_ok=True)
    report = run_spec(spec, a.workers, a.out / "checkpoint.txt", a.resume)
    write_report_csv(report, a.out / "report.csv")
    write_report_json(report, a.out / "report.json")
    write_labels_csv(report, a.out / "labels.csv")
    _print_report(report)
    share = 100.0 * report.n_unclassified / report.n_total
    if share > a.alarm:
        log.error("unclassified share %.2f%% exceeds the alarm level %.2f%%", share, a.alarm)
        return EXIT_ALARM
    return 0


def _print_report(report) -> None:
    for e in report.entries:
        print(f"{e.label:>14s} {e.area_pct:6.1f} +- {e.ci_half_pct:.1f}  ({e.count})")


def cmd_ramp_sweep(a) -> int:
    if not a.deltas:
        raise UsageError("deltas: list is empty")
    if any(d < 0 for d in a.deltas):
        raise UsageError("deltas: must be >= 0")
    a.schedule = a.family
    spec = _spec(a)
    a.out.mkdir(parents=True, exist_ok=True)
    reports = ramp_sweep(spec.params, spec.domain, spec.n, spec.seed, a.family, a.deltas,
                         spec.classifier, spec.integrator, a.workers)
    alarm = False
    with open(a.out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "label", "area_pct", "ci_half_pct"])
        for d, r in zip(a.deltas, reports):
            sub = a.out / f"delta_{d:g}"
            sub.mkdir(exist_ok=True)
            write_report_csv(r, sub / "report.csv")
            write_report_json(r, sub / "report.json")
            write_labels_csv(r, sub / "labels.csv")
            print(f"delta = {d:g}")
            _print_report(r)
            for e in r.entries:
                w.writerow([f"{d:g}", e.label, f"{e.area_pct:.1f}", f"{e.ci_half_pct:.1f}"])
            alarm |= 100.0 * r.n_unclassified / r.n_total > a.alarm
    return EXIT_ALARM if alarm else 0


def cmd_threshold(a) -> int:
    from .analysis.thresholds import (
        analytic_threshold_spin_orbit, cubic_threshold_bisection, cubic_threshold_reference,
        spin_orbit_threshold_bisection, write_threshold_csv,
    )

    if not a.resonances:
        raise UsageError("resonances: list is empty")
    rows = []
    for p, q in a.resonances:
        if a.model == "cubic":
            row = cubic_threshold_reference(p, q)
            if a.bisect:
                row = cubic_threshold_bisection(a.eps, p, q)
        else:
            row = analytic_threshold_spin_orbit(a.e, p, q)
            if a.bisect and 0 < row.C0 < math.inf:
                row = spin_orbit_threshold_bisection(a.e, a.eps, p, q)
        rows.append(row)
    write_threshold_csv(rows, a.out if a.out else sys.stdout, a.eps)
    return 0


def cmd_floquet(a) -> int:
    from .analysis.floquet import find_periodic_orbit, monodromy

    p, q = a.resonance
    gammas = a.gammas or [a.gamma]
    rows = []
    orbit = None
    for g in sorted(gammas):
        a.gamma = g
        params = _params(a)
        try:
            orbit = find_periodic_orbit(params, p, q, orbit, stable=True)
        except NotFound:
            orbit = find_periodic_orbit(params, p, q, None, stable=True)
        m = monodromy(params, orbit, q)
        lam = m.eigenvalues
        rows.append([repr(g), repr(orbit.q), repr(orbit.v), repr(lam[0].real), repr(lam[0].imag),
                     repr(lam[1].real), repr(lam[1].imag), repr(m.lyapunov[0]), repr(m.lyapunov[1]),
                     repr(m.det), repr(m.det_expected)])
    header = ["gamma", "orbit_q", "orbit_v", "lambda1_re", "lambda1_im", "lambda2_re",
              "lambda2_im", "lyapunov1", "lyapunov2", "det", "det_expected"]
    fh = open(a.out, "w", newline="") if a.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if a.out:
            fh.close()
    return 0


def cmd_spinorbit_params(a) -> int:
    from .analysis.spinorbit import load_satellites, parameter_table

    rows = parameter_table(load_satellites(a.data))
    fh = open(a.out, "w", newline="") if a.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "satellite", "e", "eps", "gamma", "T_s", "gamma_per_year"])
        for r in rows:
            w.writerow([r["system"], r["satellite"], r["e"], f"{r['eps']:.3g}",
                        f"{r['gamma']:.3g}", f"{r['T_s']:.3g}", f"{r['gamma_per_year']:.3g}"])
    finally:
        if a.out:
            fh.close()
    return 0


def cmd_plotdata(a) -> int:
    a.out.parent.mkdir(parents=True, exist_ok=True)
    if a.kind == "areas":
        return _plot_areas(a)
    if a.kind == "diff":
        return _plot_diff(a)
    return _plot_basin(a)


def _plot_areas(a) -> int:
    # one gnuplot index block per label: log10(gamma0) area ci
    series: dict[str, list[tuple[float, float, float]]] = {}
    for run in a.runs:
        meta = json.loads((run / "report.json").read_text())
        g = meta["params"]["gamma0"]
        with open(run / "report.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                series.setdefault(row["label"], []).append(
                    (math.log10(g), float(row["area_pct_exact"]), float(row["ci_half_pct_exact"])))
    with open(a.out, "w") as fh:
        for label in sorted(series):
            fh.write(f"# {label}\n# log10_gamma area_pct ci_half_pct\n")
            for x, y, c in sorted(series[label]):
                fh.write(f"{x!r} {y!r} {c!r}\n")
            fh.write("\n\n")
    return 0


def _read_labels(run: Path) -> list[tuple[float, float, str]]:
    with open(run / "labels.csv", newline="") as fh:
        return [(float(r["q0"]), float(r["v0"]), r["label"]) for r in csv.DictReader(fh)]


def _plot_diff(a) -> int:
    if len(a.runs) != 2:
        raise UsageError("runs: diff needs exactly two run directories")
    ja = json.loads((a.runs[0] / "report.json").read_text())
    jb = json.loads((a.runs[1] / "report.json").read_text())
    if (ja["seed"], ja["n"], ja["domain"]) != (jb["seed"], jb["n"], jb["domain"]):
        raise UsageError("runs: the two runs do not share an IC stream")
    la, lb = _read_labels(a.runs[0]), _read_labels(a.runs[1])
    blocks = {"gained": [], "lost": [], "common": []}
    for (q0, v0, x), (_, _, y) in zip(la, lb):
        ina, inb = x == a.label, y == a.label
        if inb and not ina:
            blocks["gained"].append((q0, v0))
        elif ina and not inb:
            blocks["lost"].append((q0, v0))
        elif ina and inb:
            blocks["common"].append((q0, v0))
    _write_blocks(a.out, blocks)
    return 0


def _plot_basin(a) -> int:
    blocks: dict[str, list] = {}
    if a.checkpoint is not None:
        header, records = checkpoint_load(a.checkpoint)
        domain = a.domain or SamplingDomain(-1.0, 1.0, -1.0, 1.0)
        idx = sorted(records)
        ics = sample_ics(domain, len(idx), header["seed"], idx) if idx else []
        for i, (q0, v0) in zip(idx, ics):
            lab = records[i].label
            blocks.setdefault(str(lab), []).append((q0, v0))
    else:
        if not a.runs:
            raise UsageError("runs: give a run directory or --checkpoint")
        for q0, v0, lab in _read_labels(a.runs[0]):
            blocks.setdefault(lab, []).append((q0, v0))
    _write_blocks(a.out, dict(sorted(blocks.items())))
    return 0


def _write_blocks(path: Path, blocks: dict) -> None:
    with open(path, "w") as fh:
        for name, pts in blocks.items():
            fh.write(f"# {name}\n")
            for q0, v0 in pts:
                fh.write(f"{float(q0)!r} {float(v0)!r}\n")
            fh.write("\n\n")


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="basinforge", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", type=Path, help="file of key = value defaults")
        p.set_defaults(func=func)
        return p

    p = add("basins", cmd_basins, "estimate relative basin areas")
    _add_model_args(p)
    _add_run_args(p)
    p.add_argument("--resume", action="store_true", help="continue from out/checkpoint.txt")
    p.add_argument("--alarm", type=float, default=5.0,
                   help="exit with status 3 if the unclassified share exceeds this percentage")

    p = add("ramp-sweep", cmd_ramp_sweep, "basin areas for a list of ramp products Delta")
    _add_model_args(p)
    _add_run_args(p)
    p.add_argument("--family", choices=["linear", "exp"], default="linear")
    p.add_argument("--deltas", type=_float_list, required=True, help="comma-separated Delta values")
    p.add_argument("--alarm", type=float, default=5.0)

    p = add("threshold", cmd_threshold, "threshold constants of p:q resonances")
    _add_model_args(p)
    p.add_argument("--resonances", type=_ratio_list, required=True, help="e.g. 1/2,3/2,2")
    p.add_argument("--bisect", action="store_true", help="locate the fold numerically")
    p.add_argument("--out", type=Path, default=None, help="CSV file (default stdout)")

    p = add("floquet", cmd_floquet, "Floquet multipliers of a stable p:q orbit")
    _add_model_args(p)
    p.add_argument("--resonance", type=_fraction, required=True, help="p/q, e.g. 1/2")
    p.add_argument("--gammas", type=_float_list, default=None, help="comma-separated gamma values")
    p.add_argument("--out", type=Path, default=None, help="CSV file (default stdout)")

    p = add("spinorbit-params", cmd_spinorbit_params, "eps and gamma from satellite data")
    p.add_argument("--data", type=Path, default=None, help="satellite CSV (default: shipped table)")
    p.add_argument("--out", type=Path, default=None, help="CSV file (default stdout)")

    p = add("plotdata", cmd_plotdata, "gnuplot data files from finished runs")
    p.add_argument("kind", choices=["areas", "diff", "basin"])
    p.add_argument("--runs", type=Path, nargs="*", default=[], help="run output directories")
    p.add_argument("--label", default="1:2", help="target label for diff")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--domain", type=_domain, default=None)
    p.add_argument("--out", type=Path, required=True)
    return parser


def _read_config(path: Path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def _apply_config(parser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    values = _read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {act.dest: act for act in sub._actions}
    given = set()
    for tok in argv:
        if tok.startswith("--"):
            given.add(tok[2:].split("=", 1)[0].replace("-", "_"))
    for key, raw in values.items():
        if key not in known or key in ("config", "help", "func"):
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        if key in given:
            continue
        act = known[key]
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        elif act.nargs in ("*", "+"):
            val = [act.type(v) if act.type else v for v in raw.split()]
        else:
            try:
                val = act.type(raw) if act.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise UsageError(f"{key}: {exc}")
            if act.choices is not None and val not in act.choices:
                raise UsageError(f"{key}: {val!r} is not one of {sorted(act.choices)}")
        setattr(args, key, val)
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"basinforge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"basinforge: schema error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BasinforgeError, OSError, ValueError) as exc:
        print(f"basinforge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
