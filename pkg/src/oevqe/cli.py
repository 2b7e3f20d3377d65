"""Batch command-line surface: pipeline orchestration and machine-readable reports.

Subcommands: run, adapt, rank, scf, fci, bp-var, report, curve.  Energies are
printed with 12 significant digits; JSON reports carry the full per-stage
record.  Exit codes: 0 success, 1 input/configuration error, 2 numerical
failure.
"""

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, oracle, solver
from .embedding import FragmentSpec, build_bath
from .integrals import FcidumpError, parse_fcidump
from .oracle import OracleError
from .ranking import rank_environment
from .scf import ScfError, run_rhf
from .solver import SolverConfig, SolverError

__all__ = ["main", "curve", "console_main"]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2

_EF = "{:.12g}"


class InputError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as InputError (exit code 1)."""

    def error(self, message):
        raise InputError(message)


def _fmt(x):
    return _EF.format(float(x))


def _load_integrals(path):
    if not os.path.exists(path):
        raise InputError(f"integral file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    label = os.path.splitext(os.path.basename(path))[0]
    return parse_fcidump(text, label=label)


def _parse_fragment(spec_text, L):
    try:
        indices = tuple(int(tok) for tok in spec_text.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise InputError(f"bad fragment spec {spec_text!r}") from exc
    if len(indices) != len(set(indices)):
        raise InputError(f"duplicate fragment index in {spec_text!r}")
    if not indices:
        raise InputError("fragment spec is empty")
    if min(indices) < 0 or max(indices) >= L:
        raise InputError(f"fragment index out of range [0, {L})")
    return FragmentSpec(indices=indices)


def _parse_schedule(text):
    if text is None:
        return None
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise InputError(f"bad stage schedule {text!r}") from exc


def _parse_thresholds(text):
    try:
        vals = tuple(float(tok) for tok in text.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise InputError(f"bad gradient threshold {text!r}") from exc
    if not vals:
        raise InputError("empty gradient threshold")
    return vals[0] if len(vals) == 1 else vals


def _read_config_file(path):
    """KEY=VALUE per line; '#' starts a comment.  Flags override these."""
    if not os.path.exists(path):
        raise InputError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected KEY=VALUE")
            key, val = (part.strip() for part in line.split("=", 1))
            out[key.replace("-", "_").lower()] = val
    return out


def _solver_config(args):
    return SolverConfig(
        grad_threshold=args.grad_threshold,
        max_ops_total=args.budget,
        bfgs_tol=args.bfgs_tol,
        bfgs_max_iter=args.bfgs_max_iter,
        reopt_all=not args.newest_only,
        stage_schedule=args.stage_schedule,
        measurement_epsilon=args.measurement_epsilon)


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _stage_csv_rows(report):
    rows = [("n_s", "k", "n_ops", "pool_size", "e_ref", "e_sub", "e_core",
             "e_nuc", "e_g", "max_grad_final")]
    for st in report.stages:
        last_grad = st.grad_norms[-1] if st.grad_norms else float("nan")
        rows.append((st.n_s, st.k, st.n_ops, st.pool_size_full, _fmt(st.e_ref),
                     _fmt(st.e_sub), _fmt(st.e_core), _fmt(st.e_nuc),
                     _fmt(st.e_g), _fmt(last_grad)))
    return rows


def _write_csv(path, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    text = buf.getvalue()
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _report_payload(report):
    payload = report.to_dict()
    payload["version"] = __version__
    return payload


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_run(args, mode_override=None):
    ints = _load_integrals(args.fcidump)
    mode = mode_override or args.mode
    cfg = _solver_config(args)

    if mode == "adapt":
        report = solver.adapt_run(ints, cfg, label=ints.label)
    elif mode in ("oe-adapt", "oe-uccsd"):
        if args.fragment is None:
            raise InputError(f"mode {mode} requires --fragment")
        frag = _parse_fragment(args.fragment, ints.L)
        method = "adapt" if mode == "oe-adapt" else "uccsd"
        report = solver.oe_run(ints, frag, cfg, method=method, delta=args.delta,
                               label=ints.label)
    else:
        raise InputError(f"unknown run mode {mode!r}")

    if args.json:
        _write_json(args.json, _report_payload(report))
    if args.csv:
        _write_csv(args.csv, _stage_csv_rows(report))
    meas = report.measurement
    print(f"mode: {report.mode}  label: {report.label}")
    print(f"E_hf:   {_fmt(report.e_hf)}")
    print(f"E_g:    {_fmt(report.final_e_g)}")
    print(f"ops:    {report.total_ops}")
    print(f"shots:  {_fmt(meas['m_total'])}  (baseline {_fmt(meas['m_baseline'])}, "
          f"ratio {_fmt(meas['ratio'])}, uniform-stage bound {_fmt(meas['corollary_bound'])})")
    return EXIT_OK


def _cmd_rank(args):
    ints = _load_integrals(args.fcidump)
    if args.fragment is None:
        raise InputError("rank requires --fragment")
    frag = _parse_fragment(args.fragment, ints.L)
    sol = run_rhf(ints)
    basis = build_bath(sol.D, frag, delta=args.delta)
    ranked = rank_environment(ints, basis, rhf=sol)
    rows = [("rank", "class", "delta_lambda")]
    for i, (cls, score) in enumerate(zip(ranked.class_of, ranked.delta_lambda)):
        rows.append((i, cls, _fmt(score)))
    _write_csv(args.output, rows)
    return EXIT_OK


def _cmd_scf(args):
    ints = _load_integrals(args.fcidump)
    sol = run_rhf(ints)
    print(f"label:  {ints.label}")
    print(f"L:      {ints.L}")
    print(f"n_elec: {ints.n_elec}")
    print(f"E_nuc:  {_fmt(ints.e_nuc)}")
    print(f"E_hf:   {_fmt(sol.e_hf)}")
    print(f"iters:  {sol.n_iter}")
    print("eps:    " + " ".join(_fmt(e) for e in sol.eps))
    return EXIT_OK


def _cmd_fci(args):
    ints = _load_integrals(args.fcidump)
    energy, _ = oracle.fci_ground_state(ints)
    print(f"E_fci:  {_fmt(energy)}")
    return EXIT_OK


def _cmd_bp_var(args):
    qubits = tuple(int(tok) for tok in args.qubits.split(","))
    rows = [("n_qubits", "mean", "variance", "n_samples")]
    for n in qubits:
        mean, var = oracle.bp_variance_experiment(n, args.samples, seed=args.seed)
        n_samples = args.samples * len(solver.build_pool(n // 2))
        rows.append((n, _fmt(mean), _fmt(var), n_samples))
    _write_csv(args.output, rows)
    return EXIT_OK


def _cmd_report(args):
    if not os.path.exists(args.input):
        raise InputError(f"report file not found: {args.input}")
    with open(args.input) as fh:
        payload = json.load(fh)
    if not str(payload.get("schema", "")).startswith("oevqe-report/"):
        raise InputError("not an oevqe report (missing schema tag)")
    bad = []
    for st in payload["stages"]:
        resid = abs(st["e_g"] - (st["e_sub"] + st["e_core"] + st["e_nuc"]))
        if resid > 1e-12:
            bad.append((st["n_s"], resid))
    print(f"label: {payload['label']}  mode: {payload['mode']}")
    print(f"stages: {len(payload['stages'])}  total ops: {payload['total_ops']}")
    print(f"E_hf: {_fmt(payload['e_hf'])}  E_g: {_fmt(payload['final_e_g'])}")
    for st in payload["stages"]:
        print(f"  stage {st['n_s']}: k={st['k']} ops={st['n_ops']} "
              f"E_g={_fmt(st['e_g'])}")
    if bad:
        for n_s, resid in bad:
            print(f"stage {n_s}: energy assembly residual {resid:.3e}")
        raise SolverError("report energies are not re-derivable from their parts")
    print("assembly check: ok")
    return EXIT_OK


def _curve_point(task):
    distance, path, fragment_text, args_dict = task
    ints = _load_integrals(path)
    frag = _parse_fragment(fragment_text, ints.L)
    cfg = SolverConfig(grad_threshold=args_dict["grad_threshold"],
                       max_ops_total=args_dict["budget"],
                       stage_schedule=args_dict["stage_schedule"],
                       measurement_epsilon=args_dict["measurement_epsilon"])
    oe = solver.oe_run(ints, frag, cfg, delta=args_dict["delta"], label=ints.label)
    e_fci, _ = oracle.fci_ground_state(ints)
    row = {"distance": distance,
           "e_oe": oe.final_e_g, "e_fci": e_fci,
           "error_oe": oe.final_e_g - e_fci,
           "ops_oe": oe.total_ops, "m_oe": oe.measurement["m_total"]}
    if args_dict["baseline"]:
        base = solver.adapt_run(ints, cfg, label=ints.label)
        row.update({"e_adapt": base.final_e_g,
                    "error_adapt": base.final_e_g - e_fci,
                    "ops_adapt": base.total_ops,
                    "m_adapt": base.measurement["m_total"]})
    return row


def curve(args):
    """Batch orbital-expansion runs over a (distance, fcidump) manifest."""
    if not os.path.exists(args.manifest):
        raise InputError(f"manifest not found: {args.manifest}")
    base_dir = os.path.dirname(os.path.abspath(args.manifest))
    points = []
    with open(args.manifest) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise InputError(f"{args.manifest}:{lineno}: expected 'distance path'")
            path = parts[1]
            if not os.path.isabs(path):
                path = os.path.join(base_dir, path)
            points.append((float(parts[0]), path))
    if not points:
        raise InputError("manifest lists no points")
    if args.fragment is None:
        raise InputError("curve requires --fragment")

    args_dict = {"grad_threshold": args.grad_threshold, "budget": args.budget,
                 "stage_schedule": args.stage_schedule, "delta": args.delta,
                 "baseline": args.baseline,
                 "measurement_epsilon": args.measurement_epsilon}
    tasks = [(d, p, args.fragment, args_dict) for d, p in points]

    columns = ["distance", "e_oe", "e_adapt", "e_fci", "error_oe", "error_adapt",
               "ops_oe", "ops_adapt", "m_oe", "m_adapt"]
    if not args.baseline:
        columns = [c for c in columns if not c.endswith("adapt")]
    rows = [tuple(columns)]
    failed = None
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_curve_point, tasks))
        else:
            results = [_curve_point(t) for t in tasks]
    except (ScfError, SolverError, OracleError) as exc:
        failed = exc
        results = []

    for row in results:
        rows.append(tuple(_fmt(row[c]) if isinstance(row[c], float) else row[c]
                          for c in columns))
    _write_csv(args.output, rows)
    if failed is not None:
        print(f"curve aborted: {failed}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring

def _add_solver_flags(p):
    p.add_argument("--budget", type=int, default=100,
                   help="total operator budget (default 100)")
    p.add_argument("--grad-threshold", type=_parse_thresholds, default=1e-3,
                   help="gradient threshold, one value or comma list per stage")
    p.add_argument("--bfgs-tol", type=float, default=1e-9)
    p.add_argument("--bfgs-max-iter", type=int, default=500)
    p.add_argument("--newest-only", action="store_true",
                   help="re-optimize only the newest parameter after each append")
    p.add_argument("--stage-schedule", type=_parse_schedule, default=None,
                   help="comma list of stage sizes to visit (default 0..N)")
    p.add_argument("--measurement-epsilon", type=float, default=1e-3)
    p.add_argument("--delta", type=float, default=1e-6,
                   help="bath occupation threshold")
    p.add_argument("--seed", type=int, default=0)


def _build_parser():
    parser = _Parser(prog="oevqe", description=__doc__)
    parser.add_argument("--config", default=None,
                        help="KEY=VALUE defaults file; explicit flags win")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="orbital-expansion or baseline solver run")
    p_run.add_argument("--fcidump", required=True)
    p_run.add_argument("--fragment", default=None,
                       help="comma list of fragment orbital indices")
    p_run.add_argument("--mode", default="oe-adapt",
                       choices=["oe-adapt", "oe-uccsd", "adapt"])
    p_run.add_argument("--json", default="report.json",
                       help="JSON report path (default report.json)")
    p_run.add_argument("--csv", default=None, help="per-stage CSV path")
    _add_solver_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_adapt = sub.add_parser("adapt", help="baseline full-space ADAPT run")
    p_adapt.add_argument("--fcidump", required=True)
    p_adapt.add_argument("--fragment", default=None)
    p_adapt.add_argument("--json", default="report.json")
    p_adapt.add_argument("--csv", default=None)
    _add_solver_flags(p_adapt)
    p_adapt.set_defaults(func=lambda a: _cmd_run(a, mode_override="adapt"))

    p_rank = sub.add_parser("rank", help="emit the environment ranking as CSV")
    p_rank.add_argument("--fcidump", required=True)
    p_rank.add_argument("--fragment", default=None)
    p_rank.add_argument("--delta", type=float, default=1e-6)
    p_rank.add_argument("--output", default="-")
    p_rank.set_defaults(func=_cmd_rank)

    p_scf = sub.add_parser("scf", help="restricted Hartree-Fock summary")
    p_scf.add_argument("--fcidump", required=True)
    p_scf.set_defaults(func=_cmd_scf)

    p_fci = sub.add_parser("fci", help="exact ground-state energy")
    p_fci.add_argument("--fcidump", required=True)
    p_fci.set_defaults(func=_cmd_fci)

    p_bp = sub.add_parser("bp-var", help="pool-gradient variance experiment")
    p_bp.add_argument("--qubits", default="4,6,8")
    p_bp.add_argument("--samples", type=int, default=2000)
    p_bp.add_argument("--seed", type=int, default=0)
    p_bp.add_argument("--output", default="-")
    p_bp.set_defaults(func=_cmd_bp_var)

    p_rep = sub.add_parser("report", help="validate and summarize a JSON report")
    p_rep.add_argument("--input", required=True)
    p_rep.set_defaults(func=_cmd_report)

    p_curve = sub.add_parser("curve", help="batch runs over a distance manifest")
    p_curve.add_argument("--manifest", required=True)
    p_curve.add_argument("--fragment", default=None)
    p_curve.add_argument("--baseline", action="store_true",
                         help="also run full-space ADAPT per point")
    p_curve.add_argument("--jobs", type=int, default=1)
    p_curve.add_argument("--output", default="-")
    _add_solver_flags(p_curve)
    p_curve.set_defaults(func=curve)

    return parser


def _apply_config_file(parser, argv):
    """Inject config-file values as defaults for the chosen subcommand."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise InputError("--config needs a path")
    values = _read_config_file(argv[i + 1])
    head = argv[:i] + argv[i + 2:]
    if not head:
        return head
    out = list(head)
    given = {tok.split("=", 1)[0] for tok in head if tok.startswith("--")}
    for key, val in values.items():
        flag = "--" + key.replace("_", "-")
        if flag not in given:
            out.extend([flag, val])
    return out


def main(argv=None):
    """Entry point; returns the process exit code."""
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        np.random.seed(getattr(args, "seed", 0) or 0)
        return args.func(args)
    except (InputError, FcidumpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ScfError, SolverError, OracleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def console_main():
    raise SystemExit(main())
