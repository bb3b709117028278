"""Command-line driver.

Commands::

    smallgain certify        <config> [--mode global|relative] [--out FILE]
    smallgain simulate       <config> [--closed|--open] [--runs N] [--out DIR]
    smallgain sweep          <config> --param k --from A --to B --steps N
                             [--simulate] [--runs N] [--out FILE]
    smallgain check-decrease <config> --stage I --input-interval C D
                             [--target LO HI]
    smallgain gain           <config> --stage I --input-interval C D

Exit codes: 0 success, 2 a check failed and carries a witness, 1 any
error.  Outputs are written to a temporary file and renamed on success,
so no command leaves a partial file behind.  Timestamps appear only in
one comment line per CSV; certificates carry none, so identical configs
produce byte-identical certificates.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from .behaviors import CascadeSpec, EquilibriumMap, Feedback
from .certify import certify, validate_certificate
from .config import RunConfig, load_config
from .decrease import DistanceToInterval, stage_gain, verify_u_decrease
from .errors import SmallGainError
from .signals import asymptotic_amplitude, limit_value
from .simulate import ensemble, simulate_open


def _timestamp_comment() -> str:
    return f"generated: {datetime.datetime.now(datetime.timezone.utc).isoformat()}"


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _ode_stage(cfg: RunConfig, ordinal: int):
    odes = cfg.cascade.ode_stages()
    if not (0 <= ordinal < len(odes)):
        raise SmallGainError(
            f"dynamic stage index {ordinal} out of range (cascade has {len(odes)})"
        )
    return odes[ordinal][1]


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


# ---------------------------------------------------------------------------
# certify


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    cert = certify(cfg.cascade, mode=args.mode, config_digest=cfg.digest)
    doc = cert.to_json_dict()
    if args.validate_runs:
        sim = replace(cfg.sim, seed=seed)
        if not cert.contraction.holds:
            print("contraction fails; skipping validation", file=sys.stderr)
        else:
            report = validate_certificate(cert, cfg.cascade, sim, args.validate_runs, args.tol)
            doc["validation"] = report.to_json_dict()
    out = cfg.resolve_out_dir(None) / f"certificate-{args.mode}.json"
    if args.out:
        out = Path(args.out)
    _write_atomic(out, json.dumps(doc, indent=2) + "\n")
    print(f"wrote {out}")
    if cert.contraction.holds:
        print(
            f"contraction holds: loop factor {cert.loop_factor:.6g}"
            + (f", k_max {cert.k_max:.6g}" if cert.k_max is not None else "")
        )
        return 0
    print(f"contraction FAILS at r = {cert.contraction.witness!r}")
    return 2


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    sim = replace(cfg.sim, seed=seed)
    closed = not args.open if (args.open or args.closed) else cfg.cascade.feedback is not None
    out_dir = cfg.resolve_out_dir(args.out)
    stamp = _timestamp_comment()
    echo = (
        stamp,
        f"config: {Path(args.config).name} ({cfg.digest})",
        f"dt={sim.dt:.17g} horizon={sim.horizon:.17g} clamp_tol={sim.clamp_tol:.17g} seed={seed}",
        f"mode={'closed' if closed else 'open'}",
    )
    if closed:
        if cfg.cascade.feedback is None:
            raise SmallGainError("closed-loop simulation needs [cascade.feedback]")
        trajs = ensemble(cfg.cascade, sim, args.runs)
    else:
        if args.runs != 1:
            raise SmallGainError("open-loop simulation runs once; drop --runs")
        if cfg.histories is None:
            raise SmallGainError("open-loop simulation needs a [histories] section")
        trajs = [
            simulate_open(
                cfg.cascade.without_feedback(), cfg.make_input_signal(), cfg.histories, sim
            )
        ]

    n_states = len(trajs[0].states)
    head = ["run"]
    head += [f"x{i + 1}_limit" for i in range(n_states)]
    head += [f"x{i + 1}_amplitude" for i in range(n_states)]
    head += ["omega_amplitude"]
    rows = [f"# {stamp}", ",".join(head)]
    warned = False
    for r, traj in enumerate(trajs):
        _write_atomic(out_dir / f"run-{r:03d}.csv", traj.to_csv_text(echo))
        cells = [str(r)]
        for sig in traj.states:
            lim = limit_value(sig, eps=args.tol, tail_fraction=0.5)
            if lim is None and not warned:
                print(
                    "warning: a state has not settled within tolerance; "
                    "its limit is reported as 'none' (horizon may be too short)",
                    file=sys.stderr,
                )
                warned = True
            cells.append(_fmt(float(lim[0]) if lim is not None else None))
        for sig in traj.states:
            cells.append(_fmt(asymptotic_amplitude(sig, 0.5)))
        cells.append(_fmt(asymptotic_amplitude(trajs[r].effective_input, 0.5)))
        rows.append(",".join(cells))
    rows.append(f"# max_limit_spread: {_fmt(_limit_spread(trajs, args.tol))}")
    _write_atomic(out_dir / "summary.csv", "\n".join(rows) + "\n")
    print(f"wrote {len(trajs)} run file(s) and summary.csv under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# sweep


def cmd_sweep(args) -> int:
    if args.param != "k":
        raise SmallGainError(f"only --param k is supported, got {args.param!r}")
    cfg = load_config(args.config)
    if cfg.cascade.feedback is None:
        raise SmallGainError("sweep needs [cascade.feedback] as the baseline")
    seed = args.seed if args.seed is not None else cfg.seed
    if args.steps < 1:
        raise SmallGainError("--steps must be >= 1")
    ks = np.linspace(args.start, args.stop, args.steps)
    head = [
        "k",
        "global_holds",
        "global_loop_factor",
        "global_k_max",
        "relative_holds",
        "relative_loop_factor",
    ]
    if args.simulate:
        head.append("simulated_spread")
    rows = [f"# {_timestamp_comment()}", ",".join(head)]
    base_fb = cfg.cascade.feedback
    for k in ks:
        fb = Feedback(mu=base_fb.mu, k=float(k), tau=base_fb.tau)
        cascade = replace_feedback(cfg.cascade, fb)
        cg = certify(cascade, "global", config_digest=cfg.digest)
        cr = certify(cascade, "relative", config_digest=cfg.digest)
        cells = [
            _fmt(float(k)),
            _fmt(cg.contraction.holds),
            _fmt(cg.loop_factor),
            _fmt(cg.k_max),
            _fmt(cr.contraction.holds),
            _fmt(cr.loop_factor),
        ]
        if args.simulate:
            sim = replace(cfg.sim, seed=seed)
            runs = ensemble(cascade, sim, args.runs)
            spread = _limit_spread(runs, args.tol)
            cells.append(_fmt(spread))
        rows.append(",".join(cells))
    out = cfg.resolve_out_dir(None) / "sweep.csv"
    if args.out:
        out = Path(args.out)
    _write_atomic(out, "\n".join(rows) + "\n")
    print(f"wrote {out}")
    return 0


def replace_feedback(cascade: CascadeSpec, fb: Feedback) -> CascadeSpec:
    return CascadeSpec(cascade.stages, fb)


def _limit_spread(runs, tol) -> float | None:
    n_states = len(runs[0].states)
    spread = 0.0
    for i in range(n_states):
        vals = []
        for traj in runs:
            lim = limit_value(traj.states[i], eps=tol, tail_fraction=0.5)
            if lim is None:
                return None
            vals.append(float(lim[0]))
        spread = max(spread, max(vals) - min(vals))
    return spread


# ---------------------------------------------------------------------------
# check-decrease


def cmd_check_decrease(args) -> int:
    cfg = load_config(args.config)
    stage = _ode_stage(cfg, args.stage)
    c, d = args.input_interval
    if args.target is not None:
        target = DistanceToInterval(args.target[0], args.target[1])
    else:
        em = EquilibriumMap(stage)
        target = DistanceToInterval(em.g_inv(c), em.g_inv(d))
    report = verify_u_decrease(target, stage, (c, d))
    if report.ok:
        note = " (vacuous: zero set covers the interval)" if report.vacuous else ""
        print(f"decrease check PASSED: worst directional derivative {report.margin_found:.6g}{note}")
        return 0
    w = report.witness
    print(
        "decrease check FAILED: directional derivative "
        f"{w.directional_derivative:.6g} at x = {w.x:.9g}, u = {w.u:.9g}"
    )
    return 2


# ---------------------------------------------------------------------------
# gain


def cmd_gain(args) -> int:
    cfg = load_config(args.config)
    stage = _ode_stage(cfg, args.stage)
    sgn = stage_gain(stage, tuple(args.input_interval))
    print(f"input interval: [{sgn.input_interval[0]:.9g}, {sgn.input_interval[1]:.9g}]")
    print(f"lipschitz gain: {sgn.gain.slope:.9g}")
    print(f"resting set:    [{sgn.z_set[0]:.9g}, {sgn.z_set[1]:.9g}]")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="smallgain",
        description="Convergence certificates for delayed feedback cascades.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="path to a TOML run file")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")

    sp = sub.add_parser("certify", help="emit a small-gain certificate")
    common(sp)
    sp.add_argument("--mode", choices=["global", "relative"], default="global")
    sp.add_argument("--out", default=None, help="certificate file (default: out dir)")
    sp.add_argument("--validate-runs", type=int, default=0, metavar="N",
                    help="also cross-check with an N-run ensemble")
    sp.add_argument("--tol", type=float, default=1e-5, help="limit tolerance for validation")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("simulate", help="integrate the cascade and emit CSV trajectories")
    common(sp)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--closed", action="store_true", help="simulate the feedback loop")
    g.add_argument("--open", action="store_true", help="simulate the open chain")
    sp.add_argument("--runs", type=int, default=1, help="ensemble size (closed loop)")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--tol", type=float, default=1e-5, help="limit tolerance for the summary")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="tabulate certificates across a feedback range")
    common(sp)
    sp.add_argument("--param", default="k")
    sp.add_argument("--from", dest="start", type=float, required=True)
    sp.add_argument("--to", dest="stop", type=float, required=True)
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--simulate", action="store_true", help="add a simulated-spread column")
    sp.add_argument("--runs", type=int, default=3, help="ensemble size per k with --simulate")
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.add_argument("--out", default=None, help="table file (default: out dir/sweep.csv)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check-decrease", help="verify a decrease function on a stage")
    common(sp)
    sp.add_argument("--stage", type=int, required=True, help="dynamic stage ordinal (0-based)")
    sp.add_argument("--input-interval", type=float, nargs=2, required=True, metavar=("C", "D"))
    sp.add_argument("--target", type=float, nargs=2, default=None, metavar=("LO", "HI"),
                    help="override the target interval (default: resting set of the inputs)")
    sp.set_defaults(func=cmd_check_decrease)

    sp = sub.add_parser("gain", help="print a stage's gain and resting set")
    common(sp)
    sp.add_argument("--stage", type=int, required=True, help="dynamic stage ordinal (0-based)")
    sp.add_argument("--input-interval", type=float, nargs=2, required=True, metavar=("C", "D"))
    sp.set_defaults(func=cmd_gain)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SmallGainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
