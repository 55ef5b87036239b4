"""Command-line front-end wiring JSON configs to the library modules.

Subcommands: ``simulate`` (the coupled Monte Carlo run), ``tails`` and
``rates`` (post-processing of sample CSVs), ``bounds`` (closed-form moment
bounds from a summary JSON), ``discrepancy`` (tilted quadrature sweeps),
``validate`` (spec invariants plus the attraction tail-limit diagnostic), and
``dump-paths`` (trajectory CSVs for figure work).

Exit codes: 0 success; 1 usage or configuration error (message on stderr);
2 numeric failure (quadrature breakdown, integration abort) with a
``diagnostics.json`` dropped next to the outputs.  Every output file is
recorded in ``summary.json`` with a content hash.  Worker counts are chosen
here — the library modules expose pure per-cell tasks — and the environment
variable ``LCL_THREADS`` caps whatever ``--threads`` requests.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import bounds as bd
from . import experiments as xp
from .levy_model import AugmentedSpec, RadialTail, normalizing_g
from .sde_engine import IntegrationError, integrate_pair

PATHS_HEADER = "run_id,t,replicate,leg,time,coord,value"
EVENTS_HEADER = "run_id,t,replicate,time,coord,jump1,jump2,shared"
DISCREPANCY_HEADER = "t,lhs,envelope,drift_gap"
_DUMP_REPLICATES = 5


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2 by default; the contract here
    reserves 2 for numeric failures, so usage errors exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="lcl")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run the coupled Monte Carlo campaign")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", required=True, type=int)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--paper-grid", action="store_true")
    sim.add_argument("--resume", action="store_true")
    sim.add_argument("--dump-events", action="store_true")
    sim.add_argument("--dump-paths", action="store_true")

    tails = sub.add_parser("tails", help="tail curves from a run directory")
    tails.add_argument("--in", dest="indir", required=True)
    tails.add_argument("--out")
    tails.add_argument(
        "--rate-exponent",
        type=float,
        default=0.0,
        help="normalize distances by t**exponent before the survival curves",
    )

    rates = sub.add_parser("rates", help="rate-slope regression from a run directory")
    rates.add_argument("--in", dest="indir", required=True)
    rates.add_argument("--out")
    rates.add_argument("--statistic", default="median")
    rates.add_argument("--theta", type=float, default=1.0)
    rates.add_argument("--force-mean", action="store_true")

    bnd = sub.add_parser("bounds", help="closed-form moment bounds from a summary JSON")
    bnd.add_argument("--config", required=True)
    bnd.add_argument("--order", type=int, choices=(1, 2))
    bnd.add_argument("--out")

    dis = sub.add_parser("discrepancy", help="tilted discrepancy quadrature sweep")
    dis.add_argument("--config", required=True)
    dis.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="spec invariants and the tail-limit diagnostic")
    val.add_argument("--config")
    val.add_argument("--out", default=".")

    dmp = sub.add_parser("dump-paths", help="trajectory CSVs for figure work")
    dmp.add_argument("--config", required=True)
    dmp.add_argument("--out", required=True)
    dmp.add_argument("--seed", type=int, default=0)
    return p


# ---------------------------------------------------------------------------
# manifest plumbing


def _sha256(path: Path) -> str:
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def _record_manifest(out: Path, subcommand, config_path, config_obj, outputs):
    """Merge this subcommand's manifest into summary.json: every output file
    with a content hash, plus the resolved config hash."""
    summary_path = out / "summary.json"
    summary = (
        json.loads(summary_path.read_text()) if summary_path.exists() else {"schema": xp.SCHEMA}
    )
    manifest = {
        "subcommand": subcommand,
        "config_path": None if config_path is None else str(config_path),
        "config_hash": "sha256:"
        + hashlib.sha256(json.dumps(config_obj, sort_keys=True).encode()).hexdigest(),
        "outputs": {p.name: _sha256(p) for p in outputs},
        "exit_status": 0,
    }
    summary.setdefault("manifests", {})[subcommand] = manifest
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary_path


def _threads(args) -> int:
    requested = max(1, getattr(args, "threads", 1) or 1)
    cap = os.environ.get("LCL_THREADS")
    if cap is not None:
        requested = min(requested, max(1, int(cap)))
    return requested


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path} is not valid JSON: {e}") from None


# ---------------------------------------------------------------------------
# dump writers


def _dump_paths_csv(cfg: xp.ExperimentConfig, out: Path) -> Path:
    sampler = xp._make_sampler(cfg)
    run_id = cfg.run_id
    lines = [PATHS_HEADER]
    for t in cfg.t_grid:
        for rep in range(min(cfg.N, _DUMP_REPLICATES)):
            stream, _ = xp._cell_stream(cfg, sampler, float(t), rep)
            p1, p2 = integrate_pair(stream, cfg.V, cfg.x0, cfg.h)
            for leg, path in ((1, p1), (2, p2)):
                for k in range(path.times.size):
                    for j in range(path.values.shape[1]):
                        lines.append(
                            f"{run_id},{xp._fmt(t)},{rep},{leg},"
                            f"{xp._fmt(path.times[k])},{j},{xp._fmt(path.values[k, j])}"
                        )
    target = out / "paths.csv"
    target.write_text("\n".join(lines) + "\n")
    return target


def _dump_events_csv(cfg: xp.ExperimentConfig, out: Path) -> Path:
    sampler = xp._make_sampler(cfg)
    run_id = cfg.run_id
    lines = [EVENTS_HEADER]
    for t in cfg.t_grid:
        for rep in range(min(cfg.N, _DUMP_REPLICATES)):
            stream, _ = xp._cell_stream(cfg, sampler, float(t), rep)
            for k in range(stream.times.size):
                for j in range(stream.d):
                    lines.append(
                        f"{run_id},{xp._fmt(t)},{rep},{xp._fmt(stream.times[k])},{j},"
                        f"{xp._fmt(stream.jump1[k, j])},{xp._fmt(stream.jump2[k, j])},"
                        f"{int(stream.shared[k])}"
                    )
    target = out / "events.csv"
    target.write_text("\n".join(lines) + "\n")
    return target


# ---------------------------------------------------------------------------
# subcommands


def _cmd_simulate(args) -> int:
    obj = _load_json(args.config)
    obj["seed"] = args.seed
    obj["out_dir"] = str(args.out)
    if args.paper_grid:
        obj["t_grid"] = xp.paper_t_grid().tolist()
        obj["N"] = 5000
    cfg = xp.ExperimentConfig.from_dict(obj)
    print(
        f"queued: {cfg.t_grid.size} t-values x {cfg.N} replicates "
        f"({cfg.t_grid.size * cfg.N} cells)"
    )
    res = xp.run_coupled_mc(cfg, workers=_threads(args), resume=args.resume)
    print(f"computed {res.n_computed} cells, skipped {res.n_skipped} completed cells")
    out = Path(args.out)
    outputs = [res.samples_path, res.theta_path]
    if args.dump_events:
        outputs.append(_dump_events_csv(cfg, out))
    if args.dump_paths:
        outputs.append(_dump_paths_csv(cfg, out))
    _record_manifest(out, "simulate", args.config, cfg.to_dict(), outputs)
    print(f"wrote {res.samples_path}")
    return 0


def _cmd_tails(args) -> int:
    indir = Path(args.indir)
    out = Path(args.out) if args.out else indir
    out.mkdir(parents=True, exist_ok=True)
    run = xp.read_run(indir)
    expo = args.rate_exponent
    curves = xp.tail_curves(
        run["by_t"], f=lambda t: t**expo, aborted=run["aborted"]
    )
    target = out / "tails.csv"
    xp.write_tails_csv(target, curves, run["run_id"])
    _record_manifest(
        out, "tails", None, {"in": str(indir), "rate_exponent": expo}, [target]
    )
    print(f"wrote {target} ({len(curves)} curves x {curves[0].r_grid.size} thresholds)")
    return 0


def _alpha_of_run(indir: Path):
    summary = indir / "summary.json"
    if not summary.exists():
        return None
    obj = json.loads(summary.read_text())
    try:
        return float(obj["config"]["driver"]["base"]["alpha"])
    except (KeyError, TypeError):
        return None


def _cmd_rates(args) -> int:
    indir = Path(args.indir)
    out = Path(args.out) if args.out else indir
    out.mkdir(parents=True, exist_ok=True)
    run = xp.read_run(indir)
    fit = xp.rate_fit(
        run["by_t"],
        statistic=args.statistic,
        alpha=_alpha_of_run(indir),
        force=args.force_mean,
        theta=args.theta,
        theta_by_t=run["theta_by_t"] if args.statistic == "theta-mean" else None,
    )
    target = out / "ratefit.csv"
    xp.write_ratefit_csv(target, [fit], run["run_id"])
    _record_manifest(
        out, "rates", None,
        {"in": str(indir), "statistic": args.statistic, "theta": args.theta},
        [target],
    )
    print(
        f"statistic {fit.statistic}: slope = {fit.slope:.6g} "
        f"+/- {fit.stderr:.6g}, intercept = {fit.intercept:.6g}"
    )
    return 0


def _cmd_bounds(args) -> int:
    obj = _load_json(args.config)
    if obj.get("schema") != xp.SCHEMA:
        raise ValueError(f"unsupported schema {obj.get('schema')!r}")
    kind = obj.get("kind", "gronwall")
    if kind == "additive-wasserstein":
        factor = bd.additive_wasserstein_factor(obj["q"], obj["K"], obj["T"])
        print(f"factor = {factor:.17g}")
        payload = {"kind": kind, "factor": factor}
    elif kind == "gronwall":
        summary = bd.DriverSummary(**obj["summary"])
        order = args.order if args.order is not None else int(obj.get("order", 2))
        coupling = obj.get("coupling", "thinning")
        if coupling == "thinning":
            report = bd.gronwall_bound_thinning(summary, obj["T"], order=order)
        elif coupling == "comonotonic":
            report = bd.gronwall_bound_como(summary, obj["T"], order=order)
        else:
            raise ValueError(f"unknown coupling {coupling!r}")
        print(f"kappa = {report.kappa:.17g}")
        print(f"eta = {report.eta:.17g}")
        print(f"bound = {report.bound:.17g}")
        payload = {
            "kind": kind, "coupling": coupling, "order": order,
            "kappa": report.kappa, "eta": report.eta, "bound": report.bound,
            "breakdown": report.breakdown,
        }
    else:
        raise ValueError(f"unknown bounds kind {kind!r}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        target = out / "bounds.json"
        target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _record_manifest(out, "bounds", args.config, obj, [target])
    return 0


def _cmd_discrepancy(args) -> int:
    obj = _load_json(args.config)
    if obj.get("schema") != xp.SCHEMA:
        raise ValueError(f"unsupported schema {obj.get('schema')!r}")
    spec = AugmentedSpec.from_dict(obj["driver"])
    coupling = obj.get("coupling", "thinning")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = [DISCREPANCY_HEADER]
    for t in sorted((float(t) for t in obj["t_grid"]), reverse=True):
        report = bd.discrepancy_integrals(
            spec, t, obj["theta"], obj["r"], coupling, obj.get("delta")
        )
        lines.append(
            f"{xp._fmt(t)},{xp._fmt(report.lhs)},"
            f"{xp._fmt(report.envelope)},{xp._fmt(report.drift_gap)}"
        )
        print(
            f"t = {t:.6g}: lhs = {report.lhs:.6g}, envelope = {report.envelope:.6g}"
        )
    target = out / "discrepancy.csv"
    target.write_text("\n".join(lines) + "\n")
    _record_manifest(out, "discrepancy", args.config, obj, [target])
    return 0


def _validate_spec(spec: AugmentedSpec):
    """Invariant checks plus the attraction diagnostic; returns
    (name, passed, detail) triples."""
    checks = []

    clone = AugmentedSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    checks.append(("config round-trip", clone.to_dict() == spec.to_dict(), ""))

    sig = spec.base.sigma
    if sig.is_uniform:
        checks.append(("angular measure normalized", True, "uniform"))
    else:
        total = float(np.sum(sig.weights))
        checks.append(
            ("angular measure normalized", abs(total - 1.0) < 1e-12, f"mass {total}")
        )

    v = np.eye(spec.base.d)[0] if sig.is_uniform else sig.directions[0]
    # slowly-varying tails go through an inner quadrature whose accuracy
    # degrades at extreme arguments: sample them on a moderate window
    xs = np.logspace(-6, 3, 40) if spec.is_dona else np.logspace(-4, 2, 30)
    tails = np.array([float(spec.tail(x, v)) for x in xs])
    dt = np.diff(tails)
    # strictly decreasing while positive; a truncated tail is zero beyond
    # its cutoff and stays flat there
    ok = bool(np.all(dt <= 0) and np.all(dt[tails[:-1] > 0] < 0))
    checks.append(("radial tail decreasing", ok, ""))

    if spec.is_dona:
        K, p = spec.dona_constants()
        q = spec.Q(xs, v) / spec.base.c_alpha - 1.0
        if math.isinf(p):
            ok = bool(np.all(np.abs(q) < 1e-12))
        else:
            ok = bool(np.all(np.abs(q) <= K * np.minimum(1.0, xs**p) * (1 + 1e-9)))
        checks.append(("density envelope", ok, f"K={K:.6g}, p={p:.6g}"))
    else:
        hs = np.array([spec.donna.H2(t) for t in (1e-2, 1e-4, 1e-6)])
        checks.append(
            ("slow-variation bundle", bool(np.all(hs >= 0)), "H2 sampled")
        )

    tail_obj = RadialTail.from_augmented(spec)
    ok = True
    for u in (0.1, 10.0):
        x = tail_obj._inverse_scalar(0, u)
        ok = ok and abs(float(spec.tail(x, v)) / u - 1.0) < 1e-8
    checks.append(("tail inverse round-trip", ok, "u in {0.1, 10}"))

    if spec.q_kind in ("tempered", "truncated"):
        ratio = np.asarray(spec.density_ratio(xs, v), dtype=float)
        ok = bool(np.all((ratio >= 0.0) & (ratio <= 1.0)))
        checks.append(("density ratio within [0, 1]", ok, "thinnable"))

    # attraction diagnostic: t * tail(g(t) x) must approach the stable tail.
    # Normal attraction converges at a power rate; slow variation only
    # logarithmically, so its window and tolerance are looser.
    a = spec.base.alpha
    x_ref = 1.0
    stable_tail = float(spec.base.radial_tail(x_ref))
    ts_diag, tol = ((1e-2, 1e-4, 1e-6), 1e-3) if spec.is_dona else (
        (1e-2, 1e-3, 1e-4), 0.25
    )
    devs = []
    for t in ts_diag:
        g = (
            t ** (1.0 / a)
            if spec.is_dona
            else normalizing_g(spec.donna, a, t).g
        )
        devs.append(abs(t * float(spec.tail(g * x_ref, v)) / stable_tail - 1.0))
    detail = "deviations " + ", ".join(f"{d:.3g}" for d in devs)
    # approach the limit monotonically, or sit at it already (stable driver)
    ok = devs[-1] < tol and (devs[0] >= devs[-1] or max(devs) < 1e-9)
    checks.append(("attraction tail-limit", ok, detail))
    return checks


def _cmd_validate(args) -> int:
    if args.config:
        obj = _load_json(args.config)
        source = args.config
    else:
        source = "bundled golden spec"
        obj = json.loads(
            resources.files("lcl").joinpath("data/golden_tempered_a07.json").read_text()
        )
    spec = AugmentedSpec.from_dict(obj)
    checks = _validate_spec(spec)
    failed = [c for c in checks if not c[1]]
    for name, ok, detail in checks:
        tag = "ok" if ok else "FAIL"
        suffix = f" ({detail})" if detail else ""
        print(f"{tag}: {name}{suffix}")
    if failed:
        raise ArithmeticError(
            f"{len(failed)} invariant(s) failed for {source}: "
            + ", ".join(c[0] for c in failed)
        )
    print(f"all invariants passed for {source}")
    return 0


def _cmd_dump_paths(args) -> int:
    obj = _load_json(args.config)
    obj["seed"] = args.seed
    obj["out_dir"] = str(args.out)
    cfg = xp.ExperimentConfig.from_dict(obj)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    target = _dump_paths_csv(cfg, out)
    _record_manifest(out, "dump-paths", args.config, cfg.to_dict(), [target])
    print(f"wrote {target}")
    return 0


_DISPATCH = {
    "simulate": _cmd_simulate,
    "tails": _cmd_tails,
    "rates": _cmd_rates,
    "bounds": _cmd_bounds,
    "discrepancy": _cmd_discrepancy,
    "validate": _cmd_validate,
    "dump-paths": _cmd_dump_paths,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _DISPATCH[args.cmd](args)
    except (ArithmeticError, IntegrationError) as e:
        out = Path(getattr(args, "out", None) or ".")
        out.mkdir(parents=True, exist_ok=True)
        diag = out / "diagnostics.json"
        diag.write_text(
            json.dumps(
                {
                    "schema": xp.SCHEMA,
                    "subcommand": args.cmd,
                    "error": type(e).__name__,
                    "message": str(e),
                    "argv": argv,
                },
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
        print(f"numeric failure: {e} (diagnostics in {diag})", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError, NotImplementedError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
