"""Batch driver.

    wglab <command> [config.yaml] [--set key.path=value ...] [--out DIR] [--workers N] [--svg]

Commands: compute-i, profile, minimize, sweep, trial, bound, fit, validate.
Every CSV starts with a ``# config_sha256=...`` comment line; JSON files carry
the same hash in a ``config_sha256`` field and SVG files in an XML comment.
Field snapshots use the raw binary snapshot format and are listed, with the
hash, in ``manifest.csv``.

Exit status: 0 success, 1 failed validation checks, 2 config error,
3 precondition error (a bound or construction does not apply).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml
from pydantic import ValidationError

from .bounds import (
    TrialField,
    TrialPlan,
    fit_asymptotics,
    i_evaluator,
    perforated_lower_bound,
    slope_test,
    upper_bound_terms,
    vortex_distance_report,
)
from .config import ExperimentConfig, load_config
from .errors import PreconditionError, ResolutionError
from .field import write_snapshot
from .iquant import compute_I, compute_I_Rc, solve_profile
from .minimizer import cluster_vortices, find_bad_discs, minimize, sweep
from .potential import j_at_rho0, validate_hypotheses
from .weight import validate_sandwich

log = logging.getLogger("wglab")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3


class Outputs:
    """Writes hashed artifacts into one directory and records them."""

    def __init__(self, directory: Path, cfg: ExperimentConfig, command: str):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.hash = cfg.config_hash
        self.command = command
        self.files: list[str] = []

    def csv(self, name: str, header: list[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.hash} command={self.command}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in header])
        return self._write(name, buf.getvalue())

    def json(self, name: str, payload: dict) -> Path:
        data = {"config_sha256": self.hash, "command": self.command, **payload}
        return self._write(name, json.dumps(data, indent=2, sort_keys=True, default=_fmt) + "\n")

    def snapshot(self, name: str, field_) -> Path:
        path = self.dir / name
        write_snapshot(field_, path)
        self.files.append(name)
        return path

    def svg(self, name: str, x, ys: dict, xlabel: str, ylabel: str) -> Path | None:
        try:
            import matplotlib
            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            log.warning("matplotlib not installed; skipping %s", name)
            return None
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label, y in ys.items():
            ax.plot(x, y, "o-", label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
        text = buf.getvalue()
        head, sep, rest = text.partition("?>\n")
        text = f"{head}{sep}<!-- config_sha256={self.hash} command={self.command} -->\n{rest}"
        return self._write(name, text)

    def manifest(self) -> Path:
        rows = [{"file": f} for f in sorted(set(self.files))]
        return self.csv("manifest.csv", ["file"], rows)

    def _write(self, name: str, text: str) -> Path:
        path = self.dir / name
        path.write_text(text)
        self.files.append(name)
        return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return ";".join(str(_fmt(x)) for x in v)
    return v


def _clusters(cfg: ExperimentConfig) -> list[tuple[int, float]]:
    sites = cfg.weight.sites
    d = cfg.boundary.d
    if not sites:
        return [(d, 2.0)]
    degs = cfg.trial.degrees or [d] + [0] * (len(sites) - 1)
    return [(dk, s.s) for dk, s in zip(degs, sites)]


# --- commands --------------------------------------------------------------

def cmd_compute_i(cfg, out: Outputs, args) -> int:
    pot = cfg.potential_spec()
    closed = j_at_rho0(pot) if pot.kind == "quartic" else None
    rows = []
    for R in cfg.iquant.R:
        v = compute_I(pot, R)
        rows.append({"R": R, "c": "", "method": v.method, "I": v.value, "error_estimate": v.estimated_error,
                     "closed_form": closed - 1.0 / R**2 if closed is not None else "", "warning": v.warning})
        for c in cfg.iquant.c:
            prof = solve_profile(pot, R, c)
            w = compute_I_Rc(prof)
            rows.append({"R": R, "c": c, "method": w.method, "I": w.value, "error_estimate": w.estimated_error,
                         "closed_form": "", "warning": w.warning})
    out.csv("i.csv", ["R", "c", "method", "I", "error_estimate", "closed_form", "warning"], rows)
    return EXIT_OK


def cmd_profile(cfg, out: Outputs, args) -> int:
    pot = cfg.potential_spec()
    summary, samples = [], []
    for R in cfg.iquant.R:
        for c in cfg.iquant.c:
            prof = solve_profile(pot, R, c)
            summary.append({"R": R, "c": c, "lambda": prof.lam, "r_tilde0": prof.r_tilde0,
                            "constraint_residual": prof.residual, "I_Rc": compute_I_Rc(prof).value})
            idx = np.unique(np.linspace(0, prof.knots.size - 1, 256).astype(int))
            for r, f in zip(prof.knots[idx], prof.values[idx]):
                samples.append({"R": R, "c": c, "r": r, "f0": f})
    out.csv("profile_summary.csv", ["R", "c", "lambda", "r_tilde0", "constraint_residual", "I_Rc"], summary)
    out.csv("profile.csv", ["R", "c", "r", "f0"], samples)
    return EXIT_OK


SUMMARY_COLS = ["epsilon", "energy", "dirichlet", "potential", "converged", "iterations", "grad_norm",
                "n_vortices", "total_degree", "warning"]
VORTEX_COLS = ["epsilon", "index", "x", "y", "radius", "nu"]


def _solve_rows(cfg, results, out: Outputs):
    det = cfg.detector
    summary, vortices, sets = [], [], []
    for i, r in enumerate(results):
        eps = r.field.epsilon
        vs = find_bad_discs(r.field, det.lambda_mult, det.separation_factor, det.threshold)
        sets.append(vs)
        warn = [] if r.converged else [f"not converged after {r.iterations} iterations"]
        warn += vs.warnings
        summary.append({"epsilon": eps, "energy": r.final.total, "dirichlet": r.final.weighted_dirichlet,
                        "potential": r.final.potential_term, "converged": r.converged,
                        "iterations": r.iterations, "grad_norm": r.grad_norm, "n_vortices": len(vs.discs),
                        "total_degree": vs.total_degree, "warning": "; ".join(warn)})
        for j, d in enumerate(vs.discs):
            vortices.append({"epsilon": eps, "index": j, "x": d.center[0], "y": d.center[1],
                             "radius": d.radius, "nu": d.nu})
        if cfg.output.snapshots:
            out.snapshot(f"u_{i:03d}.bin", r.field)
    out.csv("summary.csv", SUMMARY_COLS, summary)
    out.csv("vortices.csv", VORTEX_COLS, vortices)
    return summary, sets


def cmd_minimize(cfg, out: Outputs, args) -> int:
    eps = cfg.sweep.values[0]
    r = minimize(cfg.solve_config(eps), cfg.weight_spec(), cfg.potential_spec())
    out.csv("trace.csv", ["iteration", "energy", "dirichlet", "potential"],
            [{"iteration": i, "energy": a + b, "dirichlet": a, "potential": b} for i, (a, b) in enumerate(r.trace)])
    _solve_rows(cfg, [r], out)
    return EXIT_OK


def cmd_sweep(cfg, out: Outputs, args) -> int:
    weight = cfg.weight_spec()
    pot = cfg.potential_spec()
    eps = cfg.sweep.values
    results = sweep(eps, cfg.solve_config(eps[0]), weight, pot)
    summary, sets = _solve_rows(cfg, results, out)
    if len(sets) >= 3:
        rep = cluster_vortices(sets, weight if weight.sites else None)
        rows = []
        for e, degs, maxd in zip(rep.epsilons, rep.degrees, rep.max_distance):
            for k, (dk, m) in enumerate(zip(degs, maxd)):
                rows.append({"epsilon": e, "site": k, "d_k": dk, "max_distance": m,
                             "normalized": m * math.log(1 / e) ** (1 / _site_s(cfg, k)) if e < 1 else ""})
        out.csv("clusters.csv", ["epsilon", "site", "d_k", "max_distance", "normalized"], rows)
        if weight.sites:
            dr = vortex_distance_report(rep, weight, i_evaluator(pot))
            out.csv("distances.csv", ["epsilon", "site", "d_k", "min_normalized", "max_normalized", "I_arg_value"],
                    dr.rows)
        out.json("clusters.json", {"unstable": rep.unstable, "notes": rep.notes})
    if len(eps) >= 4 and max(eps) / min(eps) >= 8 and max(eps) < 1 / math.e:
        fit = fit_asymptotics([(s["epsilon"], s["energy"]) for s in summary], _clusters(cfg),
                              weight.p0, i_evaluator(pot))
        out.json("fit.json", fit.to_dict())
    if cfg.output.svg or args.svg:
        L = [math.log(1 / s["epsilon"]) for s in summary]
        out.svg("energy.svg", L, {"energy": [s["energy"] for s in summary]}, "log(1/eps)", "energy")
    return EXIT_OK


def _trial_row(cfg_json: str, eps: float) -> dict:
    cfg = ExperimentConfig.model_validate_json(cfg_json)
    weight, pot = cfg.weight_spec(), cfg.potential_spec()
    degs = cfg.trial.degrees or [cfg.boundary.d] + [0] * (len(weight.sites) - 1)
    plan = TrialPlan.from_weight(weight, degs, eps, cfg.boundary.phase, cfg.trial.budget)
    e = TrialField(plan, pot).energy(weight)
    t1, t2, t3 = upper_bound_terms(eps, _clusters(cfg), weight.p0, i_evaluator(pot))
    ub = t1 + t2 + t3
    return {"epsilon": eps, "log_inv_eps": math.log(1 / eps), "energy": e.total, "dirichlet": e.weighted_dirichlet,
            "potential": e.potential_term, "upper_bound": ub, "residual": e.total - ub,
            "term_log": t1, "term_loglog": t2, "term_I": t3}


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _trial_job(job):
    return _trial_row(*job)


def cmd_trial(cfg, out: Outputs, args) -> int:
    if not cfg.weight.sites:
        raise PreconditionError("trial fields need at least one pinning site")
    jobs = [(cfg.canonical_json(), e) for e in cfg.trial.epsilons]
    rows = _map(_trial_job, jobs, args.workers)
    cols = ["epsilon", "log_inv_eps", "energy", "dirichlet", "potential", "upper_bound", "residual",
            "term_log", "term_loglog", "term_I"]
    out.csv("trial.csv", cols, rows)
    L = [r["log_inv_eps"] for r in rows]
    res = [r["residual"] for r in rows]
    payload = {"residual_min": min(res), "residual_max": max(res)}
    if len(rows) >= 3:
        slope, se = slope_test(L, res)
        payload.update(slope=slope, standard_error=se, bounded=bool(abs(slope) <= 2 * se))
    out.json("trial_fit.json", payload)
    if cfg.output.svg or args.svg:
        out.svg("trial_residual.svg", L, {"E_trial - upper bound": res}, "log(1/eps)", "residual")
    return EXIT_OK


BOUND_COLS = ["epsilon", "lhs_energy", "reference_energy", "i_correction", "interaction", "slack",
              "positive_rhs", "slack_positive", "budget", "min_modulus", "R", "R0", "a", "p0", "notes"]


def cmd_bound(cfg, out: Outputs, args) -> int:
    weight, pot = cfg.weight_spec(), cfg.potential_spec()
    I = i_evaluator(pot)
    b = cfg.bound
    rows = []
    if b.source == "trial":
        if not weight.sites:
            raise PreconditionError("trial fields need at least one pinning site")
        degs = cfg.trial.degrees or [cfg.boundary.d] + [0] * (len(weight.sites) - 1)
        for eps in cfg.trial.epsilons:
            tf = TrialField(TrialPlan.from_weight(weight, degs, eps, cfg.boundary.phase, cfg.trial.budget), pot)
            R0 = b.R0 or min(c.lam for c in tf.cores.values()) * eps
            holes = [((c.real, c.imag), R0, 1) for c in tf.centers]
            rep = perforated_lower_bound(tf, holes, b.R, b.a, weight, pot, I)
            rows.append({"epsilon": eps, **rep.to_dict()})
    else:
        eps_list = cfg.sweep.values
        det = cfg.detector
        for r in sweep(eps_list, cfg.solve_config(eps_list[0]), weight, pot):
            eps = r.field.epsilon
            vs = find_bad_discs(r.field, det.lambda_mult, det.separation_factor, det.threshold)
            R0 = b.R0 or b.R0_mult * eps
            holes = [(d.center, R0, d.nu) for d in vs.discs]
            rep = perforated_lower_bound(r.field, holes, b.R, b.a, weight, pot, I)
            rows.append({"epsilon": eps, **rep.to_dict()})
    for row in rows:
        row["notes"] = "; ".join(row["notes"])
    out.csv("bound.csv", BOUND_COLS, rows)
    slack = [r["slack"] for r in rows]
    payload = {"slack_min": min(slack)}
    if len(slack) >= 3:
        C = max(0.0, -min(slack[:2]))
        payload.update(C_fit=C, bounded=bool(min(slack[2:]) >= -1.2 * C))
    out.json("bound_fit.json", payload)
    return EXIT_OK


def _read_csv(path: Path) -> list[dict]:
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    return list(csv.DictReader(lines))


def cmd_fit(cfg, out: Outputs, args) -> int:
    src = Path(args.input) if args.input else out.dir / "summary.csv"
    rows = _read_csv(src)
    data = [(float(r["epsilon"]), float(r["energy"])) for r in rows]
    pot = cfg.potential_spec()
    fit = fit_asymptotics(data, _clusters(cfg), cfg.weight.p0, i_evaluator(pot))
    table = [{"term": t, "coefficient": fit.coefficients.get(t, ""), "standard_error": fit.standard_errors.get(t, ""),
              "theory": fit.theory.get(t, ""), "dropped": t in fit.dropped} for t in ("log", "loglog", "I", "const")]
    out.csv("fit.csv", ["term", "coefficient", "standard_error", "theory", "dropped"], table)
    out.json("fit.json", {"input": str(src), **fit.to_dict()})
    for w in fit.warnings:
        log.warning("fit: %s", w)
    return EXIT_OK


def cmd_validate(cfg, out: Outputs, args) -> int:
    rep = validate_hypotheses(cfg.potential_spec())
    weight = cfg.weight_spec()
    checks = list(rep.checks)
    if weight.sites:
        checks += validate_sandwich(weight, weight.cutoff).checks
    rows = [{"check": c.name, "passed": c.passed, "witness": "" if c.witness is None else c.witness,
             "detail": c.detail} for c in checks]
    out.csv("validate.csv", ["check", "passed", "witness", "detail"], rows)
    for c in checks:
        print(("PASS " if c.passed else "FAIL ") + c.name)
    return EXIT_OK if all(c.passed for c in checks) else EXIT_CHECKS


def _site_s(cfg, k: int) -> float:
    sites = cfg.weight.sites
    return sites[k].s if k < len(sites) else 2.0


COMMANDS = {
    "compute-i": cmd_compute_i,
    "profile": cmd_profile,
    "minimize": cmd_minimize,
    "sweep": cmd_sweep,
    "trial": cmd_trial,
    "bound": cmd_bound,
    "fit": cmd_fit,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wglab", description="Weighted Ginzburg-Landau numerical lab")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", nargs="?", help="YAML experiment config (defaults apply when omitted)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. --set grid.n=256")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--workers", type=int, default=1, help="process pool size for independent sweep points")
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.add_argument("--input", help="energy CSV for the fit command (default: <out>/summary.csv)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _config_error(msg: str) -> int:
    print(f"config error: {msg}", file=sys.stderr)
    return EXIT_CONFIG


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = list(args.overrides)
    if args.out:
        overrides.append(f"output.directory={json.dumps(args.out)}")
    try:
        cfg = load_config(args.config, overrides)
        cfg.potential_spec()
        cfg.weight_spec()
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(x) for x in err["loc"]) or "<root>"
            print(f"config error: {loc}: {err['msg']}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, yaml.YAMLError, ValueError, TypeError) as exc:
        return _config_error(str(exc))

    out = Outputs(Path(cfg.output.directory), cfg, args.command)
    try:
        status = COMMANDS[args.command](cfg, out, args)
    except (PreconditionError, ResolutionError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    out.manifest()
    return status


if __name__ == "__main__":
    sys.exit(main())
