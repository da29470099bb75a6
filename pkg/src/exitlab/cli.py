"""Config-driven command line: one JSON experiment in, reports out.

Usage:
    exitlab run --config exp.json [--out DIR] [--plots]
    exitlab validate --config exp.json

The config names a model builder, a domain, shifts, and a command list;
each command writes a JSON and/or CSV report embedding the config hash and
tool version. The process exits 0 exactly when every requested invariant
check passed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import traceback
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .forms import form_view, validate_assumption_a
from .models import (
    BUILDERS,
    GridModelSpec,
    antisym_perturb,
    build_chain,
    discretize_jump_diffusion,
    flow_from_cycles,
    grid_points,
    scaled_family,
)
from .montecarlo import McConfig, estimate_exit_functionals, simulate_exit_times
from .poisson import DomainMask, exit_functionals, exit_laplace, exit_mean
from .spectral import bounds_report, dirichlet_pair
from .variational import exp_moment_inf, saddle_value, symmetric_inf

MONOTONE_TOL = 1e-10
AGREE_RTOL = 1e-9


class ConfigError(ValueError):
    """Config rejected; the message carries a file-and-path anchor."""


@dataclass(frozen=True)
class ExperimentConfig:
    model: dict
    omega: object
    betas: tuple
    commands: tuple
    output: str | None
    formats: tuple
    xi: tuple | None
    sweep: dict | None
    mc: dict | None


_KNOWN_COMMANDS = ("validate", "exit", "variational", "expmoment", "bounds", "sweep", "mc")


def load_config(path: str):
    """Parse and statically validate a config file.

    Returns (config, sha256-of-file-bytes). Parse and semantic errors raise
    ConfigError with a line- or path-anchored message.
    """
    raw = Path(path).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as err:
        raise ConfigError(f"{path}: not UTF-8: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: $: config must be a JSON object")

    def fail(anchor, msg):
        raise ConfigError(f"{path}: {anchor}: {msg}")

    model = doc.get("model")
    if not isinstance(model, dict) or "builder" not in model:
        fail("$.model", "must be an object with a 'builder' name")
    if model["builder"] not in BUILDERS:
        fail("$.model.builder", f"unknown builder {model['builder']!r} "
             f"(known: {', '.join(sorted(BUILDERS))})")
    params = model.get("params", {})
    if not isinstance(params, dict):
        fail("$.model.params", "must be an object")
    if model["builder"] == "grid_jump_diffusion":
        try:
            GridModelSpec(**_grid_params(params))
        except (TypeError, ValueError) as err:
            fail("$.model.params", str(err))

    omega = doc.get("omega", "all")
    if not (
        omega == "all"
        or (isinstance(omega, list) and all(isinstance(i, int) for i in omega))
        or (isinstance(omega, dict) and "box" in omega)
    ):
        fail("$.omega", "must be 'all', a list of state indices, or {'box': [[lo, hi], ...]}")

    betas = doc.get("betas", [1.0])
    if not isinstance(betas, list) or not betas or any(
        not isinstance(b, (int, float)) or b <= 0 for b in betas
    ):
        fail("$.betas", "must be a nonempty list of positive numbers")

    commands = doc.get("commands", [])
    if not isinstance(commands, list) or not commands:
        fail("$.commands", "must be a nonempty list")
    for c in commands:
        if c not in _KNOWN_COMMANDS:
            fail("$.commands", f"unknown command {c!r} (known: {', '.join(_KNOWN_COMMANDS)})")

    formats = doc.get("formats", ["json", "csv"])
    if not isinstance(formats, list) or not set(formats) <= {"json", "csv"} or not formats:
        fail("$.formats", "must be a nonempty subset of ['json', 'csv']")

    if "sweep" in commands:
        sweep = doc.get("sweep")
        if not isinstance(sweep, dict) or sweep.get("kind") not in ("flow", "scale"):
            fail("$.sweep", "must be an object with kind 'flow' or 'scale'")
        if sweep["kind"] == "flow" and not sweep.get("values"):
            fail("$.sweep.values", "flow sweep needs a list of strengths")
        if sweep["kind"] == "scale" and not (sweep.get("kappa") and sweep.get("epsilon")):
            fail("$.sweep", "scale sweep needs 'kappa' and 'epsilon' lists")
        if sweep["kind"] == "scale" and model["builder"] != "grid_jump_diffusion":
            fail("$.sweep", "scale sweep needs the grid_jump_diffusion builder")

    if "mc" in commands:
        mc = doc.get("mc")
        if not isinstance(mc, dict) or "n_paths" not in mc or "seed" not in mc:
            fail("$.mc", "must be an object with 'n_paths' and 'seed'")

    xi = doc.get("xi")
    if xi is not None and not isinstance(xi, list):
        fail("$.xi", "must be a list of numbers")

    cfg = ExperimentConfig(
        model=model,
        omega=omega,
        betas=tuple(float(b) for b in betas),
        commands=tuple(commands),
        output=doc.get("output"),
        formats=tuple(sorted(set(formats))),
        xi=None if xi is None else tuple(float(v) for v in xi),
        sweep=doc.get("sweep"),
        mc=doc.get("mc"),
    )
    return cfg, digest


def _grid_params(params: dict) -> dict:
    out = dict(params)
    if "domain_box" in out:
        out["domain_box"] = tuple(tuple(edge) for edge in out["domain_box"])
    if "ellipticity" in out and out["ellipticity"] is not None:
        out["ellipticity"] = tuple(out["ellipticity"])
    return out


def _build_model(cfg: ExperimentConfig):
    if cfg.model["builder"] == "grid_jump_diffusion":
        spec = GridModelSpec(**_grid_params(cfg.model.get("params", {})))
        return discretize_jump_diffusion(spec), spec
    return build_chain(cfg.model), None


def _domain_mask(cfg: ExperimentConfig, chain, spec) -> DomainMask:
    omega = cfg.omega
    if omega == "all":
        return DomainMask.full(chain.n_states)
    if isinstance(omega, list):
        return DomainMask.from_states(omega, chain.n_states)
    box = omega["box"]
    if spec is None:
        raise ConfigError("$.omega: a box domain needs the grid_jump_diffusion builder")
    pts = grid_points(spec)
    inside = np.ones(pts.shape[0], dtype=bool)
    for axis, (lo, hi) in enumerate(box):
        inside &= (pts[:, axis] > lo) & (pts[:, axis] < hi)
    return DomainMask(inside)


def _stamp(doc: dict, digest: str) -> dict:
    doc["config_sha256"] = digest
    doc["tool_version"] = __version__
    doc["timestamp"] = datetime.now(timezone.utc).isoformat()
    return doc


def _emit(out_dir: Path, name: str, doc: dict, formats, csv_text: str | None = None):
    if "json" in formats:
        (out_dir / f"{name}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if "csv" in formats and csv_text is not None:
        (out_dir / f"{name}.csv").write_text(csv_text)


def _cmd_validate(chain, mask, cfg, digest, out_dir):
    report = validate_assumption_a(chain, beta_probe=max(cfg.betas))
    ok = bool(
        report.primal_markov_ok
        and report.dual_markov_ok
        and np.isfinite(report.sector_constant)
    )
    doc = _stamp({"report": report.to_dict(), "passed": ok}, digest)
    _emit(out_dir, "validate", doc, cfg.formats)
    return ok


def _cmd_exit(chain, mask, cfg, digest, out_dir):
    lam0 = dirichlet_pair(chain, mask)[0] if chain.is_reversible() else None
    blocks = {}
    csv_parts = []
    for beta in cfg.betas:
        fns = exit_functionals(chain, mask, beta, xi=None, lambda0=lam0)
        blocks[repr(beta)] = fns.to_dict(labels=chain.state_labels())
        csv_parts.append(f"# beta={beta!r}\n" + fns.to_csv(labels=chain.state_labels()))
    doc = _stamp({"exit_functionals": blocks, "lambda0": lam0}, digest)
    _emit(out_dir, "exit", doc, cfg.formats, csv_text="".join(csv_parts))
    return True


def _cmd_variational(chain, mask, cfg, digest, out_dir):
    ok = True
    blocks = {}
    xi = np.asarray(cfg.xi, dtype=float) if cfg.xi is not None else np.ones(mask.size)
    for beta in cfg.betas:
        view = form_view(chain, beta)
        closed = saddle_value(view, mask, xi, mode="closed_form")
        iterative = saddle_value(view, mask, xi, mode="iterative")
        agree = abs(closed.value - iterative.value) <= AGREE_RTOL * max(1.0, abs(closed.value))
        entry = {
            "closed_form": closed.to_dict(),
            "iterative": iterative.to_dict(),
            "modes_agree": agree,
        }
        if chain.is_reversible():
            sym = symmetric_inf(view, mask, xi)
            entry["symmetric_inf"] = sym
            agree_sym = abs(sym - closed.value) <= AGREE_RTOL * max(1.0, abs(sym))
            entry["symmetric_agrees"] = agree_sym
            agree = agree and agree_sym
        blocks[repr(beta)] = entry
        ok = ok and agree
    doc = _stamp({"saddle": blocks, "passed": ok}, digest)
    _emit(out_dir, "variational", doc, cfg.formats)
    return ok


def _cmd_expmoment(chain, mask, cfg, digest, out_dir):
    from .poisson import exit_exp_moment

    lam0 = dirichlet_pair(chain, mask)[0]
    ok = True
    blocks = {}
    for beta in cfg.betas:
        view = form_view(chain, beta)
        inf_value = exp_moment_inf(view, mask, beta, lam0)
        moments = exit_exp_moment(chain, mask, beta, lam0)
        agg = float(np.sum(chain.mu * moments))
        via_exit = 0.0 if np.isinf(agg) else beta / (agg - 1.0)
        agree = abs(inf_value - via_exit) <= AGREE_RTOL * max(1.0, abs(inf_value))
        blocks[repr(beta)] = {
            "inf_value": inf_value,
            "via_exit_route": via_exit,
            "agree": agree,
        }
        ok = ok and agree
    doc = _stamp({"lambda0": lam0, "exp_moment": blocks, "passed": ok}, digest)
    _emit(out_dir, "expmoment", doc, cfg.formats)
    return ok


def _cmd_bounds(chain, mask, cfg, digest, out_dir):
    ledger = bounds_report(chain, mask, cfg.betas)
    ok = ledger.all_satisfied()
    doc = _stamp({"ledger": ledger.to_dict(), "passed": ok}, digest)
    _emit(out_dir, "bounds", doc, cfg.formats, csv_text=ledger.to_csv())
    return ok


def _aggregates(chain, mask, betas):
    lap = {
        beta: float(np.sum(chain.mu * exit_laplace(chain, mask, beta))) for beta in betas
    }
    mean = float(np.sum(chain.mu * exit_mean(chain, mask)))
    return lap, mean


def _cmd_sweep(chain, mask, cfg, digest, out_dir, spec, plots):
    sweep = cfg.sweep
    rows = []
    ok = True
    if sweep["kind"] == "flow":
        cycle = sweep.get("cycle", list(range(chain.n_states)))
        flow = flow_from_cycles([cycle], chain.measure)
        values = [float(k) for k in sweep["values"]]
        for k in values:
            lap, mean = _aggregates(antisym_perturb(chain, flow, k), mask, cfg.betas)
            lap_neg, mean_neg = _aggregates(antisym_perturb(chain, flow, -k), mask, cfg.betas)
            for beta in cfg.betas:
                if abs(lap[beta] - lap_neg[beta]) > MONOTONE_TOL:
                    ok = False
            if abs(mean - mean_neg) > MONOTONE_TOL:
                ok = False
            rows.append({"k": k, "laplace": lap, "mean": mean})
        order = np.argsort([abs(r["k"]) for r in rows])
        for beta in cfg.betas:
            seq = [rows[i]["laplace"][beta] for i in order]
            if any(b < a - MONOTONE_TOL for a, b in zip(seq, seq[1:])):
                ok = False
        seq = [rows[i]["mean"] for i in order]
        if any(b > a + MONOTONE_TOL for a, b in zip(seq, seq[1:])):
            ok = False
        header = ["k"] + [f"laplace_beta_{beta!r}" for beta in cfg.betas] + ["mean"]
        lines = [",".join(header)]
        for r in rows:
            lines.append(
                ",".join(
                    [repr(r["k"])]
                    + [repr(r["laplace"][beta]) for beta in cfg.betas]
                    + [repr(r["mean"])]
                )
            )
        csv_text = "\n".join(lines) + "\n"
        x_axis = [r["k"] for r in rows]
    else:
        base = dict(cfg.model.get("params", {}))
        diff = discretize_jump_diffusion(
            GridModelSpec(**{**_grid_params(base), "kappa": 1.0, "epsilon": 0.0})
        )
        jump = discretize_jump_diffusion(
            GridModelSpec(**{**_grid_params(base), "kappa": 0.0, "epsilon": 1.0})
        )
        kappas = [float(v) for v in sweep["kappa"]]
        epsilons = [float(v) for v in sweep["epsilon"]]
        table = {}
        for kap in kappas:
            for eps in epsilons:
                lap, mean = _aggregates(scaled_family(diff, jump, kap, eps), mask, cfg.betas)
                table[(kap, eps)] = (lap, mean)
                rows.append({"kappa": kap, "epsilon": eps, "laplace": lap, "mean": mean})
        for beta in cfg.betas:
            for eps in epsilons:
                seq = [table[(k, eps)][0][beta] for k in sorted(kappas)]
                if any(b < a - MONOTONE_TOL for a, b in zip(seq, seq[1:])):
                    ok = False
            for kap in kappas:
                seq = [table[(kap, e)][0][beta] for e in sorted(epsilons)]
                if any(b < a - MONOTONE_TOL for a, b in zip(seq, seq[1:])):
                    ok = False
        for eps in epsilons:
            seq = [table[(k, eps)][1] for k in sorted(kappas)]
            if any(b > a + MONOTONE_TOL for a, b in zip(seq, seq[1:])):
                ok = False
        for kap in kappas:
            seq = [table[(kap, e)][1] for e in sorted(epsilons)]
            if any(b > a + MONOTONE_TOL for a, b in zip(seq, seq[1:])):
                ok = False
        header = (
            ["kappa", "epsilon"]
            + [f"laplace_beta_{beta!r}" for beta in cfg.betas]
            + ["mean"]
        )
        lines = [",".join(header)]
        for r in rows:
            lines.append(
                ",".join(
                    [repr(r["kappa"]), repr(r["epsilon"])]
                    + [repr(r["laplace"][beta]) for beta in cfg.betas]
                    + [repr(r["mean"])]
                )
            )
        csv_text = "\n".join(lines) + "\n"
        x_axis = list(range(len(rows)))

    doc = _stamp(
        {
            "kind": sweep["kind"],
            "rows": [
                {
                    **{k: v for k, v in r.items() if k != "laplace"},
                    "laplace": {repr(b): v for b, v in r["laplace"].items()},
                }
                for r in rows
            ],
            "monotone": ok,
            "passed": ok,
        },
        digest,
    )
    _emit(out_dir, "sweep", doc, cfg.formats, csv_text=csv_text)
    if plots:
        try:
            series = {"mean": [r["mean"] for r in rows]}
            for beta in cfg.betas:
                series[f"laplace beta={beta:g}"] = [r["laplace"][beta] for r in rows]
            svg = _line_chart_svg(x_axis, series, title=f"{sweep['kind']} sweep")
            (out_dir / "sweep.svg").write_text(svg)
        except Exception:  # plotting must never affect the exit status
            pass
    return ok


def _cmd_mc(chain, mask, cfg, digest, out_dir):
    mc = cfg.mc
    start = mc.get("start", 0)
    if start == "pi":
        start = (chain.mu / chain.mu.sum()).tolist()
    config = McConfig(
        n_paths=int(mc["n_paths"]),
        seed=int(mc["seed"]),
        start=start,
        betas=cfg.betas,
        max_time=float(mc.get("max_time", 1e6)),
    )
    samples = simulate_exit_times(chain, mask, config)
    est = estimate_exit_functionals(samples, cfg.betas)
    if isinstance(start, list):
        weights = np.asarray(start)
    else:
        weights = np.zeros(chain.n_states)
        weights[int(start)] = 1.0
    exact_mean = float(weights @ exit_mean(chain, mask))
    ok = abs(est.mean[0] - exact_mean) <= 3 * est.mean[1] + 1e-12
    checks = {"mean": {"mc": est.mean[0], "se": est.mean[1], "exact": exact_mean}}
    for beta in cfg.betas:
        exact_lap = float(weights @ exit_laplace(chain, mask, beta))
        mc_lap, se = est.laplace[beta]
        ok = ok and abs(mc_lap - exact_lap) <= 3 * se + 1e-12
        checks[f"laplace_beta_{beta!r}"] = {"mc": mc_lap, "se": se, "exact": exact_lap}
    doc = _stamp({"estimate": est.to_dict(), "checks": checks, "passed": ok}, digest)
    _emit(out_dir, "mc", doc, cfg.formats, csv_text=samples.to_csv())
    return ok


def _line_chart_svg(xs, series: dict, title: str = "") -> str:
    """Minimal dependency-free SVG line chart of one or more series."""
    width, height, pad = 640, 400, 56
    xs = [float(x) for x in xs]
    all_y = [float(v) for ys in series.values() for v in ys]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(all_y), max(all_y)
    x_span = (x_hi - x_lo) or 1.0
    y_span = (y_hi - y_lo) or 1.0

    def sx(x):
        return pad + (x - x_lo) / x_span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / y_span * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width/2:.1f}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height-pad+18}" font-size="11">{x_lo:g}</text>',
        f'<text x="{width-pad}" y="{height-pad+18}" text-anchor="end" font-size="11">{x_hi:g}</text>',
        f'<text x="{pad-6}" y="{height-pad}" text-anchor="end" font-size="11">{y_lo:g}</text>',
        f'<text x="{pad-6}" y="{pad+4}" text-anchor="end" font-size="11">{y_hi:g}</text>',
    ]
    for i, (name, ys) in enumerate(series.items()):
        color = colors[i % len(colors)]
        points = " ".join(f"{sx(x):.2f},{sy(float(y)):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
        parts.append(
            f'<text x="{width-pad}" y="{pad + 16*i}" text-anchor="end" fill="{color}" font-size="12">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


_DISPATCH = {
    "validate": _cmd_validate,
    "exit": _cmd_exit,
    "variational": _cmd_variational,
    "expmoment": _cmd_expmoment,
    "bounds": _cmd_bounds,
    "mc": _cmd_mc,
}


def run(cfg: ExperimentConfig, digest: str, out_dir: Path, plots: bool = False) -> int:
    """Execute the configured commands; 0 iff every requested check passed."""
    out_dir.mkdir(parents=True, exist_ok=True)
    chain, spec = _build_model(cfg)
    mask = _domain_mask(cfg, chain, spec)
    statuses = {}
    for cmd in cfg.commands:
        if cmd == "sweep":
            statuses[cmd] = _cmd_sweep(chain, mask, cfg, digest, out_dir, spec, plots)
        else:
            statuses[cmd] = _DISPATCH[cmd](chain, mask, cfg, digest, out_dir)
    overall = all(statuses.values())
    summary = _stamp({"commands": statuses, "passed": overall}, digest)
    (out_dir / "run_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0 if overall else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="exitlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a config and write reports")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--plots", action="store_true")
    p_val = sub.add_parser("validate", help="parse and statically check a config")
    p_val.add_argument("--config", required=True)
    args = parser.parse_args(argv)

    if not Path(args.config).exists():
        print(f"error: file not found: {args.config}", file=sys.stderr)
        return 2
    try:
        cfg, digest = load_config(args.config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2

    if args.command == "validate":
        print(f"ok: {args.config} (sha256 {digest[:12]})")
        return 0

    out = args.out or cfg.output
    if out is None:
        print("error: no output directory (set $.output or pass --out)", file=sys.stderr)
        return 2
    try:
        return run(cfg, digest, Path(out), plots=args.plots)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
