"""Command-line entry point: ``fpk <command> --config <path> [--out DIR] [--seed N]``.

Exit codes: 0 success, 2 a verdict failed, 3 configuration or numerical
error, 4 missing inputs (``report`` only).
"""
from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import RunConfig
from .errors import ConfigError, FpkError
from .evolution import decay_fit, evolve, lp_monitor, random_bumps, shifted_gaussian
from .fields import auto_cutoff_radius, check_H2, check_hypotheses, lp_growth_rate
from .grid import assemble_operator, read_gridfunction_csv, write_gridfunction_csv
from .inequalities import nash_check, negpart_coercivity_check, strict_positivity_check
from .spectral import principal_eigen, spectrum, stationary
from .splitting import build_cutoff, convolution_bound_check, dissipativity_fit, duhamel_residual, split

EXIT_OK, EXIT_FAIL, EXIT_ERROR, EXIT_MISSING = 0, 2, 3, 4
COMMANDS = ("check-hypotheses", "stationary", "evolve", "spectrum", "splitting", "nash", "report")
OUTPUT_JSON = {
    "check-hypotheses": "hypotheses.json",
    "stationary": "stationary.json",
    "evolve": "decay.json",
    "spectrum": "spectrum.json",
    "splitting": "splitting.json",
    "nash": "nash.json",
}
# relative slack in the omega <= a* consistency line
GAP_SLACK = 0.05


# ---------------------------------------------------------------------------
# JSON with 17 significant digits


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        # JSON has no inf/nan
        return format(obj, ".17g") if math.isfinite(obj) else "null"
    return json.dumps(obj)


def dumps(obj, indent=2):
    """Serialise ``obj`` as JSON, writing every float with 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# commands


def _hypotheses(cfg):
    E, ctx = cfg.force_field(), cfg.context()
    R = cfg.R if cfg.R is not None else _default_R(cfg)
    return check_hypotheses(E, ctx, R, r_max=cfg.r_max, n_radial=cfg.n_radial, n_angular=cfg.n_angular)


def _default_R(cfg):
    n = auto_cutoff_radius(cfg.force_field(), cfg.context(), cfg.r_max, cfg.n_radial, cfg.n_angular)
    # without a positive tail there is no valid radius; H3 then reports FAIL at r_max / 2
    return float(n + 1) if n is not None else 0.5 * cfg.r_max


def cmd_check_hypotheses(cfg, out, rng):
    rep = _hypotheses(cfg)
    write_json(out / "hypotheses.json", rep.to_dict())
    return (EXIT_OK if rep.all_pass else EXIT_FAIL), ["hypotheses.json"]


def _stationary(cfg, op):
    return stationary(op, tol=cfg.stationary_tol, max_iter=cfg.max_iter)


def cmd_stationary(cfg, out, rng):
    op = assemble_operator(cfg.grid(), cfg.force_field())
    res = _stationary(cfg, op)
    pos = strict_positivity_check(res.G)
    write_gridfunction_csv(out / "G.csv", res.G)
    write_json(out / "stationary.json", {**res.to_dict(), "tol": cfg.stationary_tol, "positivity": pos.to_dict()})
    return (EXIT_OK if pos.verdict == "PASS" else EXIT_FAIL), ["G.csv", "stationary.json"]


def _load_or_compute_G(cfg, op, out):
    path = out / "G.csv"
    if path.exists():
        try:
            return read_gridfunction_csv(path, op.grid), "file"
        except (FpkError, ValueError, IndexError):
            pass
    return _stationary(cfg, op).G, "inline"


def cmd_evolve(cfg, out, rng):
    grid, E, ctx = cfg.grid(), cfg.force_field(), cfg.context()
    op = assemble_operator(grid, E)
    G, source = _load_or_compute_G(cfg, op, out)
    f0 = shifted_gaussian(grid, cfg.shift) if cfg.init == "shifted_gaussian" else random_bumps(grid, rng)
    traj = evolve(op, f0, cfg.T, cfg.dt, G, ctx.k, ctx.p)
    traj.to_csv(out / "trajectory.csv")
    fit = decay_fit(traj, cfg.window_fraction)
    beta0_p = check_H2(E, ctx).beta0
    rate = lp_growth_rate(beta0_p, ctx, cfg.r_max, cfg.n_radial)
    lp = lp_monitor(traj, ctx.p, ctx.k, rate)
    m0 = traj.mass[0]
    body = {
        **fit.to_dict(),
        "G_source": source,
        "mass_drift": float(np.max(np.abs(traj.mass - m0)) / abs(m0)) if m0 != 0 else float(np.max(np.abs(traj.mass))),
        "min_value": float(traj.min.min()),
        "lp": lp.to_dict(),
        "verdict": "PASS" if fit.omega > 0 and lp.verdict == "PASS" else "FAIL",
    }
    write_json(out / "decay.json", body)
    return (EXIT_OK if body["verdict"] == "PASS" else EXIT_FAIL), ["trajectory.csv", "decay.json"]


def cmd_spectrum(cfg, out, rng):
    op = assemble_operator(cfg.grid(), cfg.force_field())
    res = spectrum(op)
    pair = principal_eigen(op)
    res.to_csv(out / "eigenvalues.csv")
    ok = res.gap > 0 and pair.one_signed and abs(pair.eigenvalue) <= 1e-8
    body = {**res.to_dict(), "principal_one_signed": pair.one_signed, "verdict": "PASS" if ok else "FAIL"}
    write_json(out / "spectrum.json", body)
    return (EXIT_OK if ok else EXIT_FAIL), ["eigenvalues.csv", "spectrum.json"]


def cmd_splitting(cfg, out, rng):
    grid, E, ctx = cfg.grid(), cfg.force_field(), cfg.context()
    op = assemble_operator(grid, E)
    hyp = _hypotheses(cfg)
    n_cut = cfg.n_cutoff
    if n_cut is None:
        n_cut = auto_cutoff_radius(E, ctx, cfg.r_max, cfg.n_radial, cfg.n_angular)
        if n_cut is None:
            raise ConfigError("no cutoff radius found: the H3 integrand is not eventually positive")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cut = build_cutoff(grid, n_cut, cfg.M)
    s = split(op, cut)
    diss = dissipativity_fit(s, ctx, trials=cfg.trials, T=cfg.T, dt=cfg.dt, rng=rng)
    f0 = shifted_gaussian(grid, cfg.shift)
    residuals = [(dt, duhamel_residual(op, s, f0, cfg.T, dt, ctx.k)) for dt in (cfg.dt, 0.5 * cfg.dt)]
    ratio = residuals[0][1] / residuals[1][1] if residuals[1][1] > 0 else None
    conv = convolution_bound_check(s, ctx, hyp.h3.omega_star, random_bumps(grid, rng), cfg.T, cfg.dt, omega0=diss.omega0)
    body = {
        "M": cfg.M,
        "n": n_cut,
        "n_auto": cfg.n_cutoff is None,
        "cutoff_reaches_edge": bool(caught),
        "omega0": diss.omega0,
        "omega_star": hyp.h3.omega_star,
        "duhamel_residuals": [list(r) for r in residuals],
        "duhamel_ratio": ratio,
        "bound_violations": conv.violations,
        "dissipativity": diss.to_dict(),
        "convolution": conv.to_dict(),
    }
    write_json(out / "splitting.json", body)
    ok = diss.verdict == "PASS" and conv.violations == 0
    return (EXIT_OK if ok else EXIT_FAIL), ["splitting.json"]


def cmd_nash(cfg, out, rng):
    grid, ctx = cfg.grid(), cfg.context()
    rep = nash_check(grid, ctx, cfg.family_size)
    rep.to_csv(out / "nash.csv")
    op = assemble_operator(grid, cfg.force_field())
    hyp = _hypotheses(cfg)
    neg = negpart_coercivity_check(op, ctx, hyp.h3.omega_star, trials=cfg.trials, rng=rng, h3_verdict=hyp.h3.verdict)
    neg_out = negpart_coercivity_check(
        op, ctx, hyp.h3.omega_star, trials=cfg.trials, rng=rng, h3_verdict=hyp.h3.verdict, min_radius=hyp.h3.R
    )
    body = {**rep.to_dict(), "negpart": neg.to_dict(), "negpart_outside_R": neg_out.to_dict()}
    write_json(out / "nash.json", body)
    ok = bool(np.all(np.isfinite(rep.ratios)) and np.all(rep.ratios > 0))
    return (EXIT_OK if ok else EXIT_FAIL), ["nash.csv", "nash.json"]


def _get(d, *keys):
    for k in keys:
        if not isinstance(d, dict) or k not in d:
            return None
        d = d[k]
    return d


def build_report(run_dir):
    """Collect the per-command JSON outputs of ``run_dir`` into one summary.

    Returns ``None`` when none of them is present.
    """
    run_dir = Path(run_dir)
    found = {}
    for cmd, name in OUTPUT_JSON.items():
        p = run_dir / name
        if p.exists():
            found[cmd] = read_json(p)
    if not found:
        return None
    hyp = found.get("check-hypotheses")
    spectral_out = found.get("spectrum")
    dec = found.get("evolve")
    spl = found.get("splitting")
    quantities = {
        "beta0": _get(hyp, "beta0"),
        "lambda0": _get(hyp, "lambda0"),
        "omega_star": _get(hyp, "omega_star"),
        "b": _get(hyp, "b"),
        "a_star": _get(spectral_out, "gap"),
        "omega": _get(dec, "omega"),
        "omega0": _get(spl, "omega0"),
    }
    verdicts = {}
    if hyp is not None:
        verdicts.update({f"hypotheses.{k}": v for k, v in hyp.get("verdicts", {}).items()})
    for cmd in ("stationary", "evolve", "spectrum"):
        if cmd in found:
            v = _get(found[cmd], "positivity", "verdict") if cmd == "stationary" else found[cmd].get("verdict")
            verdicts[cmd] = v
    if spl is not None:
        verdicts["splitting.dissipativity"] = _get(spl, "dissipativity", "verdict")
        verdicts["splitting.bound"] = "PASS" if spl.get("bound_violations") == 0 else "FAIL"
    if quantities["omega"] is not None and quantities["a_star"] is not None:
        consistent = quantities["omega"] <= quantities["a_star"] * (1 + GAP_SLACK)
        consistency = {"omega_le_a_star_plus_5pct": "PASS" if consistent else "FAIL"}
    else:
        consistency = {"omega_le_a_star_plus_5pct": "MISSING"}
    missing = [cmd for cmd in OUTPUT_JSON if cmd not in found]
    return {"quantities": quantities, "verdicts": verdicts, "consistency": consistency, "missing": missing}


def report_text(rep):
    lines = ["fpk run summary", ""]
    for k, v in rep["quantities"].items():
        lines.append(f"{k:>12}: {'MISSING' if v is None else format(v, '.10g')}")
    lines.append("")
    for k, v in rep["verdicts"].items():
        lines.append(f"{k:>28}: {v}")
    q = rep["quantities"]
    c = rep["consistency"]["omega_le_a_star_plus_5pct"]
    if c == "MISSING":
        lines.append("omega <= a* + 5%: MISSING")
    else:
        lines.append(f"omega <= a* + 5%: {c} (omega = {q['omega']:.6g}, a* = {q['a_star']:.6g})")
    for m in rep["missing"]:
        lines.append(f"MISSING: {m} output ({OUTPUT_JSON[m]})")
    return "\n".join(lines) + "\n"


def cmd_report(cfg, out, rng):
    rep = build_report(out)
    if rep is None:
        print(f"no command outputs found in {out}", file=sys.stderr)
        return EXIT_MISSING, []
    write_json(out / "report.json", rep)
    text = report_text(rep)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK, ["report.json", "report.txt"]


HANDLERS = {
    "check-hypotheses": cmd_check_hypotheses,
    "stationary": cmd_stationary,
    "evolve": cmd_evolve,
    "spectrum": cmd_spectrum,
    "splitting": cmd_splitting,
    "nash": cmd_nash,
    "report": cmd_report,
}


def _manifest(command, cfg, started, elapsed, code, outputs):
    return {
        "command": command,
        "exit_code": code,
        "config": cfg.to_dict(),
        "outputs": outputs,
        "versions": {
            "fpk": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "elapsed_s": elapsed,
    }


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code rather than argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser():
    ap = _Parser(prog="fpk", description="Numerical lab for Fokker-Planck operators with general drift.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="flat key = value config file")
    ap.add_argument("--out", help="output directory (overrides output.dir)")
    ap.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    return ap


def run(command, cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    started = time.time()
    code, outputs = HANDLERS[command](cfg, out, rng)
    if outputs:
        write_json(out / f"manifest_{command}.json", _manifest(command, cfg, started, time.time() - started, code, outputs))
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate(args.command)
        return run(args.command, cfg, args.out or cfg.out)
    except FpkError as exc:
        print(f"fpk: error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"fpk: error [IO]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
