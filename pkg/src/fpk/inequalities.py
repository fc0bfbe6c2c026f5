"""Empirical checks of the Nash inequality, negative-part coercivity and strict positivity."""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .grid import GridFunction, _fmt, _values
from .splitting import worker_count

# below this k the Nash argument in d = 2 has little room (d + k/2 - 2 = k/2)
NASH_TIGHT_K = 1.0


def nash_ratio(f, k, grid=None):
    """||f||_{L^2_k}^{2+4/d} / (||f||_{L^1_{k/2}}^{4/d} ||grad f||_{L^2_k}^2).

    Homogeneous of degree 0 in f.  Returns inf when the discrete gradient
    vanishes (constants).
    """
    if isinstance(f, GridFunction):
        grid, u = f.grid, f.values
    else:
        u = np.asarray(f, dtype=float)
    d = grid.d
    l2 = grid.weighted_norm(u, k, 2.0)
    l1 = grid.weighted_norm(u, 0.5 * k, 1.0)
    g = grid.gradient_norm(u, k)
    if g == 0.0:
        return float("inf")
    # work in logs so that tiny or huge amplitudes cannot over/underflow
    logr = (2.0 + 4.0 / d) * np.log(l2) - (4.0 / d) * np.log(l1) - 2.0 * np.log(g)
    return float(np.exp(logr))


def gaussian_family(grid, size, widths=(0.2, 2.0)):
    """Centres in [-R/2, R/2]^d and widths in ``widths`` from an unscrambled Halton sequence.

    The sequence is deterministic and nested: the family of size 2m starts
    with the family of size m, so the sup ratio can only grow with size.
    """
    pts = qmc.Halton(d=grid.d + 1, scramble=False).random(size + 1)[1:]
    half = 0.5 * grid.R_dom
    centres = -half + 2.0 * half * pts[:, : grid.d]
    w = widths[0] + (widths[1] - widths[0]) * pts[:, grid.d]
    return centres, w


def _gaussian(grid, c, w):
    return np.exp(-0.5 * np.sum((grid.points - c) ** 2, axis=-1) / w ** 2)


@dataclass(frozen=True)
class NashReport:
    centres: np.ndarray
    widths: np.ndarray
    ratios: np.ndarray
    sup_ratio: float
    k: float
    d: int
    tight_regime: bool

    def to_dict(self):
        return {
            "family": "gaussian_halton",
            "family_size": int(self.ratios.size),
            "sup_ratio": self.sup_ratio,
            "argsup_centre": self.centres[int(np.argmax(self.ratios))].tolist(),
            "argsup_width": float(self.widths[int(np.argmax(self.ratios))]),
            "k": self.k,
            "d": self.d,
            "tight_regime": self.tight_regime,
        }

    def to_csv(self, path):
        cols = ["center"] if self.d == 1 else ["center_x", "center_y"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols + ["width", "ratio"])
            for c, s, r in zip(self.centres, self.widths, self.ratios):
                w.writerow([_fmt(v) for v in c] + [_fmt(s), _fmt(r)])

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def nash_check(grid, ctx, family_size=64, widths=(0.2, 2.0)):
    """Nash ratios over a Gaussian test family; the sup is an empirical lower bound for the constant."""
    ctx.require_nash()
    centres, w = gaussian_family(grid, family_size, widths)
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        ratios = np.array(list(pool.map(lambda cw: nash_ratio(_gaussian(grid, *cw), ctx.k, grid), zip(centres, w))))
    tight = grid.d == 2 and ctx.k < NASH_TIGHT_K
    return NashReport(centres, w, ratios, float(ratios.max()), float(ctx.k), grid.d, tight)


def negative_part(f):
    """Cellwise f^- = max(-f, 0), so that f = f^+ - f^- and f^+ f^- = 0."""
    return np.maximum(-_values(f), 0.0)


def sign_changing_trial(grid, rng, min_radius=0.0, count=3):
    """Positive bump plus negative bumps; negative centres sit at |x| >= ``min_radius`` + 1."""
    pts = grid.points
    lim = 0.5 * grid.R_dom
    u = np.exp(-0.5 * np.sum((pts - rng.uniform(-lim, lim, grid.d)) ** 2, axis=-1) / rng.uniform(0.3, 2.0) ** 2)
    for _ in range(count):
        if min_radius > 0:
            direction = rng.normal(size=grid.d)
            direction /= np.linalg.norm(direction)
            c = direction * rng.uniform(min_radius + 1.0, max(min_radius + 1.0, 0.75 * grid.R_dom))
            w = rng.uniform(0.2, 0.5)
        else:
            c = rng.uniform(-lim, lim, grid.d)
            w = rng.uniform(0.3, 2.0)
        u -= rng.uniform(0.1, 1.0) * np.exp(-0.5 * np.sum((pts - c) ** 2, axis=-1) / w ** 2)
    if min_radius > 0:
        # keep the negative part outside the ball
        inner = grid.radii < min_radius
        u[inner] = np.maximum(u[inner], 0.0)
    return GridFunction(u, grid)


def negpart_residual(op, f, k, omega_star):
    """(L_h f|f^-)_k - ||grad f^-||^2_{L^2_k} - (omega*/2) ||f^-||^2_{L^2_k}."""
    grid = op.grid
    u = _values(f)
    neg = negative_part(u)
    lhs = grid.weighted_inner(op.matrix @ u, neg, k)
    return lhs - grid.gradient_norm(neg, k) ** 2 - 0.5 * omega_star * grid.weighted_norm(neg, k, 2.0) ** 2


@dataclass(frozen=True)
class NegPartReport:
    status: str
    residuals: np.ndarray
    min_residual: float | None
    tol_h: float | None

    def to_dict(self):
        return {
            "status": self.status,
            "min_residual": self.min_residual,
            "tol_h": self.tol_h,
            "trials": int(self.residuals.size),
        }


def negpart_coercivity_check(op, ctx, omega_star, trials=50, rng=None, slack=1.0, h3_verdict="PASS", min_radius=0.0, tests=None):
    """Report-only check of the negative-part coercivity inequality.

    SKIPPED when H3 did not pass (there is no omega* to test against).
    Residuals are normalised by ||f^-||^2_{L^2_k} (trials with f^- = 0 give 0).
    PASS iff the smallest residual is at least -slack * h.
    """
    if h3_verdict != "PASS" or omega_star is None or not np.isfinite(omega_star):
        return NegPartReport("SKIPPED", np.array([]), None, None)
    rng = np.random.default_rng(0) if rng is None else rng
    grid = op.grid
    if tests is None:
        tests = [sign_changing_trial(grid, rng, min_radius) for _ in range(trials)]
    res = []
    for f in tests:
        neg = negative_part(f)
        nrm2 = grid.weighted_norm(neg, ctx.k, 2.0) ** 2
        r = negpart_residual(op, f, ctx.k, omega_star)
        res.append(r / nrm2 if nrm2 > 0 else r)
    res = np.array(res)
    tol_h = slack * grid.h
    mn = float(res.min())
    return NegPartReport("PASS" if mn >= -tol_h else "FAIL", res, mn, tol_h)


@dataclass(frozen=True)
class PositivityReport:
    verdict: str
    min_value: float
    argmin: int
    interior_ratio: float
    interior_flag: bool

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "min": self.min_value,
            "argmin": self.argmin,
            "interior_min_over_max": self.interior_ratio,
            "interior_below_floor": self.interior_flag,
        }


def strict_positivity_check(G, interior_floor=1e-3):
    """PASS iff every cell value of G is > 0.

    The ratio min/max over |x| <= R_dom/2 is reported alongside and flagged
    when it drops below ``interior_floor``; the flag does not gate the verdict
    since fast-decaying equilibria legitimately fall below any fixed floor.
    """
    u = G.values
    grid = G.grid
    inner = u[grid.radii <= 0.5 * grid.R_dom]
    ratio = float(inner.min() / u.max()) if u.max() > 0 else 0.0
    i = int(np.argmin(u))
    return PositivityReport("PASS" if np.all(u > 0) else "FAIL", float(u[i]), i, ratio, ratio < interior_floor)
