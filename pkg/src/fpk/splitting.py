"""The decomposition L_h = A + B with B = M zeta_n (a radial cutoff multiplier).

The propagators S_L and S_A are realised by implicit Euler with a shared
step, and convolutions by the trapezoidal rule on the step grid.  Sums of
the form sum_m w_m S_A(t_N - s_m) g_m are accumulated by a Horner-type
recursion, so one factorised solve per step suffices.
"""
from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, EmptyWindowError
from .evolution import Propagator, fit_exponential, random_bumps
from .grid import GridFunction, OperatorMatrix, _values


def zeta0(s):
    """1 on [0, 1], 0 on [2, inf), cubic smoothstep descent in between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - u * u * (3.0 - 2.0 * u)


def zeta0_prime(s):
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return -6.0 * u * (1.0 - u)


@dataclass(frozen=True)
class CutoffSpec:
    n: float
    M: float
    zeta: GridFunction

    @property
    def values(self):
        return self.M * self.zeta.values


def build_cutoff(grid, n, M):
    """zeta_n(x) = zeta0(|x|/n) on ``grid`` with amplitude ``M``.

    M = 0 is accepted and gives the trivial splitting B = 0.
    """
    if not n > 0:
        raise ConfigError(f"cutoff scale n must be positive, got {n}")
    if M < 0:
        raise ConfigError(f"cutoff amplitude M must be non-negative, got {M}")
    if 2 * n >= grid.R_dom:
        warnings.warn(f"cutoff support 2n = {2 * n} reaches the box edge R_dom = {grid.R_dom}", stacklevel=2)
    return CutoffSpec(float(n), float(M), GridFunction(zeta0(grid.radii / n), grid))


@dataclass(frozen=True, eq=False)
class SplitOperator:
    A: OperatorMatrix
    B: np.ndarray
    parent: OperatorMatrix
    cutoff: CutoffSpec

    @property
    def grid(self):
        return self.parent.grid

    @property
    def B_norm(self):
        return float(np.max(np.abs(self.B))) if self.B.size else 0.0

    def apply_B(self, f):
        return GridFunction(self.B * _values(f), self.grid)


def split(op, cutoff):
    if cutoff.zeta.grid is not op.grid and cutoff.zeta.grid.size != op.grid.size:
        raise ConfigError("cutoff and operator live on different grids")
    b = cutoff.values
    a = (op.matrix - sp.diags(b, format="csr")).tocsr()
    a.sort_indices()
    A = OperatorMatrix(a, op.grid, op.field, op.scheme + "-minus-cutoff", None)
    return SplitOperator(A, b, op, cutoff)


def _l2k(grid, u, k):
    return grid.weighted_norm(u, k, 2.0)


def _norm_history(step, u, nsteps, grid, k):
    out = np.empty(nsteps + 1)
    out[0] = _l2k(grid, u, k)
    for i in range(1, nsteps + 1):
        u = step(u)
        out[i] = _l2k(grid, u, k)
    return out


@dataclass(frozen=True)
class DissipativityReport:
    omega0: float
    rates: np.ndarray
    growing: int
    verdict: str

    def to_dict(self):
        return {
            "omega0": self.omega0,
            "trials": int(self.rates.size),
            "max_rate": float(self.rates.max()),
            "growing_trials": self.growing,
            "verdict": self.verdict,
        }


def worker_count():
    """Thread cap from FPK_THREADS (default 1, i.e. sequential)."""
    raw = os.environ.get("FPK_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"FPK_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def dissipativity_fit(
    sp_op, ctx, trials=50, T=10.0, dt=0.05, rng=None, window_fraction=0.1, initial=None, min_rate=None
):
    """Smallest fitted decay rate of ||S_A(t) f0||_{L^2_k} over random f0.

    Initial data are drawn sequentially from ``rng`` and the trials then run
    on up to FPK_THREADS threads sharing one factorisation, so the result
    does not depend on the thread count.  A trial whose norm at T is above
    its value at the start of the fit window counts as persistent growth.
    PASS needs omega0 > ``min_rate`` (default 1/T: a rate slower than that
    cannot be told apart from a plateau on the horizon) and no growth.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    min_rate = 1.0 / T if min_rate is None else min_rate
    grid = sp_op.grid
    nsteps = int(round(T / dt))
    step = Propagator(sp_op.A.matrix, dt)
    t = np.arange(nsteps + 1) * dt
    sel = t >= window_fraction * T - 1e-12
    inits = [
        (initial(grid, rng) if initial is not None else random_bumps(grid, rng, signed=True)).values
        for _ in range(trials)
    ]

    def run(f0):
        hist = _norm_history(step, f0, nsteps, grid, ctx.k)
        try:
            omega = fit_exponential(t[sel], hist[sel])[0]
        except EmptyWindowError:
            # decayed below the floor almost at once
            omega = float("inf")
        return omega, bool(hist[-1] > hist[sel][0])

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = list(pool.map(run, inits))
    rates = np.array([r for r, _ in results])
    growing = sum(g for _, g in results)
    w0 = float(rates.min())
    ok = w0 > min_rate and growing == 0
    return DissipativityReport(w0, rates, growing, "PASS" if ok else "FAIL")


def duhamel_residual(op, sp_op, f0, T, dt, k=2.0):
    """|| S_L(T) f0 - S_A(T) f0 - int_0^T S_A(T-s) B S_L(s) f0 ds ||_{L^2_k}."""
    grid = op.grid
    nsteps = int(round(T / dt))
    if nsteps < 1:
        raise ConfigError("T must be at least one step")
    step_L = Propagator(op.matrix, dt)
    step_A = step_L if sp_op.B_norm == 0 and sp_op.A.matrix is op.matrix else Propagator(sp_op.A.matrix, dt)
    B = sp_op.B
    u = _values(f0).copy()
    v = u.copy()
    # acc_m = sum_{j<=m} c_j S_A^(m-j) B u_j, trapezoid weight 1/2 at j = 0
    acc = 0.5 * (B * u)
    for _ in range(nsteps):
        u = step_L(u)
        v = step_A(v)
        acc = step_A(acc) + B * u
    quad = dt * (acc - 0.5 * (B * u))
    return _l2k(grid, u - v - quad, k)


@dataclass(frozen=True)
class ConvolutionBoundReport:
    times: np.ndarray
    lhs: np.ndarray
    bound: np.ndarray
    C: float
    omega0: float
    omega_star: float | None
    violations: int

    def to_dict(self):
        return {
            "C": self.C,
            "omega0": self.omega0,
            "omega_star": self.omega_star,
            "samples": int(self.times.size),
            "violations": self.violations,
            "max_ratio": float(np.max(np.where(self.bound > 0, self.lhs / np.where(self.bound > 0, self.bound, 1.0), 0.0))),
        }


def convolution_bound_check(sp_op, ctx, omega_star, f0, T, dt, omega0=None, n_samples=20):
    """Compare ||(S_A * B S_A)(t) f0|| with C^2 ||B|| t exp(-omega0 t) ||f0||.

    ``omega0`` defaults to the decay rate fitted on ||S_A(t) f0|| itself.
    C is calibrated as max_t ||S_A(t) f0|| / (exp(-omega0 t) ||f0||).
    """
    grid = sp_op.grid
    k = ctx.k
    nsteps = int(round(T / dt))
    step = Propagator(sp_op.A.matrix, dt)
    B = sp_op.B
    v = _values(f0).copy()
    t = np.arange(nsteps + 1) * dt
    norms = np.empty(nsteps + 1)
    conv = np.zeros(nsteps + 1)
    norms[0] = _l2k(grid, v, k)
    acc = 0.5 * (B * v)
    for i in range(1, nsteps + 1):
        v = step(v)
        norms[i] = _l2k(grid, v, k)
        acc = step(acc) + B * v
        conv[i] = _l2k(grid, dt * (acc - 0.5 * (B * v)), k)
    if omega0 is None:
        omega0 = fit_exponential(t[t >= 0.1 * T], norms[t >= 0.1 * T])[0]
    C = float(np.max(norms / (np.exp(-omega0 * t) * norms[0])))
    idx = np.unique(np.linspace(0, nsteps, n_samples).round().astype(int))
    ts = t[idx]
    lhs = conv[idx]
    bound = C * C * sp_op.B_norm * ts * np.exp(-omega0 * ts) * norms[0]
    viol = int(np.sum(lhs > bound * (1 + 1e-12) + 1e-300))
    return ConvolutionBoundReport(ts, lhs, bound, C, float(omega0), omega_star, viol)
