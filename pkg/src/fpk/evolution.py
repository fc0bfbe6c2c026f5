"""Time stepping of df/dt = L_h f, resolvent solves and decay-rate fitting."""
from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, EmptyWindowError, NumericError, SingularError
from .grid import GridFunction, _fmt, _values

UNDERFLOW_FLOOR = 1e-14


def _matrix(op):
    return op.matrix if hasattr(op, "matrix") else sp.csr_matrix(op)


def factorize(m):
    """Sparse LU that keeps the diagonal pivots.

    For an M-matrix this keeps both triangular factors sign-regular, so a
    solve with a non-negative right-hand side only ever adds non-negative
    terms and cannot produce negative entries from rounding.
    """
    try:
        return spla.splu(
            sp.csc_matrix(m),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise SingularError(f"factorisation failed: {exc}") from exc


def resolvent_solve(op, lam, f0):
    """Solve (lam I - L_h) f = f0."""
    if not lam > 0:
        raise SingularError(f"resolvent needs lam > 0, got {lam}")
    m = _matrix(op)
    lu = factorize(lam * sp.identity(m.shape[0], format="csc") - m)
    out = lu.solve(_values(f0))
    if not np.all(np.isfinite(out)):
        raise SingularError("resolvent solve produced non-finite values")
    return GridFunction(out, op.grid)


class Propagator:
    """One-step map for a fixed operator and step, factorised once.

    ``scheme`` is ``"implicit_euler"`` (default) or ``"crank_nicolson"``.
    Crank-Nicolson is second order but loses the positivity guarantee once
    dt * max|diag L_h| exceeds 2.
    """

    def __init__(self, matrix, dt, scheme="implicit_euler"):
        if not dt > 0:
            raise ConfigError(f"time step must be positive, got {dt}")
        self.dt = float(dt)
        self.scheme = scheme
        eye = sp.identity(matrix.shape[0], format="csc")
        if scheme == "implicit_euler":
            self._lu = factorize(eye - dt * matrix)
            self._rhs = None
        elif scheme == "crank_nicolson":
            self._lu = factorize(eye - 0.5 * dt * matrix)
            self._rhs = (eye + 0.5 * dt * matrix).tocsr()
        else:
            raise ConfigError(f"unknown time scheme {scheme!r}")

    def __call__(self, u):
        b = u if self._rhs is None else self._rhs @ u
        out = self._lu.solve(b)
        if not np.all(np.isfinite(out)):
            raise NumericError("time step produced non-finite values")
        return out


@functools.lru_cache(maxsize=16)
def propagator(op, dt, scheme="implicit_euler"):
    return Propagator(_matrix(op), dt, scheme)


def step_implicit_euler(op, f, dt):
    return GridFunction(propagator(op, float(dt))(_values(f)), op.grid)


@dataclass
class Trajectory:
    times: np.ndarray
    mass: np.ndarray
    min: np.ndarray
    dist_l2k: np.ndarray
    norm_lpk: np.ndarray
    k: float
    p: float
    snapshots: list | None = None

    def rows(self):
        return zip(self.times, self.mass, self.min, self.dist_l2k, self.norm_lpk)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "min", "dist_l2k", "norm_lpk"])
            for row in self.rows():
                w.writerow([_fmt(v) for v in row])

    @classmethod
    def from_csv(cls, path, k=2.0, p=2.0):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4], k, p)


def evolve(op, f0, T, dt, G=None, k=2.0, p=2.0, sample_every=1, store=False, scheme="implicit_euler", stepper=None):
    """Integrate df/dt = M f from f0 up to T and record observables.

    ``op`` may be an OperatorMatrix or any sparse matrix paired with a grid
    through ``f0``.  Observables at each sample time: mass, minimum value,
    ||f(t) - M(f0) G||_{L^2_k} (NaN without ``G``) and ||f(t)||_{L^p_k}.
    """
    grid = f0.grid
    nsteps = int(round(T / dt))
    if nsteps < 1 or abs(nsteps * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError(f"T = {T} is not a positive multiple of dt = {dt}")
    step = stepper if stepper is not None else propagator(op, float(dt), scheme)
    u = f0.values.copy()
    m0 = grid.mass(u)
    Gv = None if G is None else _values(G)

    times, masses, mins, dists, norms, snaps = [], [], [], [], [], []

    def record(t, u):
        times.append(t)
        masses.append(grid.mass(u))
        mins.append(float(u.min()))
        dists.append(np.nan if Gv is None else grid.weighted_norm(u - m0 * Gv, k, 2.0))
        norms.append(grid.weighted_norm(u, k, p))
        if store:
            snaps.append(u.copy())

    record(0.0, u)
    for i in range(1, nsteps + 1):
        u = step(u)
        if i % sample_every == 0 or i == nsteps:
            record(i * dt, u)
    return Trajectory(
        np.array(times), np.array(masses), np.array(mins), np.array(dists), np.array(norms), k, p, snaps if store else None
    )


@dataclass(frozen=True)
class DecayFit:
    omega: float
    C: float
    t0: float
    T: float
    residual: float
    n_samples: int
    underflow: bool

    def to_dict(self):
        return {
            "omega": self.omega,
            "C": self.C,
            "t0": self.t0,
            "T": self.T,
            "residual": self.residual,
            "n_samples": self.n_samples,
            "underflow": self.underflow,
        }


def fit_exponential(t, y, floor=UNDERFLOW_FLOOR, min_samples=10):
    """Least-squares fit of log y = log C - omega t on the samples above ``floor``.

    Samples from the first one at or below the floor onwards are dropped
    (the window shrinks) and the returned flag records it.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    below = np.nonzero(~(y > floor))[0]
    underflow = below.size > 0
    if underflow:
        t, y = t[: below[0]], y[: below[0]]
    if t.size < min_samples:
        raise EmptyWindowError(f"only {t.size} usable samples in the fit window (need {min_samples})")
    slope, intercept = np.polyfit(t, np.log(y), 1)
    resid = float(np.max(np.abs(intercept + slope * t - np.log(y))))
    return float(-slope), float(math.exp(intercept)), resid, int(t.size), underflow, float(t[-1])


def decay_fit(traj, window_fraction=0.1, floor=UNDERFLOW_FLOOR, min_samples=10, observable="dist_l2k"):
    """Fit C exp(-omega t) to the distance to equilibrium on [fraction*T, T]."""
    if not 0 <= window_fraction < 1:
        raise ConfigError(f"window fraction must lie in [0, 1), got {window_fraction}")
    T = float(traj.times[-1])
    t0 = window_fraction * T
    sel = traj.times >= t0 - 1e-12 * max(1.0, T)
    y = getattr(traj, observable)[sel]
    if np.any(np.isnan(y)):
        raise ConfigError("trajectory carries no distance observable (evolve without G)")
    omega, C, resid, n, underflow, t_end = fit_exponential(traj.times[sel], y, floor, min_samples)
    return DecayFit(omega, C, t0, t_end, resid, n, underflow)


@dataclass(frozen=True)
class LpReport:
    p: float
    k: float
    rate: float
    max_violation: float
    verdict: str

    def to_dict(self):
        return {"p": self.p, "k": self.k, "rate": self.rate, "max_violation": self.max_violation, "verdict": self.verdict}


def lp_monitor(traj, p, k, rate, grid=None, rtol=1e-12):
    """Check ||f(t)||_{L^p_k} <= exp(rate t) ||f(0)||_{L^p_k} at every sample.

    Uses the recorded norm when the trajectory was run with the same (p, k);
    otherwise recomputes it from stored snapshots (``grid`` required).
    """
    if traj.p == p and traj.k == k:
        norms = traj.norm_lpk
    elif traj.snapshots is not None and grid is not None:
        norms = np.array([grid.weighted_norm(u, k, p) for u in traj.snapshots])
    else:
        raise ConfigError("trajectory lacks the requested L^p_k norm and has no snapshots")
    bound = np.exp(rate * traj.times) * norms[0]
    scale = norms[0] if norms[0] > 0 else 1.0
    viol = float(max(0.0, np.max((norms - bound) / scale)))
    return LpReport(float(p), float(k), float(rate), viol, "PASS" if viol <= rtol else "FAIL")


def shifted_gaussian(grid, shift=2.0, width=1.0):
    """Unit-mass Gaussian centred at ``shift`` along the first axis."""
    x = grid.points.copy()
    x[:, 0] -= shift
    r2 = np.sum(x * x, axis=-1)
    norm = (2.0 * math.pi * width ** 2) ** (grid.d / 2.0)
    return GridFunction(np.exp(-0.5 * r2 / width ** 2) / norm, grid)


def random_bumps(grid, rng, count=3, widths=(0.3, 2.0), signed=False, spread=0.5):
    """Sum of Gaussian bumps with random centres in [-spread R, spread R]^d."""
    pts = grid.points
    u = np.zeros(grid.size)
    lim = spread * grid.R_dom
    for _ in range(count):
        c = rng.uniform(-lim, lim, size=grid.d)
        w = rng.uniform(*widths)
        a = rng.uniform(-1.0, 1.0) if signed else rng.uniform(0.1, 1.0)
        u += a * np.exp(-0.5 * np.sum((pts - c) ** 2, axis=-1) / w ** 2)
    return GridFunction(u, grid)
