"""Stationary state, principal eigenpair and spectral gap of L_h."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DegenerateError, NoConvergenceError, NonPositiveError, SizeError
from .evolution import factorize, random_bumps
from .grid import GridFunction, _fmt

DENSE_LIMIT = 10_000
SHIFT = 1e-8
SIMPLICITY_TOL = 1e-10
ZERO_TOL = 1e-6


@dataclass(frozen=True)
class StationaryResult:
    G: GridFunction
    residual: float
    relative_residual: float
    min_value: float
    mass: float
    iterations: int

    def to_dict(self):
        return {
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "min": self.min_value,
            "mass": self.mass,
            "iterations": self.iterations,
        }


def stationary(op, tol=1e-10, max_iter=50, shift=SHIFT):
    """Unit-mass null vector of L_h by shifted inverse iteration.

    Iterates G <- (shift I - L_h)^{-1} G from the constant vector,
    renormalising to unit mass, until ||L_h G||_2 <= tol ||G||_2.
    """
    grid = op.grid
    m = op.matrix
    lu = factorize(shift * sp.identity(m.shape[0], format="csc") - m)
    u = np.full(grid.size, 1.0 / (grid.size * grid.cell_volume))
    for it in range(1, max_iter + 1):
        u = lu.solve(u)
        u /= grid.mass(u)
        res = float(np.linalg.norm(m @ u))
        nrm = float(np.linalg.norm(u))
        if res <= tol * nrm:
            break
    else:
        raise NoConvergenceError(f"inverse iteration did not reach tol={tol} in {max_iter} sweeps")
    if not np.all(u > 0):
        raise NonPositiveError(f"stationary vector has {(u <= 0).sum()} non-positive entries")
    return StationaryResult(GridFunction(u, grid), res, res / nrm, float(u.min()), grid.mass(u), it)


@dataclass(frozen=True)
class PrincipalPair:
    eigenvalue: complex
    vector: np.ndarray
    one_signed: bool
    next_real: float | None
    method: str


def _dense(op):
    m = op.matrix if hasattr(op, "matrix") else op
    n = m.shape[0]
    if n > DENSE_LIMIT:
        raise SizeError(f"{n} unknowns exceed the dense limit {DENSE_LIMIT}")
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def _unit_mass(v, cell_volume):
    v = np.real_if_close(v, tol=1e6)
    v = np.real(v)
    s = v.sum()
    return v / (s * cell_volume)


def principal_eigen(op, dense_limit=DENSE_LIMIT, tol=1e-12, max_iter=200):
    """Eigenvalue of largest real part and its (unit-mass) eigenvector.

    Dense eigendecomposition up to ``dense_limit`` unknowns; above that,
    inverse iteration shifted just right of the column-sum Gershgorin bound,
    which for an operator with non-negative off-diagonals targets the
    Perron root.  Raises DegenerateError when two eigenvalues tie for the
    largest real part (dense path only).
    """
    m = op.matrix
    h_d = op.grid.cell_volume
    if m.shape[0] <= dense_limit:
        w, V = sla.eig(_dense(op))
        order = np.argsort(-w.real, kind="stable")
        i, j = order[0], order[1] if w.size > 1 else None
        nxt = None if j is None else float(w[j].real)
        if j is not None and abs(w[i].real - w[j].real) <= SIMPLICITY_TOL:
            raise DegenerateError(f"leading eigenvalues {w[i]} and {w[j]} tie within {SIMPLICITY_TOL}")
        v = _unit_mass(V[:, i], h_d)
        lam = complex(w[i])
        return PrincipalPair(lam, v, bool(np.all(v > 0)), nxt, "dense")

    sigma = float(np.max(np.asarray(m.sum(axis=0)).ravel())) + SHIFT
    lu = factorize(sigma * sp.identity(m.shape[0], format="csc") - m)
    v = np.full(m.shape[0], 1.0)
    lam = None
    for _ in range(max_iter):
        v = lu.solve(v)
        v /= v.sum() * h_d
        new = float(v @ (m @ v)) / float(v @ v)
        if lam is not None and abs(new - lam) <= tol * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    else:
        raise NoConvergenceError("principal inverse iteration did not converge")
    return PrincipalPair(complex(lam), v, bool(np.all(v > 0)), None, "inverse_iteration")


@dataclass(frozen=True)
class SpectrumResult:
    eigenvalues: np.ndarray
    gap: float
    principal: complex
    principal_positive: bool

    def to_dict(self):
        return {
            "gap": self.gap,
            "principal_re": float(self.principal.real),
            "principal_im": float(self.principal.imag),
            "principal_positive": self.principal_positive,
            "n_eigenvalues": int(self.eigenvalues.size),
            "max_re_nonzero": -self.gap,
        }

    def to_csv(self, path):
        order = np.lexsort((self.eigenvalues.imag, -self.eigenvalues.real))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im"])
            for z in self.eigenvalues[order]:
                w.writerow([_fmt(z.real), _fmt(z.imag)])


def _gap(w, zero_tol):
    rest = w[np.abs(w) > zero_tol]
    if rest.size == 0:
        return float("inf")
    return float(-np.max(rest.real))


def spectrum(op, zero_tol=ZERO_TOL):
    A = _dense(op)
    w, V = sla.eig(A)
    i = int(np.argmax(w.real))
    v = _unit_mass(V[:, i], op.grid.cell_volume)
    return SpectrumResult(w, _gap(w, zero_tol), complex(w[i]), bool(np.all(v > 0)))


def spectral_gap(op, zero_tol=ZERO_TOL):
    """a* = -max{Re lam : |lam| > zero_tol} from a dense eigendecomposition."""
    return _gap(sla.eigvals(_dense(op)), zero_tol)


@dataclass(frozen=True)
class CoercivityReport:
    residuals: np.ndarray
    min_residual: float
    tol_h: float
    verdict: str

    def to_dict(self):
        return {"min_residual": self.min_residual, "tol_h": self.tol_h, "trials": int(self.residuals.size), "verdict": self.verdict}


def coercivity_residual(op, phi, k, lambda0):
    """[(-L_h phi|phi)_k - |grad phi|^2_{L^2_k} + lambda0 ||phi||^2_{L^2_k}] / ||phi||^2_{L^2_k}."""
    grid = op.grid
    u = phi.values if isinstance(phi, GridFunction) else np.asarray(phi)
    nrm2 = grid.weighted_norm(u, k, 2) ** 2
    lhs = grid.weighted_inner(-(op.matrix @ u), u, k)
    return (lhs - grid.gradient_norm(u, k) ** 2 + lambda0 * nrm2) / nrm2


def coercivity_check(op, ctx, lambda0, trials=100, rng=None, slack=1.0):
    """Discrete form of (-L phi|phi)_k >= |grad phi|^2_k - lambda0 |phi|^2_k on random bumps.

    Residuals are normalised by ||phi||^2_{L^2_k}; PASS when the smallest is
    at least -slack * h (the discrete inequality only holds up to O(h)).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    res = np.array(
        [coercivity_residual(op, random_bumps(op.grid, rng, count=1, widths=(0.3, 2.0)), ctx.k, lambda0) for _ in range(trials)]
    )
    tol_h = slack * op.grid.h
    mn = float(res.min())
    return CoercivityReport(res, mn, tol_h, "PASS" if mn >= -tol_h else "FAIL")
