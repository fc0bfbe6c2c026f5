"""Cell-centred finite-volume discretisation on a truncated box.

The generator L u = div(grad u + E u) is assembled in conservative flux
form with the exponentially fitted (Scharfetter-Gummel / Chang-Cooper) flux.
For the face between cells i and j (j the neighbour in the +axis direction)
with delta = h * E(face midpoint) . e_axis, the flux of u from i to j is

    F_ij = (B(delta) u_i - B(-delta) u_j) / h,     B(s) = s / (exp(s) - 1),

and (L_h u)_i = -(sum of outgoing face fluxes) / h.  Boundary faces carry no
flux.  Off-diagonal entries are non-negative and every column sums to zero,
so mass is conserved and I - dt L_h is an M-matrix.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from dataclasses import field as dc_field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConfigError, NumericError

# exp overflows near 709.78; stay clear of it
_BERNOULLI_LIMIT = 700.0
_SERIES_CUTOFF = 1e-4


def bernoulli(s):
    """B(s) = s / (exp(s) - 1) with B(0) = 1, vectorised."""
    s = np.asarray(s, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(np.abs(s) > _BERNOULLI_LIMIT):
        raise NumericError("Bernoulli argument out of the stable range (|h E| too large)")
    out = np.empty_like(s)
    small = np.abs(s) < _SERIES_CUTOFF
    ss = s[small]
    out[small] = 1.0 - ss / 2.0 + ss * ss / 12.0
    big = ~small
    out[big] = s[big] / np.expm1(s[big])
    return out


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centred grid on [-R_dom, R_dom]^d with n cells per axis."""

    d: int
    R_dom: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.d}")
        if int(self.n) != self.n or self.n < 3 or self.n % 2 == 0:
            raise ConfigError(f"cells per axis must be an odd integer >= 3, got {self.n}")
        if not self.R_dom > 0:
            raise ConfigError(f"R_dom must be positive, got {self.R_dom}")

    @property
    def h(self):
        return 2.0 * self.R_dom / self.n

    @property
    def centers(self):
        """1D cell centres, symmetric about 0 (the middle one is exactly 0)."""
        c = (np.arange(self.n) - (self.n - 1) // 2) * self.h
        return c

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self):
        return self.n ** self.d

    @property
    def cell_volume(self):
        return self.h ** self.d

    @property
    def points(self):
        """Cell centres as an (size, d) array, C order (last axis fastest)."""
        c = self.centers
        if self.d == 1:
            return c[:, None]
        X, Y = np.meshgrid(c, c, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    @property
    def radii(self):
        return np.sqrt(np.sum(self.points ** 2, axis=-1))

    def weight(self, k):
        return (1.0 + np.sum(self.points ** 2, axis=-1)) ** (0.5 * k)

    def center_index(self):
        m = (self.n - 1) // 2
        return m if self.d == 1 else m * self.n + m

    # quadrature ------------------------------------------------------------

    def integrate(self, values):
        return float(np.sum(values) * self.cell_volume)

    def mass(self, values):
        return self.integrate(values)

    def weighted_norm(self, values, k=0.0, p=2.0):
        if p < 1:
            raise ConfigError(f"p must be >= 1, got {p}")
        s = self.integrate(np.abs(values) ** p * self.weight(k))
        return s ** (1.0 / p)

    def weighted_inner(self, f, g, k=0.0):
        return self.integrate(np.asarray(f) * np.asarray(g) * self.weight(k))

    def gradient(self, values):
        """Centred differences, one-sided at the boundary; shape (size, d)."""
        u = np.asarray(values, dtype=float).reshape(self.shape)
        if self.d == 1:
            return np.gradient(u, self.h, edge_order=1)[:, None]
        gx, gy = np.gradient(u, self.h, edge_order=1)
        return np.stack([gx.ravel(), gy.ravel()], axis=-1)

    def gradient_norm(self, values, k=0.0):
        g = self.gradient(values)
        return self.integrate(np.sum(g * g, axis=-1) * self.weight(k)) ** 0.5

    def to_dict(self):
        return {"d": self.d, "R_dom": self.R_dom, "n": self.n, "h": self.h}


def build_grid(d, R_dom, n):
    return Grid(int(d), float(R_dom), int(n) if int(n) == n else n)


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size != self.grid.size:
            raise ConfigError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise NumericError("grid function has non-finite values")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid, fn):
        return cls(fn(grid.points), grid)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def to_csv(self, path):
        write_gridfunction_csv(path, self)


def _values(f):
    return f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=float)


def mass(f):
    return f.grid.mass(f.values)


def weighted_norm(f, k=0.0, p=2.0):
    return f.grid.weighted_norm(f.values, k, p)


def weighted_inner(f, g, k=0.0):
    return f.grid.weighted_inner(f.values, _values(g), k)


def gradient_norm(f, k=0.0):
    return f.grid.gradient_norm(f.values, k)


@dataclass(frozen=True)
class FaceFluxes:
    """Per interior face: cell indices and the two flux coefficients.

    ``forward[f] = B(delta)/h^2`` multiplies u at ``left[f]`` and
    ``backward[f] = B(-delta)/h^2`` multiplies u at ``right[f]``.
    """

    left: np.ndarray
    right: np.ndarray
    delta: np.ndarray
    forward: np.ndarray
    backward: np.ndarray


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    matrix: sp.csr_matrix
    grid: Grid
    field: object = None
    scheme: str = "scharfetter-gummel"
    faces: FaceFluxes | None = dc_field(default=None, repr=False)

    def __matmul__(self, other):
        return self.matrix @ _values(other)

    def apply(self, f):
        return GridFunction(self.matrix @ _values(f), self.grid)

    def column_sums(self):
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def to_matrix_market(self, path):
        scipy.io.mmwrite(str(path), self.matrix, comment=f"fpk {self.scheme} operator, grid {self.grid.to_dict()}", precision=17)


def _faces(grid):
    """Interior faces as (left, right, midpoint, axis) arrays."""
    n, h, c = grid.n, grid.h, grid.centers
    if grid.d == 1:
        left = np.arange(n - 1)
        mid = (c[:-1] + 0.5 * h)[:, None]
        return [(left, left + 1, mid, 0)]
    idx = np.arange(grid.size).reshape(n, n)
    out = []
    # faces normal to x (axis 0): between (i, j) and (i + 1, j)
    li = idx[:-1, :].ravel()
    ri = idx[1:, :].ravel()
    xi, yj = np.meshgrid(c[:-1] + 0.5 * h, c, indexing="ij")
    out.append((li, ri, np.stack([xi.ravel(), yj.ravel()], axis=-1), 0))
    li = idx[:, :-1].ravel()
    ri = idx[:, 1:].ravel()
    xi, yj = np.meshgrid(c, c[:-1] + 0.5 * h, indexing="ij")
    out.append((li, ri, np.stack([xi.ravel(), yj.ravel()], axis=-1), 1))
    return out


def assemble_operator(grid, E):
    """Sparse L_h for the drift field ``E`` on ``grid`` (no-flux boundary)."""
    if E.d != grid.d:
        raise ConfigError(f"field dimension {E.d} does not match grid dimension {grid.d}")
    h = grid.h
    lefts, rights, deltas = [], [], []
    for left, right, mid, axis in _faces(grid):
        e = E.evaluate(mid)[:, axis]
        if not np.all(np.isfinite(e)):
            raise NumericError("force field is not finite on the box")
        lefts.append(left)
        rights.append(right)
        deltas.append(h * e)
    left = np.concatenate(lefts)
    right = np.concatenate(rights)
    delta = np.concatenate(deltas)
    fwd = bernoulli(delta) / h ** 2
    bwd = bernoulli(-delta) / h ** 2

    # outflow from left: -fwd*u_l + bwd*u_r ; inflow to right: +fwd*u_l - bwd*u_r
    rows = np.concatenate([left, left, right, right])
    cols = np.concatenate([left, right, left, right])
    vals = np.concatenate([-fwd, bwd, fwd, -bwd])
    m = sp.coo_matrix((vals, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    m.sum_duplicates()
    m.sort_indices()
    return OperatorMatrix(m, grid, E, "scharfetter-gummel", FaceFluxes(left, right, delta, fwd, bwd))


def assemble_adjoint(op):
    """Transpose of ``op`` (adjoint in the unweighted inner product)."""
    scheme = op.scheme[: -len("-adjoint")] if op.scheme.endswith("-adjoint") else op.scheme + "-adjoint"
    m = op.matrix.T.tocsr()
    m.sort_indices()
    return OperatorMatrix(m, op.grid, op.field, scheme, op.faces)


# ---------------------------------------------------------------------------
# CSV helpers


def _fmt(x):
    return format(float(x), ".17g")


def write_gridfunction_csv(path, f):
    grid = f.grid
    pts = grid.points
    header = ["index"] + (["x"] if grid.d == 1 else ["x", "y"]) + ["value"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(grid.size):
            w.writerow([i] + [_fmt(v) for v in pts[i]] + [_fmt(f.values[i])])


def read_gridfunction_csv(path, grid):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "index" or header[-1] != "value":
        raise ConfigError(f"{path}: not a grid-function CSV")
    values = np.empty(len(body))
    for row in body:
        values[int(row[0])] = float(row[-1])
    return GridFunction(values, grid)
