"""Force fields, weight identities and sampling-based hypothesis checks.

Points are arrays whose last axis has length ``d``; every function is
vectorised over the leading axes.  The hypothesis checks sweep a radial grid
(times a fan of directions in 2D) and report infima/suprema over that finite
sample.  They certify nothing about points outside the sweep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

KINDS = ("gradient_power", "linear", "gradient_power_plus_rotation", "custom_polynomial")

SAMPLING_CAVEAT = (
    "sampling-based verification on a finite radial sweep; constants are "
    "extrema over the samples, not proofs over all of R^d"
)


def _points(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if d is not None and x.shape[-1] != d:
        raise ConfigError(f"expected points with last axis {d}, got shape {x.shape}")
    return x


def _r2(x):
    return np.sum(x * x, axis=-1)


def weight(x, k):
    """<x>^k = (1 + |x|^2)^(k/2)."""
    x = _points(x)
    return (1.0 + _r2(x)) ** (0.5 * k)


def grad_weight(x, k):
    x = _points(x)
    r2 = _r2(x)
    return (k / (1.0 + r2) * (1.0 + r2) ** (0.5 * k))[..., None] * x


def laplace_weight(x, k):
    x = _points(x)
    d = x.shape[-1]
    r2 = _r2(x)
    return (k * d + k * (k + d - 2) * r2) / (1.0 + r2) ** 2 * (1.0 + r2) ** (0.5 * k)


@dataclass(frozen=True)
class WeightContext:
    """Weight exponent ``k``, dimension ``d`` and Lebesgue exponent ``p``."""

    k: float
    d: int
    p: float = 2.0

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"weight exponent k must be >= 0, got {self.k}")
        if self.d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.d}")
        if not self.p >= 2:
            raise ConfigError(f"Lebesgue exponent p must lie in [2, inf), got {self.p}")

    @property
    def p_conj(self):
        return self.p / (self.p - 1.0)

    @property
    def p_over_pconj(self):
        # p / p' = p - 1
        return self.p - 1.0

    def nash_admissible(self):
        if self.d == 1:
            return self.k >= 2
        return self.k > 0

    def require_nash(self):
        if not self.nash_admissible():
            need = "k >= 2" if self.d == 1 else "k > 0"
            raise ConfigError(f"Nash inequality needs {need} in d={self.d}, got k={self.k}")


@dataclass(frozen=True, eq=False)
class ForceField:
    """A drift field E on R^d with its analytic divergence.

    ``kind`` is one of :data:`KINDS`.  Parameters:

    * ``gradient_power``: ``gamma`` in (1, 2]; E(x) = x <x>^(gamma-2).
    * ``linear``: ``matrix`` (d x d) or ``scale`` (E(x) = scale * x).
    * ``gradient_power_plus_rotation``: ``gamma``, ``theta``; d = 2 only.
      Adds theta * (-x2, x1) / (1 + |x|^2), which is divergence free and
      orthogonal to x.
    * ``custom_polynomial``: ``components``, one list of ``[coef, [e1, ..]]``
      monomial terms per output component.
    """

    kind: str
    d: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        if self.d not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.d}")
        p = self.params
        if self.kind in ("gradient_power", "gradient_power_plus_rotation"):
            gamma = float(p.get("gamma", 2.0))
            if not 1.0 < gamma <= 2.0:
                raise ConfigError(f"gamma must lie in (1, 2], got {gamma}")
        if self.kind == "gradient_power_plus_rotation" and self.d != 2:
            raise ConfigError("the rotation perturbation is defined for d = 2 only")
        if self.kind == "linear" and "matrix" in p:
            m = np.asarray(p["matrix"], dtype=float)
            if m.shape != (self.d, self.d):
                raise ConfigError(f"linear matrix must be {self.d}x{self.d}, got {m.shape}")
        if self.kind == "custom_polynomial":
            comps = p.get("components")
            if comps is None or len(comps) != self.d:
                raise ConfigError("custom_polynomial needs one term list per component")
            for terms in comps:
                for term in terms:
                    if len(term) != 2 or len(term[1]) != self.d:
                        raise ConfigError(f"malformed polynomial term {term!r}")
                    if any(int(e) != e or e < 0 for e in term[1]):
                        raise ConfigError(f"exponents must be non-negative integers: {term!r}")

    # constructors -------------------------------------------------------

    @classmethod
    def gradient_power(cls, gamma, d=1):
        return cls("gradient_power", d, {"gamma": float(gamma)})

    @classmethod
    def linear(cls, scale=1.0, d=1, matrix=None):
        if matrix is not None:
            return cls("linear", d, {"matrix": np.asarray(matrix, dtype=float).tolist()})
        return cls("linear", d, {"scale": float(scale)})

    @classmethod
    def gradient_power_plus_rotation(cls, gamma, theta=1.0):
        return cls("gradient_power_plus_rotation", 2, {"gamma": float(gamma), "theta": float(theta)})

    @classmethod
    def custom_polynomial(cls, components, d):
        return cls("custom_polynomial", d, {"components": components})

    @classmethod
    def from_spec(cls, kind, d, params=None):
        return cls(kind, int(d), dict(params or {}))

    # metadata ------------------------------------------------------------

    @property
    def gamma(self):
        return float(self.params.get("gamma", 2.0))

    @property
    def growth_exponent(self):
        """Default exponent for the growth bounds on x.E."""
        if self.kind in ("gradient_power", "gradient_power_plus_rotation"):
            return self.gamma
        return float(self.params.get("growth_exponent", 2.0))

    @property
    def gradient_part(self):
        """The gradient component, when known analytically, else ``None``."""
        if self.kind == "gradient_power":
            return self
        if self.kind == "gradient_power_plus_rotation":
            return ForceField.gradient_power(self.gamma, self.d)
        if self.kind == "linear":
            m = self._matrix()
            return self if np.array_equal(m, m.T) else None
        return None

    def potential(self, x):
        """Phi with E = grad Phi, for gradient kinds; raises otherwise."""
        x = _points(x, self.d)
        if self.kind in ("gradient_power", "gradient_power_plus_rotation"):
            return (1.0 + _r2(x)) ** (0.5 * self.gamma) / self.gamma
        if self.kind == "linear" and self.gradient_part is not None:
            m = self._matrix()
            return 0.5 * np.einsum("...i,ij,...j->...", x, m, x)
        raise ConfigError(f"field {self.kind!r} has no known potential")

    def _matrix(self):
        if "matrix" in self.params:
            return np.asarray(self.params["matrix"], dtype=float)
        return float(self.params.get("scale", 1.0)) * np.eye(self.d)

    # evaluation ------------------------------------------------------------

    def evaluate(self, x):
        x = _points(x, self.d)
        if self.kind in ("gradient_power", "gradient_power_plus_rotation"):
            r2 = _r2(x)
            out = ((1.0 + r2) ** (0.5 * self.gamma - 1.0))[..., None] * x
            if self.kind == "gradient_power_plus_rotation":
                s = float(self.params.get("theta", 1.0)) / (1.0 + r2)
                rot = np.stack([-s * x[..., 1], s * x[..., 0]], axis=-1)
                out = out + rot
            return out
        if self.kind == "linear":
            return x @ self._matrix().T
        comps = []
        for terms in self.params["components"]:
            acc = np.zeros(x.shape[:-1])
            for coef, exps in terms:
                acc = acc + coef * np.prod(x ** np.asarray(exps, dtype=float), axis=-1)
            comps.append(acc)
        return np.stack(comps, axis=-1)

    def divergence(self, x):
        x = _points(x, self.d)
        if self.kind in ("gradient_power", "gradient_power_plus_rotation"):
            # rotation part is divergence free
            g = self.gamma
            r2 = _r2(x)
            return self.d * (1.0 + r2) ** (0.5 * g - 1.0) + (g - 2.0) * r2 * (1.0 + r2) ** (0.5 * g - 2.0)
        if self.kind == "linear":
            return np.full(x.shape[:-1], float(np.trace(self._matrix())))
        acc = np.zeros(x.shape[:-1])
        for i, terms in enumerate(self.params["components"]):
            for coef, exps in terms:
                exps = np.asarray(exps, dtype=float)
                if exps[i] == 0:
                    continue
                lowered = exps.copy()
                lowered[i] -= 1
                acc = acc + coef * exps[i] * np.prod(x ** lowered, axis=-1)
        return acc

    def radial_component(self, x):
        """x . E(x)."""
        x = _points(x, self.d)
        return np.sum(x * self.evaluate(x), axis=-1)

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "params": self.params}


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class Samples:
    points: np.ndarray
    radii: np.ndarray
    r_min: float
    r_max: float
    n_radial: int
    n_angular: int

    def meta(self):
        return {
            "r_min": self.r_min,
            "r_max": self.r_max,
            "n_radial": self.n_radial,
            "n_angular": self.n_angular,
            "n_points": int(self.radii.size),
        }


def radial_samples(d, r_max=50.0, n_radial=10_000, n_angular=64, r_min=0.0):
    """Radius sweep on [r_min, r_max] times a fan of directions.

    In 1D the directions are +1 and -1; ``n_angular`` is ignored.
    """
    if r_max <= r_min or n_radial < 2:
        raise ConfigError("radial sweep needs r_max > r_min and at least 2 samples")
    r = np.linspace(r_min, r_max, n_radial)
    if d == 1:
        dirs = np.array([[1.0], [-1.0]])
        n_angular = 2
    else:
        th = 2.0 * np.pi * np.arange(n_angular) / n_angular
        dirs = np.stack([np.cos(th), np.sin(th)], axis=-1)
    pts = (r[:, None, None] * dirs[None, :, :]).reshape(-1, d)
    radii = np.repeat(r, dirs.shape[0])
    return Samples(pts, radii, float(r_min), float(r_max), int(n_radial), int(n_angular))


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{what} is not finite at some sample point")


def _radial_q(r2, k, d):
    # Delta<x>^k / <x>^k
    return (k * d + k * (k + d - 2) * r2) / (1.0 + r2) ** 2


def h2_expression(E, x, ctx):
    """-(p/p') div E + k x.E / (1 + |x|^2)."""
    x = _points(x, E.d)
    return -ctx.p_over_pconj * E.divergence(x) + ctx.k * E.radial_component(x) / (1.0 + _r2(x))


def h3_expression(E, x, ctx):
    x = _points(x, E.d)
    return -_radial_q(_r2(x), ctx.k, E.d) + h2_expression(E, x, ctx)


def psi_k_over_weight(E, x, ctx):
    """Psi_k(x) / <x>^k for p = 2."""
    if ctx.p != 2:
        raise ConfigError("psi_k_over_weight is the p = 2 quotient")
    x = _points(x, E.d)
    r2 = _r2(x)
    return -_radial_q(r2, ctx.k, E.d) - E.divergence(x) + ctx.k * E.radial_component(x) / (1.0 + r2)


# ---------------------------------------------------------------------------
# hypothesis checks


@dataclass(frozen=True)
class H1Result:
    alpha: float
    beta: float
    alpha2: float
    beta2: float
    gamma: float
    gamma2: float
    verdict: str


@dataclass(frozen=True)
class H2Result:
    beta0: float
    argmin: tuple
    verdict: str


@dataclass(frozen=True)
class H3Result:
    omega_star: float
    R: float
    argmin: tuple
    verdict: str
    at_sweep_edge: bool


@dataclass(frozen=True)
class SubEigenResult:
    b: float
    alpha0: float
    argmin: tuple
    b_doubled: float
    verdict: str


def check_H1(E, gamma=None, gamma2=None, samples=None):
    """Growth constants for alpha|x|^gamma - beta <= x.E <= alpha2|x|^gamma2 + beta2.

    Lower pair: beta from the unit ball, alpha from |x| >= 1, then beta is
    raised if needed so that the bound holds at every sample.  Upper pair:
    alpha2 from |x| >= 1, then the smallest beta2 >= 0 validating all samples.
    """
    gamma = E.growth_exponent if gamma is None else float(gamma)
    gamma2 = gamma if gamma2 is None else float(gamma2)
    if not 1.0 < gamma <= gamma2 <= 2.0:
        raise ConfigError(f"need 1 < gamma <= gamma2 <= 2, got {gamma}, {gamma2}")
    s = radial_samples(E.d) if samples is None else samples
    r = s.radii
    xe = E.radial_component(s.points)
    _check_finite(xe, "x.E")
    inner = r <= 1.0
    outer = r >= 1.0
    if not inner.any() or not outer.any():
        raise ConfigError("H1 sweep must cover radii on both sides of 1")

    beta = max(0.0, float(-np.min(xe[inner])))
    alpha = float(np.min((xe[outer] + beta) / r[outer] ** gamma))
    beta = max(beta, float(np.max(alpha * r ** gamma - xe)))

    alpha2 = float(np.max(xe[outer] / r[outer] ** gamma2))
    beta2 = max(0.0, float(np.max(xe - alpha2 * r ** gamma2)))

    ok = alpha > 0 and alpha2 > 0 and all(map(math.isfinite, (alpha, beta, alpha2, beta2)))
    return H1Result(alpha, beta, alpha2, beta2, gamma, gamma2, "PASS" if ok else "FAIL")


def check_H2(E, ctx, samples=None):
    s = radial_samples(E.d) if samples is None else samples
    vals = h2_expression(E, s.points, ctx)
    _check_finite(vals, "H2 expression")
    i = int(np.argmin(vals))
    return H2Result(float(vals[i]), tuple(s.points[i].tolist()), "PASS")


def check_H3(E, ctx, R, samples=None, r_max=50.0, n_radial=10_000, n_angular=64):
    """Infimum of the H3 integrand over samples with |x| >= R.

    The infimum over the open region |x| > R equals the one over its closure
    for continuous fields, so the default sweep starts exactly at R.
    """
    if R <= 0:
        raise ConfigError(f"H3 radius must be positive, got {R}")
    if samples is None:
        samples = radial_samples(E.d, r_max=r_max, n_radial=n_radial, n_angular=n_angular, r_min=R)
    keep = samples.radii >= R
    if not keep.any():
        raise ConfigError(f"no samples beyond R = {R}")
    pts = samples.points[keep]
    vals = h3_expression(E, pts, ctx)
    _check_finite(vals, "H3 expression")
    i = int(np.argmin(vals))
    radii = samples.radii[keep]
    step = (samples.r_max - samples.r_min) / max(samples.n_radial - 1, 1)
    edge = bool(radii[i] >= samples.r_max - 1.5 * step)
    w = float(vals[i])
    return H3Result(w, float(R), tuple(pts[i].tolist()), "PASS" if w > 0 else "FAIL", edge)


def lambda0_forms(beta0, ctx, r_max=50.0, n_radial=10_000):
    """Both written forms of the coercivity shift, maximised over a sweep.

    Returns ``(first, second)`` where ``first`` uses
    kd/(1+r^2) + k(k-2) r^2/(1+r^2)^2 and ``second`` uses
    (kd + k(k+d-2) r^2)/(1+r^2)^2.  The two agree algebraically.
    """
    k, d = ctx.k, ctx.d
    r2 = np.linspace(0.0, r_max, n_radial) ** 2
    first = k * d / (1.0 + r2) + k * (k - 2) * r2 / (1.0 + r2) ** 2 - beta0
    second = _radial_q(r2, k, d) - beta0
    return float(np.max(first)), float(np.max(second))


def lambda0(beta0, ctx, r_max=50.0, n_radial=10_000):
    if not math.isfinite(beta0):
        raise NumericError("beta0 must be finite")
    return max(lambda0_forms(beta0, ctx, r_max, n_radial))


def lp_growth_rate(beta0_p, ctx, r_max=50.0, n_radial=10_000):
    """Exponential rate bounding ||f(t)|| in L^p_k, with beta0 taken at that p.

    The L^p_k energy identity gives d/dt ||f||^p <= (max Q - beta0(p)) ||f||^p
    with Q = Delta<x>^k/<x>^k, hence the rate (max Q - beta0(p)) / p.
    """
    return lambda0(beta0_p, ctx, r_max, n_radial) / ctx.p


def _subeigen_values(E, alpha0, x):
    d = E.d
    r2 = _r2(x)
    return (alpha0 * (alpha0 + 2 - d) * r2 - alpha0 * d) / (1.0 + r2) ** 2 + alpha0 * E.radial_component(x) / (1.0 + r2)


def adjoint_subeigen(E, alpha0=None, samples=None, rtol=1e-9):
    """b = inf (L* psi)/psi for psi = <x>^(-alpha0).

    PASS when the infimum is unchanged (to ``rtol``) after doubling the sweep
    radius, i.e. it is attained inside the sweep.
    """
    alpha0 = float(E.d + 2) if alpha0 is None else float(alpha0)
    if alpha0 <= 0:
        raise ConfigError(f"alpha0 must be positive, got {alpha0}")
    s = radial_samples(E.d) if samples is None else samples
    vals = _subeigen_values(E, alpha0, s.points)
    _check_finite(vals, "L*psi/psi")
    i = int(np.argmin(vals))
    b = float(vals[i])
    s2 = radial_samples(E.d, r_max=2 * s.r_max, n_radial=2 * s.n_radial - 1, n_angular=s.n_angular, r_min=s.r_min)
    vals2 = _subeigen_values(E, alpha0, s2.points)
    _check_finite(vals2, "L*psi/psi")
    b2 = float(np.min(vals2))
    ok = abs(b - b2) <= rtol * max(1.0, abs(b))
    return SubEigenResult(b, alpha0, tuple(s.points[i].tolist()), b2, "PASS" if ok else "FAIL")


def auto_cutoff_radius(E, ctx, r_max=50.0, n_radial=10_000, n_angular=64):
    """Smallest integer n >= 1 beyond which the H3 integrand is positive.

    Returns ``None`` when the integrand is non-positive somewhere near the
    end of the sweep (no such radius exists within it).
    """
    s = radial_samples(E.d, r_max=r_max, n_radial=n_radial, n_angular=n_angular)
    vals = h3_expression(E, s.points, ctx)
    _check_finite(vals, "H3 expression")
    bad = s.radii[vals <= 0]
    if bad.size == 0:
        return 1
    worst = float(bad.max())
    if worst >= r_max - 1e-12:
        return None
    return max(1, int(math.floor(worst)) + 1)


@dataclass(frozen=True)
class HypothesisReport:
    h1: H1Result
    h2: H2Result
    h3: H3Result
    lambda0: float
    lambda0_forms: tuple
    subeigen: SubEigenResult
    k: float
    p: float
    sampling: dict

    @property
    def verdicts(self):
        return {"h1": self.h1.verdict, "h2": self.h2.verdict, "h3": self.h3.verdict, "b": self.subeigen.verdict}

    @property
    def all_pass(self):
        return all(v == "PASS" for v in self.verdicts.values())

    def to_dict(self):
        f1, f2 = self.lambda0_forms
        return {
            "alpha": self.h1.alpha,
            "beta": self.h1.beta,
            "alpha2": self.h1.alpha2,
            "beta2": self.h1.beta2,
            "gamma": self.h1.gamma,
            "gamma2": self.h1.gamma2,
            "beta0": self.h2.beta0,
            "beta0_argmin": list(self.h2.argmin),
            "omega_star": self.h3.omega_star,
            "R": self.h3.R,
            "omega_star_argmin": list(self.h3.argmin),
            "omega_star_at_sweep_edge": self.h3.at_sweep_edge,
            "lambda0": self.lambda0,
            "lambda0_first_form": f1,
            "lambda0_second_form": f2,
            "lambda0_forms_agree": abs(f1 - f2) <= 1e-12 * max(1.0, abs(f1)),
            "b": self.subeigen.b,
            "alpha0": self.subeigen.alpha0,
            "b_doubled_sweep": self.subeigen.b_doubled,
            "k": self.k,
            "p": self.p,
            "verdicts": self.verdicts,
            "sampling": self.sampling,
            "caveat": SAMPLING_CAVEAT,
        }


def check_hypotheses(E, ctx, R, gamma=None, gamma2=None, alpha0=None, r_max=50.0, n_radial=10_000, n_angular=64):
    s = radial_samples(E.d, r_max=r_max, n_radial=n_radial, n_angular=n_angular)
    h1 = check_H1(E, gamma, gamma2, s)
    h2 = check_H2(E, ctx, s)
    h3 = check_H3(E, ctx, R, r_max=r_max, n_radial=n_radial, n_angular=n_angular)
    forms = lambda0_forms(h2.beta0, ctx, r_max, n_radial)
    sub = adjoint_subeigen(E, alpha0, s)
    return HypothesisReport(h1, h2, h3, max(forms), forms, sub, ctx.k, ctx.p, s.meta())
