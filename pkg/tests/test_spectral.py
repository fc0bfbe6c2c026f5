import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fpk.errors import DegenerateError, NoConvergenceError, NonPositiveError, SizeError
from fpk.evolution import evolve, random_bumps, step_implicit_euler
from fpk.fields import ForceField, WeightContext
from fpk.grid import GridFunction, OperatorMatrix, assemble_operator, build_grid
from fpk.spectral import (
    coercivity_check,
    coercivity_residual,
    principal_eigen,
    spectral_gap,
    spectrum,
    stationary,
)


@pytest.fixture(scope="module")
def ou():
    g = build_grid(1, 8, 401)
    return assemble_operator(g, ForceField.linear(1.0))


@pytest.fixture(scope="module")
def rot2d():
    g = build_grid(2, 6, 101)
    return assemble_operator(g, ForceField.gradient_power_plus_rotation(1.5, 1.0))


def gaussian(g):
    x = g.centers
    return np.exp(-0.5 * x * x) / (np.sum(np.exp(-0.5 * x * x)) * g.h)


def test_stationary_ou_is_discrete_gaussian(ou):
    res = stationary(ou)
    ref = gaussian(ou.grid)
    assert np.max(np.abs(res.G.values - ref)) / ref.max() <= 1e-8
    assert res.mass == pytest.approx(1.0, abs=1e-12)
    assert res.min_value > 0
    assert res.residual <= 1e-10 * np.linalg.norm(res.G.values)


def test_stationary_zero_field_is_uniform():
    g = build_grid(2, 3, 11)
    res = stationary(assemble_operator(g, ForceField.linear(0.0, d=2)))
    np.testing.assert_allclose(res.G.values, 1 / 36, rtol=1e-10)


def test_stationary_non_gradient_2d(rot2d):
    res = stationary(rot2d)
    assert res.residual <= 1e-8
    assert res.min_value > 0
    assert res.mass == pytest.approx(1.0, abs=1e-12)
    # long-time limit of the flow from a different start
    g = rot2d.grid
    f0 = random_bumps(g, np.random.default_rng(4))
    f0 = GridFunction(f0.values / g.mass(f0.values), g)
    traj = evolve(rot2d, f0, 60.0, 0.5, G=res.G, store=True, sample_every=120)
    assert np.max(np.abs(traj.snapshots[-1] - res.G.values)) <= 1e-6 * res.G.values.max()


def test_stationary_is_fixed_point_of_time_step(ou):
    G = stationary(ou).G
    for dt in (1e-3, 0.1, 10.0):
        out = step_implicit_euler(ou, G, dt)
        assert np.max(np.abs(out.values - G.values)) <= 1e-10 * G.values.max()


def test_stationary_errors(ou):
    with pytest.raises(NoConvergenceError):
        stationary(ou, tol=1e-30, max_iter=3)
    # a generator whose null vector changes sign
    g = build_grid(1, 1, 3)
    P = np.array([[1.0, 0.0, 0.0], [-0.5, 1.0, 0.0], [1.0, 0.0, 1.0]])
    m = P @ np.diag([0.0, -1.0, -2.0]) @ np.linalg.inv(P)
    with pytest.raises(NonPositiveError):
        stationary(OperatorMatrix(sp.csr_matrix(m), g))


def test_principal_zero_field():
    g = build_grid(1, 4, 21)
    pair = principal_eigen(assemble_operator(g, ForceField.linear(0.0)))
    assert abs(pair.eigenvalue) <= 1e-12
    np.testing.assert_allclose(pair.vector, 1 / 8, rtol=1e-10)


def test_principal_ou_matches_stationary():
    g = build_grid(1, 8, 201)
    op = assemble_operator(g, ForceField.linear(1.0))
    pair = principal_eigen(op)
    assert abs(pair.eigenvalue) <= 1e-8
    assert pair.one_signed
    assert pair.next_real < -0.5
    G = stationary(op).G.values
    assert np.max(np.abs(pair.vector - G)) <= 1e-8


def test_principal_shift_covariance():
    g = build_grid(1, 8, 201)
    op = assemble_operator(g, ForceField.linear(1.0))
    shifted = OperatorMatrix((op.matrix - sp.identity(g.size)).tocsr(), g)
    assert principal_eigen(shifted).eigenvalue.real == pytest.approx(-1.0, abs=1e-10)


def test_dense_and_iterative_paths_agree(ou):
    dense = principal_eigen(ou)
    it = principal_eigen(ou, dense_limit=0)
    assert it.method == "inverse_iteration"
    assert abs(dense.eigenvalue - it.eigenvalue) <= 1e-8
    assert np.max(np.abs(dense.vector - it.vector)) <= 1e-8


def test_degenerate_principal():
    # two decoupled no-flux blocks: a double zero eigenvalue
    g = build_grid(1, 2, 9)
    a = assemble_operator(build_grid(1, 1, 3), ForceField.linear(0.0)).matrix
    b = assemble_operator(build_grid(1, 1, 3), ForceField.linear(0.0)).matrix
    blocks = sp.block_diag([a, b, a]).tocsr()
    with pytest.raises(DegenerateError):
        principal_eigen(OperatorMatrix(blocks, g))


def test_ou_gap(ou):
    res = spectrum(ou)
    assert res.gap == pytest.approx(1.0, rel=0.1)
    assert abs(res.principal) <= 1e-8
    assert res.principal_positive
    others = res.eigenvalues[np.abs(res.eigenvalues) > 1e-6]
    assert np.all(others.real < 0)


def test_ou_gap_converges_under_refinement():
    errs = []
    for n in (101, 201, 401):
        op = assemble_operator(build_grid(1, 8, n), ForceField.linear(1.0))
        errs.append(abs(spectral_gap(op) - 1.0))
    assert errs[0] > errs[1] > errs[2]


def test_neumann_gap():
    R = 8.0
    op = assemble_operator(build_grid(1, R, 401), ForceField.linear(0.0))
    assert spectral_gap(op) == pytest.approx((math.pi / (2 * R)) ** 2, rel=1e-2)


@settings(max_examples=10, deadline=None)
@given(st.floats(1.1, 2.0), st.floats(-2, 2))
def test_gap_positive(gamma, theta):
    op = assemble_operator(build_grid(2, 4, 15), ForceField.gradient_power_plus_rotation(gamma, theta))
    assert spectral_gap(op) > 0


def test_dense_limit(rot2d):
    with pytest.raises(SizeError):
        spectral_gap(rot2d)


def test_spectrum_csv(tmp_path):
    op = assemble_operator(build_grid(1, 3, 11), ForceField.linear(1.0))
    res = spectrum(op)
    res.to_csv(tmp_path / "eig.csv")
    data = np.loadtxt(tmp_path / "eig.csv", delimiter=",", skiprows=1)
    assert data.shape == (11, 2)
    assert data[0, 0] == pytest.approx(res.principal.real)


def test_coercivity_ou(ou):
    rep = coercivity_check(ou, WeightContext(2, 1), 3.0, trials=100)
    assert rep.min_residual >= -1e-3
    assert rep.verdict == "PASS"
    G = stationary(ou).G
    assert coercivity_residual(ou, G, 2, 3.0) >= 0


def test_coercivity_zero_field_is_an_identity():
    # k = 0, E = 0: (-Lphi|phi) = |grad phi|^2 up to the difference between
    # the face and the centred gradient, which is O(h^2)
    rng = np.random.default_rng(5)
    for n in (201, 401):
        g = build_grid(1, 8, n)
        op = assemble_operator(g, ForceField.linear(0.0))
        res = [abs(coercivity_residual(op, random_bumps(g, rng, count=1, widths=(1.0, 2.0)), 0, 0.0)) for _ in range(10)]
        assert max(res) <= (2e-3 if n == 201 else 5e-4)
