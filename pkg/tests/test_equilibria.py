import numpy as np
import pytest
from scipy.special import ive

from rba import equilibria as eq
from rba import so3
from rba import von_mises as vm
from rba.equilibria import Family
from rba.errors import DomainError, EnvelopeError

SQRT3 = np.sqrt(3.0)


def c1_bessel(alpha):
    """Closed form (I1 - I2) / (3 (I0 - I1)) of the axial coefficient."""
    i0, i1, i2 = (ive(n, alpha) for n in range(3))
    return (i1 - i2) / (3 * (i0 - i1))


def c2_langevin(alpha):
    k = SQRT3 * alpha / 2
    if abs(k) < 1e-2:
        return (k / 3 - k**3 / 45 + 2 * k**5 / 945) / SQRT3
    return (1 / np.tanh(k) - 1 / k) / SQRT3


@pytest.mark.parametrize("alpha", [-45.0, -7.0, -0.5, -1e-3, 1e-3, 0.2, 1.9395, 5.0, 20.0, 49.0])
def test_c1_matches_bessel_closed_form(alpha):
    assert eq.c1(alpha) == pytest.approx(c1_bessel(alpha), abs=1e-12)


def test_c1_limits_and_monotonicity():
    assert eq.c1(0.0) == 0.0
    grid = np.linspace(-50, 50, 201)
    vals = [eq.c1(a) for a in grid]
    assert np.all(np.diff(vals) > 0)
    assert -1 / 3 < vals[0] < -0.3 and 0.97 < vals[-1] < 1


def test_c2_matches_langevin():
    for alpha in np.linspace(-10, 10, 50):
        assert eq.c2(alpha) == pytest.approx(c2_langevin(alpha), abs=1e-10)
    assert eq.c2(0.0) == 0.0


def test_rho_small_alpha_series():
    for a in (1e-7, 1e-5, 1e-3):
        assert eq.rho1(a) == pytest.approx(a / c1_bessel(a), abs=1e-6)
        assert eq.rho2(a) == pytest.approx(a / c2_langevin(a), abs=1e-6)
    assert eq.rho1(0.0) == eq.rho2(0.0) == 6.0


def test_thresholds():
    tab = eq.find_thresholds()
    assert tab.rho_c == 6.0
    assert tab.alpha_star == pytest.approx(1.9395, abs=1e-3)
    assert tab.rho_star == pytest.approx(4.5832, abs=1e-3)
    assert tab.c_star == pytest.approx(0.4232, abs=1e-3)
    # alpha* is a minimum of rho1 and c* = alpha*/rho*
    assert tab.c_star == pytest.approx(tab.alpha_star / tab.rho_star, rel=1e-12)
    h = 1e-3
    assert eq.rho1(tab.alpha_star - h) > tab.rho_star < eq.rho1(tab.alpha_star + h)
    assert eq.rho1(1e-4) == pytest.approx(6.0, abs=1e-3)


def test_solve_branch_roots():
    tab = eq.find_thresholds()
    for rho in (4.6, 5.0, 6.5, 8.0, 12.0, 30.0):
        up, down = eq.solve_branch("AxialUp", rho), eq.solve_branch("AxialDown", rho)
        assert up > tab.alpha_star > down
        assert eq.rho1(up) == pytest.approx(rho, abs=1e-9)
        assert eq.rho1(down) == pytest.approx(rho, abs=1e-9)
        assert (down > 0) == (rho < 6)
        if rho > 6:
            r1 = eq.solve_branch("Rank1", rho)
            assert r1 > 0 and eq.rho2(r1) == pytest.approx(rho, abs=1e-9)
    assert eq.solve_branch("AxialUp", tab.rho_star) == tab.alpha_star
    assert eq.solve_branch("AxialDown", 6.0) == 0.0
    assert eq.solve_branch("Rank1", 6.0) == 0.0
    assert eq.solve_branch("Uniform", 3.0) == 0.0


def test_solve_branch_domains():
    with pytest.raises(DomainError):
        eq.solve_branch("AxialUp", 4.0)
    with pytest.raises(DomainError):
        eq.solve_branch("Rank1", 5.9)
    with pytest.raises(EnvelopeError):
        eq.solve_branch("AxialUp", 200.0)
    with pytest.raises(ValueError):
        eq.solve_branch("Sideways", 5.0)


def test_c1_inverse():
    for c in (-0.3, -0.1, 0.0, 0.2, 0.5, 0.9):
        assert eq.c1(eq.c1_inverse(c)) == pytest.approx(c, abs=1e-12)
    with pytest.raises(DomainError):
        eq.c1_inverse(1.0)


@pytest.mark.parametrize("rho", [5.0, 6.5, 8.0, 12.0])
def test_compatibility_residuals(rho, rng):
    for item in eq.classify_all(rho):
        assert item.residual < 1e-8
    a0 = so3.haar_sample(rng)
    alpha = eq.solve_branch("AxialUp", rho)
    assert so3.norm(alpha * a0 - rho * vm.mean_flux(alpha * a0)) < 1e-8


def test_gradient_v_finite_differences(rng):
    for rho in (3.0, 7.5):
        j = rng.normal(size=(3, 3)) * 2
        h = 1e-5
        for k in range(9):
            e = np.zeros(9)
            e[k] = 1.0
            e = e.reshape(3, 3)
            fd = (eq.potential_v(rho, j + h * e) - eq.potential_v(rho, j - h * e)) / (2 * h)
            assert fd == pytest.approx(so3.half_trace_inner(eq.gradient_v(rho, j), e), abs=1e-7)


def test_hessian_vbar_finite_differences(rng):
    for rho, d in ((3.0, np.zeros(3)), (7.0, np.array([2.0, 1.0, -0.5])), (9.0, rng.normal(size=3))):
        form = eq.hessian_vbar(rho, d)
        h = 1e-4
        fd = np.zeros((3, 3))
        vbar = lambda x: eq.potential_v(rho, np.diag(x))  # noqa: E731
        for i in range(3):
            for k in range(3):
                ei, ek = np.eye(3)[i] * h, np.eye(3)[k] * h
                fd[i, k] = (vbar(d + ei + ek) - vbar(d + ei - ek) - vbar(d - ei + ek) + vbar(d - ei - ek)) / (4 * h * h)
        np.testing.assert_allclose(form, fd, atol=1e-6)


def test_hessian_vbar_matches_general_moments(rng):
    rho, d = 7.0, np.array([1.5, 0.7, -0.2])
    j = np.diag(d)
    basis = [np.diag(e) for e in np.eye(3)]
    flux = vm.mean_flux(j)
    cov = np.array(
        [
            [
                vm.cross_moment(j, a, b) - so3.half_trace_inner(flux, a) * so3.half_trace_inner(flux, b)
                for b in basis
            ]
            for a in basis
        ]
    )
    np.testing.assert_allclose(eq.hessian_vbar(rho, d), 0.5 * np.eye(3) - rho * cov, atol=1e-13)


def test_hessian_at_uniform():
    for rho in (1.0, 5.0, 6.0, 9.0):
        np.testing.assert_allclose(eq.hessian_vbar(rho, np.zeros(3)), (1 - rho / 6) * 0.5 * np.eye(3), atol=1e-14)
        np.testing.assert_allclose(eq.metric_eigenvalues(eq.hessian_vbar(rho, np.zeros(3))), 1 - rho / 6, atol=1e-14)


@pytest.mark.parametrize(
    "rho, family, expected",
    [
        (5.0, Family.UNIFORM, "(+++)"),
        (7.0, Family.UNIFORM, "(---)"),
        (5.0, Family.AXIAL_UP, "(+++)"),
        (5.0, Family.AXIAL_DOWN, "(-++)"),
        (7.0, Family.AXIAL_UP, "(+++)"),
        (7.0, Family.AXIAL_DOWN, "(+--)"),
        (7.0, Family.RANK1, "(++-)"),
    ],
)
def test_signature_table(rho, family, expected):
    rep = eq.signature_report(rho, family)
    assert rep.signature == expected
    assert np.all(rep.eigenvalues < 1) and np.all(np.abs(rep.eigenvalues) > 1e-4)


def test_signature_critical_cases():
    rep = eq.signature_report(6.0, Family.UNIFORM)
    assert rep.signature == "(000)" and not rep.is_local_min
    with pytest.raises(DomainError):
        eq.signature_report(6.0, Family.RANK1)


def test_free_energy_equals_potential_at_steady_states():
    for rho in (5.0, 8.0):
        for item in eq.classify_all(rho):
            j = item.equilibrium.flux_matrix()
            assert eq.free_energy_w(rho, j) == pytest.approx(eq.potential_v(rho, j) + rho * np.log(rho), abs=1e-12)
    with pytest.raises(DomainError):
        eq.free_energy_w(0.0, np.eye(3))


def test_free_energy_hessian_relation():
    # At a critical point Hess W = Hess V - (Hess V)^2 in the metric.
    rho = 7.0
    d = eq.canonical_point(rho, Family.AXIAL_UP)
    hv = eq.metric_eigenvalues(eq.hessian_vbar(rho, d))
    h = 1e-4
    w = lambda x: eq.free_energy_w(rho, np.diag(x))  # noqa: E731
    fd = np.zeros((3, 3))
    for i in range(3):
        for k in range(3):
            ei, ek = np.eye(3)[i] * h, np.eye(3)[k] * h
            fd[i, k] = (w(d + ei + ek) - w(d + ei - ek) - w(d - ei + ek) + w(d - ei - ek)) / (4 * h * h)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(2 * fd)), np.sort(hv - hv**2), atol=1e-5)


def test_classify_all_labels():
    tab = eq.find_thresholds()
    fams = lambda rho: {c.equilibrium.tag: c for c in eq.classify_all(rho)}  # noqa: E731
    low = fams(3.0)
    assert list(low) == [Family.UNIFORM] and low[Family.UNIFORM].stable
    mid = fams(5.0)
    assert mid[Family.UNIFORM].stable and mid[Family.AXIAL_UP].stable and not mid[Family.AXIAL_DOWN].stable
    high = fams(8.0)
    assert [k for k, v in high.items() if v.stable] == [Family.AXIAL_UP]
    assert high[Family.AXIAL_UP].order_parameter == pytest.approx(tab.c1_up(8.0), abs=1e-12)
    crit = fams(6.0)
    assert not crit[Family.UNIFORM].stable and Family.RANK1 not in crit
    with pytest.raises(DomainError):
        eq.classify_all(0.0)


def test_equilibrium_flux_matrices():
    e1 = np.array([1.0, 0.0, 0.0])
    r1 = eq.EquilibriumClass(Family.RANK1, 2.0, vectors=(e1, e1))
    np.testing.assert_allclose(r1.flux_matrix(), np.diag([2 * SQRT3, 0, 0]))
    ax = eq.EquilibriumClass(Family.AXIAL_UP, 3.0, frame=np.eye(3))
    np.testing.assert_allclose(ax.flux_matrix(), 3 * np.eye(3))
    assert np.array_equal(eq.EquilibriumClass(Family.UNIFORM).flux_matrix(), np.zeros((3, 3)))
