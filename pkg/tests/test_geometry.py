import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fluidcf.exceptions import DomainError
from fluidcf.geometry import (
    AngularSpec,
    ArrayGeometry,
    bessel_j0,
    correlation_matrix,
    flat_index,
    jakes,
    jakes_uca,
    jakes_ula,
    jakes_upa,
    local_scattering,
    port_positions,
    psd_project,
    spherical_j0,
    unflatten,
)
from helpers import j0_integral, j0_series, random_psd


@pytest.mark.parametrize("n,q,Q,i", [(1, 1, 5, 1), (2, 3, 5, 8), (4, 5, 5, 20)])
def test_flat_index_values(n, q, Q, i):
    assert flat_index(n, q, Q) == i
    assert unflatten(i, Q) == (n, q)


@pytest.mark.parametrize("n,q,Q", [(0, 1, 5), (1, 0, 5), (1, 6, 5)])
def test_flat_index_out_of_range(n, q, Q):
    with pytest.raises(DomainError):
        flat_index(n, q, Q)


@given(st.integers(1, 12), st.integers(1, 12), st.data())
def test_flat_index_bijection(N, Q, data):
    n = data.draw(st.integers(1, N))
    q = data.draw(st.integers(1, Q))
    assert unflatten(flat_index(n, q, Q), Q) == (n, q)
    seen = {flat_index(a, b, Q) for a in range(1, N + 1) for b in range(1, Q + 1)}
    assert seen == set(range(1, N * Q + 1))


def test_geometry_derived_apertures():
    g = ArrayGeometry("UPA", n_antennas=3, n_ports=4, port_spacing=0.5, fa_gap=0.1)
    assert g.fa_length == 4 * 0.5
    assert g.fa_diameter == pytest.approx(0.4)
    assert g.aperture_upa == pytest.approx((2.0, 2 * 0.1 + 3 * 0.4))
    u = ArrayGeometry("ULA", 4, 5, 0.5)
    assert u.aperture_ula == 4 * 2.5 + 3 * 0.5
    assert ArrayGeometry("UCA", 4, 5, 0.5).aperture_uca == 2 * 6 * 0.5


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="ULA", n_antennas=0),
        dict(kind="ULA", n_ports=0),
        dict(kind="ULA", port_spacing=0.0),
        dict(kind="UPA", port_spacing=0.5, fa_gap=0.5),
        dict(kind="UPA", fa_gap=-0.1),
    ],
)
def test_geometry_invalid(kwargs):
    with pytest.raises(DomainError):
        ArrayGeometry(**kwargs)


@pytest.mark.parametrize("x", [0.0, 0.3, 1.0, 2.404825557695773, np.pi, 2 * np.pi, 7.5, 13.0])
def test_bessel_j0_against_integral_oracle(x):
    assert bessel_j0(x) == pytest.approx(j0_integral(x), abs=1e-12)
    assert bessel_j0(x) == pytest.approx(j0_series(x), abs=1e-10)


def test_spherical_j0_small_argument_branch():
    x = np.array([0.0, 1e-8, 5e-5, 2e-4, np.pi])
    ref = np.array([1.0, 1.0, 1.0 - (5e-5) ** 2 / 6, np.sin(2e-4) / 2e-4, 0.0])
    assert np.allclose(spherical_j0(x), ref, atol=1e-15)


def test_jakes_ula_two_port_value():
    J = jakes_ula(ArrayGeometry("ULA", 1, 2, 0.5))
    assert J[0, 1] == pytest.approx(j0_integral(2 * np.pi), abs=1e-12)
    assert J[0, 1] == pytest.approx(j0_series(2 * np.pi), abs=1e-12)


def test_jakes_ula_single_port():
    assert np.array_equal(jakes_ula(ArrayGeometry("ULA", 1, 1, 0.5)), np.ones((1, 1)))


def test_jakes_ula_entry_formula():
    g = ArrayGeometry("ULA", 3, 4, 0.3)
    J = jakes_ula(g)
    N, Q = 3, 4
    ell = N * Q * 0.3 + (N - 1) * 0.3
    for (n, q, n2, q2) in [(1, 1, 2, 3), (3, 4, 1, 1), (2, 2, 2, 4)]:
        i, j = flat_index(n, q, Q) - 1, flat_index(n2, q2, Q) - 1
        arg = 2 * np.pi * abs((n - n2) * Q + (q - q2)) * ell / (Q * N + N - 2)
        assert J[i, j] == pytest.approx(j0_integral(arg), abs=1e-12)


def test_jakes_upa_degenerate_spacing():
    J = jakes_upa(ArrayGeometry("UPA", 1, 2, 0.25, 0.0))
    assert J[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert J[0, 0] == 1.0


def test_jakes_upa_entry_formula():
    g = ArrayGeometry("UPA", 3, 4, 0.5, 0.1)
    J = jakes_upa(g)
    l1, l2 = g.aperture_upa
    i, j = flat_index(1, 1, 4) - 1, flat_index(3, 2, 4) - 1
    dist = np.hypot(1 * l1 / 3, 2 * l2 / 2)
    assert J[i, j] == pytest.approx(np.sin(2 * np.pi * dist) / (2 * np.pi * dist), abs=1e-14)


def test_jakes_uca_adjacent_ports_zero():
    J = jakes_uca(ArrayGeometry("UCA", 1, 3, 0.5))
    assert J[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert J[1, 2] == pytest.approx(0.0, abs=1e-15)


def test_uca_single_antenna_is_collinear():
    D = 0.37
    J = jakes_uca(ArrayGeometry("UCA", 1, 5, D))
    q = np.arange(5)
    x = 2 * np.pi * D * np.abs(q[:, None] - q[None, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        ref = np.where(x == 0, 1.0, np.sin(x) / x)
    assert np.allclose(J, ref, atol=1e-14)


def test_uca_rotation_invariance():
    g = ArrayGeometry("UCA", 4, 3, 0.5)
    J = jakes_uca(g)
    # rotating every FA by one angular slot permutes antennas cyclically
    perm = np.roll(np.arange(12).reshape(4, 3), 1, axis=0).ravel()
    assert np.allclose(J[np.ix_(perm, perm)], J, atol=1e-14)


@pytest.mark.parametrize("kind", ["ULA", "UPA", "UCA"])
def test_jakes_table_geometry_properties(kind):
    g = ArrayGeometry(kind, 4, 5, 0.5, 0.1 if kind == "UPA" else 0.0)
    J = jakes(g)
    assert np.allclose(J, J.T)
    assert np.allclose(np.diag(J), 1.0)
    assert np.linalg.eigvalsh(J).min() >= -1e-10


def test_jakes_ula_first_lobe_monotone():
    J = jakes_ula(ArrayGeometry("ULA", 4, 5, 0.5))
    lags = J[0]
    # spacing here is about 0.52 wavelengths, so only lag 0..1 lie inside the first lobe
    first_zero = 2.404825557695773
    step = 2 * np.pi * (4 * 2.5 + 1.5) / 22
    inside = [m for m in range(1, 20) if m * step < first_zero]
    for m in inside:
        assert lags[1] >= lags[m]
    assert np.all(np.abs(lags) <= 1.0)


@given(
    st.sampled_from(["ULA", "UPA", "UCA"]),
    st.integers(1, 4),
    st.integers(1, 4),
    st.floats(0.1, 1.0),
)
def test_jakes_hermitian_unit_diagonal(kind, N, Q, D):
    g = ArrayGeometry(kind, N, Q, D, 0.05 if kind == "UPA" else 0.0)
    J = jakes(g)
    assert J.shape == (N * Q, N * Q)
    assert np.allclose(J, J.conj().T)
    assert np.allclose(np.diag(J), 1.0)
    assert np.linalg.eigvalsh(J).min() >= -1e-10


def test_local_scattering_matches_monte_carlo(rng):
    g = ArrayGeometry("ULA", 1, 2, 0.5)
    ang = AngularSpec.from_degrees(30.0, 10.0, 15.0, 15.0)
    J = local_scattering(g, ang)
    # brute-force sampling of the truncated Gaussian angles
    n = 10**6
    phi = rng.normal(ang.azimuth, ang.asd_azimuth, 2 * n)
    th = rng.normal(ang.elevation, ang.asd_elevation, 2 * n)
    keep = (np.abs(phi - ang.azimuth) <= 4 * ang.asd_azimuth) & (np.abs(th - ang.elevation) <= 4 * ang.asd_elevation)
    phi, th = phi[keep][:n], th[keep][:n]
    ref = np.mean(np.exp(1j * 2 * np.pi * (-0.5) * np.sin(phi) * np.cos(th)))
    assert abs(J[0, 1] - ref) < 1e-3


def test_local_scattering_small_spread_is_coherent():
    g = ArrayGeometry("ULA", 2, 3, 0.5)
    J = local_scattering(g, AngularSpec(0.4, 0.1, 1e-4, 1e-4))
    assert np.allclose(np.abs(J), 1.0, atol=1e-6)


@pytest.mark.parametrize("kind", ["ULA", "UPA", "UCA"])
def test_local_scattering_structure(kind):
    g = ArrayGeometry(kind, 2, 3, 0.5, 0.1 if kind == "UPA" else 0.0)
    J = local_scattering(g, AngularSpec.from_degrees(20, -5, 15, 15))
    assert np.allclose(J, J.conj().T)
    assert np.allclose(np.diag(J), 1.0)
    assert np.linalg.eigvalsh(J).min() >= -1e-8


def test_local_scattering_nonconvergence_raises():
    from fluidcf.exceptions import NumericalError

    g = ArrayGeometry("ULA", 4, 5, 3.0)
    with pytest.raises(NumericalError):
        local_scattering(g, AngularSpec.from_degrees(0, 0, 45, 45), n_nodes=4, max_nodes=8, tol=1e-14)


def test_psd_project_cases(rng):
    P = random_psd(rng, 4)
    d = np.sqrt(np.real(np.diag(P)))
    P = P / d[:, None] / d[None, :]
    assert np.allclose(psd_project(P), P, atol=1e-12)
    assert np.array_equal(psd_project(np.eye(3)), np.eye(3))
    bad = np.array([[1.0, 1.01], [1.01, 1.0]])
    fixed = psd_project(bad)
    assert np.linalg.eigvalsh(fixed).min() >= -1e-10
    assert np.allclose(np.diag(fixed), 1.0)
    assert np.allclose(fixed, np.ones((2, 2)), atol=1e-12)


def test_correlation_matrix_dispatch():
    g = ArrayGeometry("ULA", 2, 3, 0.5)
    assert np.array_equal(correlation_matrix(g, "uncorrelated"), np.eye(6))
    assert np.array_equal(correlation_matrix(g, "jakes"), jakes_ula(g))
    with pytest.raises(DomainError):
        correlation_matrix(g, "bogus")


def test_port_positions_shapes():
    for kind in ["ULA", "UPA", "UCA"]:
        assert port_positions(ArrayGeometry(kind, 3, 4, 0.5)).shape == (12, 2)
