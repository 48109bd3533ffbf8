import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from romforge.dynsys import (
    REFERENCE_BEAM,
    MaterialGeometry,
    PolySystem,
    eigen_analysis,
    eval_internal_force,
    eval_jacobian,
    load_system,
    make_duffing,
    make_vk_beam,
    save_system,
    system_from_dict,
    system_to_dict,
)
from romforge.errors import ContractError


def beam_force_by_virtual_work(n_elem, mg, u):
    """Independent evaluation of the clamped-clamped von Karman beam internal force.

    Works from the strain ``eps = u' + w'^2 / 2`` and curvature ``w''`` at Gauss
    points: ``f = sum_e int EA eps d(eps)/dq + EI w'' d(w'')/dq dx``.
    """
    le = mg.length / n_elem
    EA = mg.young_modulus * mg.width * mg.thickness
    EI = mg.young_modulus * mg.width * mg.thickness**3 / 12
    full = np.zeros(3 * (n_elem + 1))
    full[3:-3] = u
    out = np.zeros_like(full)
    xg, wg = np.polynomial.legendre.leggauss(6)
    for e in range(n_elem):
        q = full[3 * e : 3 * e + 6]
        u1, w1, r1, u2, w2, r2 = q
        t1, t2 = r1 / le, r2 / le  # physical slopes
        for xi, wq in zip(xg, wg):
            s = 0.5 * (xi + 1)
            du = np.array([-1, 0, 0, 1, 0, 0]) / le
            # Hermite cubic derivatives in physical dofs (w1, t1, w2, t2)
            dH = np.array([-6 * s + 6 * s**2, le * (1 - 4 * s + 3 * s**2),
                           6 * s - 6 * s**2, le * (-2 * s + 3 * s**2)]) / le
            ddH = np.array([-6 + 12 * s, le * (-4 + 6 * s), 6 - 12 * s, le * (-2 + 6 * s)]) / le**2
            wq_phys = np.array([w1, t1, w2, t2])
            wp = dH @ wq_phys
            wpp = ddH @ wq_phys
            eps = (u2 - u1) / le + 0.5 * wp**2
            # derivatives with respect to (u1, w1, r1, u2, w2, r2); d t / d r = 1 / le
            chain = np.array([1.0, 1.0 / le, 1.0, 1.0 / le])
            d_wp = np.zeros(6)
            d_wpp = np.zeros(6)
            d_wp[[1, 2, 4, 5]] = dH * chain
            d_wpp[[1, 2, 4, 5]] = ddH * chain
            d_eps = du + wp * d_wp
            out[3 * e : 3 * e + 6] += 0.5 * le * wq * (EA * eps * d_eps + EI * wpp * d_wpp)
    return out[3:-3]


# -- PolySystem --------------------------------------------------------------------------


def test_zero_state_gives_zero_force(small_beam):
    f = eval_internal_force(small_beam, np.zeros(small_beam.n_dof))
    assert np.array_equal(f, np.zeros(small_beam.n_dof))


def test_zero_state_jacobian_is_stiffness(small_beam):
    assert np.array_equal(eval_jacobian(small_beam, np.zeros(small_beam.n_dof)), small_beam.K)


def test_duffing_force_and_jacobian_hand_values():
    d = make_duffing(1.0, 0.05, 0.5, 1.0)
    assert eval_internal_force(d, [2.0])[0] == pytest.approx(6.0, abs=1e-15)
    assert eval_jacobian(d, [2.0])[0, 0] == pytest.approx(7.0, abs=1e-15)
    assert eval_internal_force(d, [1.0])[0] == pytest.approx(1.5, abs=1e-15)


def test_duffing_construction_fields():
    d = make_duffing(2.0, 0.1, 0.3, 0.5, 2.0)
    assert d.M[0, 0] == 1.0
    assert d.C[0, 0] == pytest.approx(2 * 0.5 * 0.1 * 2.0)
    assert d.K[0, 0] == pytest.approx(4.0)
    assert d.G_val.size == 0
    assert d.H_entries() == [(0, 0, 0, 0, pytest.approx(0.15))]
    assert d.forcing[0] == pytest.approx(1.0)


def test_duffing_degenerate_parameters():
    assert make_duffing(k3=0.0).is_linear
    assert make_duffing(xi=0.0).C[0, 0] == 0.0
    with pytest.raises(ContractError):
        make_duffing(omega0=0.0)
    with pytest.raises(ContractError):
        make_duffing(xi=-0.1)


def test_dimension_mismatch_raises(small_beam):
    with pytest.raises(ContractError):
        eval_internal_force(small_beam, np.zeros(3))
    with pytest.raises(ContractError):
        eval_jacobian(small_beam, np.zeros(small_beam.n_dof + 1))


def test_mass_must_be_spd():
    with pytest.raises(ContractError):
        PolySystem([[1.0, 2.0], [0.0, 1.0]], np.zeros((2, 2)), np.eye(2))
    with pytest.raises(ContractError):
        PolySystem([[-1.0]], [[0.0]], [[1.0]])


def test_canonical_storage_symmetrises_and_merges():
    M = np.eye(3)
    raw_G = [(0, 2, 1, 1.0), (0, 1, 2, 2.0), (1, 0, 0, 0.5)]
    raw_H = [(2, 1, 0, 1, 1.0), (2, 0, 1, 1, 1.0)]
    s = PolySystem(M, 0 * M, M, raw_G, raw_H)
    assert s.G_entries() == [(0, 1, 2, 3.0), (1, 0, 0, 0.5)]
    assert s.H_entries() == [(2, 0, 1, 1, 2.0)]
    again = PolySystem(M, 0 * M, M, raw_G, raw_H)
    assert np.array_equal(s.G_idx, again.G_idx) and np.array_equal(s.H_val, again.H_val)
    u = np.array([0.3, -1.2, 0.7])
    expect = u.copy()
    expect[0] += 3.0 * u[1] * u[2]
    expect[1] += 0.5 * u[0] ** 2
    expect[2] += 2.0 * u[0] * u[1] ** 2
    assert np.allclose(s.internal_force(u), expect, rtol=1e-14)


def test_system_arrays_are_read_only(small_beam):
    with pytest.raises(ValueError):
        small_beam.K[0, 0] = 1.0


@pytest.mark.parametrize("n_elem", [8, 12])
def test_beam_force_matches_virtual_work_oracle(n_elem, rng):
    b = make_vk_beam(n_elem)
    for _ in range(3):
        u = rng.normal(size=b.n_dof) * 2e-6
        ref = beam_force_by_virtual_work(n_elem, REFERENCE_BEAM, u)
        got = eval_internal_force(b, u)
        assert np.linalg.norm(got - ref) <= 1e-12 * np.linalg.norm(ref)


def test_jacobian_matches_finite_differences_beam(small_beam, rng):
    for _ in range(5):
        u = rng.normal(size=small_beam.n_dof) * 3e-6
        J = eval_jacobian(small_beam, u)
        h = 1e-6 * (1 + np.abs(u)) * 1e-6  # displacement scale is micrometres
        fd = np.empty_like(J)
        for k in range(small_beam.n_dof):
            e = np.zeros_like(u)
            e[k] = h[k]
            fd[:, k] = (eval_internal_force(small_beam, u + e)
                        - eval_internal_force(small_beam, u - e)) / (2 * h[k])
        assert np.linalg.norm(J - fd) <= 1e-6 * np.linalg.norm(J)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=1),
       st.floats(0.1, 3), st.floats(0, 0.3), st.floats(-2, 2))
def test_jacobian_matches_finite_differences_duffing(u, w0, xi, k3):
    d = make_duffing(w0, xi, k3)
    u = np.array(u)
    h = 1e-6 * (1 + abs(u[0]))
    fd = (eval_internal_force(d, u + h) - eval_internal_force(d, u - h)) / (2 * h)
    J = eval_jacobian(d, u)[0, 0]
    assert abs(J - fd[0]) <= 1e-6 * max(abs(J), 1.0)


def test_strain_energy_variational_identity(small_beam, rng):
    for _ in range(5):
        u = rng.normal(size=small_beam.n_dof) * 2e-6
        a = 1e-4
        dE = (small_beam.strain_energy((1 + a) * u) - small_beam.strain_energy((1 - a) * u)) / (2 * a)
        target = u @ eval_internal_force(small_beam, u)
        # the central difference of a quartic in alpha has an O(a^2) error only
        assert dE == pytest.approx(target, rel=1e-7)


def test_strain_energy_exact_alpha_derivative(small_beam, rng):
    u = rng.normal(size=small_beam.n_dof) * 2e-6
    # E(alpha u) = c2 a^2 + c3 a^3 + c4 a^4; fit the polynomial exactly from 4 samples
    alphas = np.array([0.5, 1.0, 1.5, 2.0])
    E = np.array([small_beam.strain_energy(a * u) for a in alphas])
    coeffs = np.linalg.solve(np.vander(alphas, 5)[:, :4], E)  # a^4, a^3, a^2, a^1
    deriv = 4 * coeffs[0] + 3 * coeffs[1] + 2 * coeffs[2] + coeffs[3]
    target = u @ eval_internal_force(small_beam, u)
    assert deriv == pytest.approx(target, rel=1e-10)


# -- beam construction ---------------------------------------------------------------------


def test_beam_first_frequency_matches_reference(beam):
    f1 = eigen_analysis(beam, 1)[0][0]
    assert abs(f1 / 87.141e3 - 1) < 0.01
    assert beam.meta["reference_frequency_hz"] == pytest.approx(f1)


def test_beam_frequency_scales_with_thickness():
    from dataclasses import replace

    f1 = eigen_analysis(make_vk_beam(32), 1)[0][0]
    thick = replace(REFERENCE_BEAM, thickness=2 * REFERENCE_BEAM.thickness)
    f2 = eigen_analysis(make_vk_beam(32, thick), 1)[0][0]
    assert f2 / f1 == pytest.approx(2.0, rel=0.01)


def test_beam_frequency_against_euler_bernoulli():
    mg = REFERENCE_BEAM
    f = eigen_analysis(make_vk_beam(32), 1)[0][0]
    beta_L = 4.730040744862704
    EI = mg.young_modulus * mg.inertia
    exact = beta_L**2 / (2 * np.pi * mg.length**2) * np.sqrt(EI / (mg.density * mg.area))
    assert f == pytest.approx(exact, rel=1e-4)


def test_beam_damping_and_forcing(beam):
    w = beam.meta["omega_ref"]
    assert np.allclose(beam.C, (w / 50.0) * beam.M, rtol=1e-14, atol=0)
    phi = eigen_analysis(beam, 1)[0][1]
    phi = phi if phi[beam.meta["monitor_dof"]] > 0 else -phi
    assert np.allclose(beam.forcing, beam.M @ phi, atol=1e-12 * np.abs(beam.forcing).max())
    assert beam.forcing[beam.meta["monitor_dof"]] > 0


def test_beam_modes_orthonormal_and_alternate_parity(small_beam):
    modes = eigen_analysis(make_vk_beam(16), 4)
    b = make_vk_beam(16)
    Phi = np.column_stack([m for _, m in modes])
    assert np.allclose(Phi.T @ b.M @ Phi, np.eye(4), atol=1e-10)
    # transverse entries of interior nodes, mirrored about midspan
    w_idx = np.arange(1, b.n_dof, 3)
    parities = []
    for _, m in modes:
        w = m[w_idx]
        parities.append(np.sign(w @ w[::-1]))
    assert parities == [1, -1, 1, -1]


def test_beam_rejects_coarse_mesh():
    with pytest.raises(ContractError):
        make_vk_beam(4)


def test_material_geometry_validation():
    with pytest.raises(ContractError):
        MaterialGeometry(1, 1, 1, 1, 1, 0.6, 1)
    with pytest.raises(ContractError):
        MaterialGeometry(1, -1, 1, 1, 1, 0.2, 1)


def test_linear_beam_response_scales_with_beta(small_beam):
    from romforge.hb import hb_solve

    lin = small_beam.linear_part()
    w = small_beam.meta["omega_ref"]
    mon = small_beam.meta["monitor_dof"]
    a1 = hb_solve(lin, w, 0.25).harmonic_amplitude(1, mon)
    a2 = hb_solve(lin, w, 0.75).harmonic_amplitude(1, mon)
    assert a2 / a1 == pytest.approx(3.0, rel=1e-12)


# -- serialisation --------------------------------------------------------------------------


def test_system_json_round_trip(small_beam, tmp_path, rng):
    p = tmp_path / "sys.json"
    save_system(p, small_beam)
    back = load_system(p)
    u = rng.normal(size=small_beam.n_dof) * 1e-6
    assert np.array_equal(back.internal_force(u), small_beam.internal_force(u))
    assert np.array_equal(back.M, small_beam.M) and np.array_equal(back.forcing, small_beam.forcing)
    doc = json.loads(p.read_text())
    assert doc["n_dof"] == small_beam.n_dof and len(doc["M"]) == small_beam.n_dof**2
    assert system_to_dict(system_from_dict(doc)) == doc
