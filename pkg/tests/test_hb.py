import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from romforge import hb
from romforge.dynsys import make_duffing
from romforge.errors import ContractError, NonConvergence, PhaseUndefined
from romforge.hb import (
    ContinuationConfig,
    FourierOrbit,
    HBProblem,
    aft_samples,
    continue_frf,
    energy_balance,
    extract_phase,
    fourier_fit,
    hb_residual,
    hb_solve,
    hb_solve_phase,
    load_orbits,
    orbit_amplitude,
    phase_sweep,
    sample_orbit,
    save_orbits,
    time_march,
)


def linear_amplitude(beta, omega, omega0=1.0, xi=0.05):
    return beta / np.hypot(omega0**2 - omega**2, 2 * xi * omega0 * omega)


# -- Fourier utilities ---------------------------------------------------------------------


def test_aft_sample_count():
    assert aft_samples(7) == 56
    assert aft_samples(1) == 32


@settings(max_examples=50, deadline=None)
@given(arrays(float, (3, 11), elements=st.floats(-10, 10)), st.integers(12, 40))
def test_sample_then_fit_recovers_coefficients(coeffs, N_t):
    orbit = FourierOrbit(1.3, coeffs)
    back = fourier_fit(sample_orbit(orbit, N_t), orbit.H)
    assert np.allclose(back, coeffs, atol=1e-12 * (1 + np.abs(coeffs).max()))


def test_sample_orbit_values():
    c = np.zeros((1, 5))
    c[0, 0], c[0, 1], c[0, 3] = 0.5, 2.0, -1.0  # 0.5 + 2 cos t - sin t
    tau = 2 * np.pi * np.arange(16) / 16
    assert np.allclose(sample_orbit(FourierOrbit(1.0, c), 16)[0], 0.5 + 2 * np.cos(tau) - np.sin(tau),
                       atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 10), st.floats(0, np.pi))
def test_extract_phase_inverts_lagged_cosine(A, phi):
    c = np.zeros((1, 3))
    c[0, 1], c[0, 2] = A * np.cos(phi), A * np.sin(phi)
    got = extract_phase(FourierOrbit(1.0, c))
    assert 0 <= got <= np.pi
    assert got == pytest.approx(phi, abs=1e-12)


def test_extract_phase_conventions():
    orb = FourierOrbit(1.0, [[0.0, 1.0, 0.0]])
    assert extract_phase(orb) == 0.0
    assert extract_phase(FourierOrbit(1.0, [[0.0, 0.0, 1.0]])) == pytest.approx(np.pi / 2)
    # a lag in (-pi, 0) is folded onto the equivalent lag in (0, pi)
    assert extract_phase(FourierOrbit(1.0, [[0.0, -1.0, -1e-3]])) == pytest.approx(1e-3)
    with pytest.raises(PhaseUndefined):
        extract_phase(FourierOrbit(1.0, [[3.0, 0.0, 0.0]]))


def test_orbit_validation():
    with pytest.raises(ContractError):
        FourierOrbit(0.0, [[0, 1, 0]])
    with pytest.raises(ContractError):
        FourierOrbit(1.0, [[0, 1]])


def test_orbit_file_round_trip(tmp_path, rng):
    orbits = [FourierOrbit(w, rng.normal(size=(4, 15))) for w in (0.5, 1.0, 2.5)]
    save_orbits(tmp_path / "o.forb", orbits)
    back = load_orbits(tmp_path / "o.forb")
    assert [o.omega for o in back] == [0.5, 1.0, 2.5]
    assert all(np.array_equal(a.coeffs, b.coeffs) for a, b in zip(orbits, back))
    with pytest.raises(ContractError):
        save_orbits(tmp_path / "x.forb", [])


# -- fixed-frequency solves ------------------------------------------------------------------


@pytest.mark.parametrize("omega", [0.3, 0.95, 1.0, 1.04, 2.7])
def test_linear_hb_matches_closed_form(linear_oscillator, omega):
    orb = hb_solve(linear_oscillator, omega, 0.2)
    assert orb.harmonic_amplitude(1) == pytest.approx(linear_amplitude(0.2, omega), rel=1e-10)
    assert np.abs(orb.coeffs[:, [0, 2, 3, 4, 5, 6, 7, 9, 10, 11, 12, 13, 14]]).max() < 1e-15
    expected_phase = np.arctan2(2 * 0.05 * omega, 1 - omega**2)
    assert extract_phase(orb) == pytest.approx(expected_phase, abs=1e-12)


def test_zero_forcing_gives_trivial_orbit(duffing):
    orb = hb_solve(duffing, 1.1, 0.0)
    assert np.array_equal(orb.coeffs, np.zeros_like(orb.coeffs))


def test_residual_vanishes_at_solution(duffing):
    orb = hb_solve(duffing, 0.8, 0.2)
    r = hb_residual(duffing, orb, 0.2)
    assert np.linalg.norm(r) < 1e-10 * 0.2
    # a different beta is not a solution
    assert np.linalg.norm(hb_residual(duffing, orb, 0.3)) > 1e-3


def test_hb_agrees_with_time_integration(duffing):
    omega, beta = 0.8, 0.2
    orb = hb_solve(duffing, omega, beta)
    tm = time_march(duffing, omega, beta, n_cycles=60, steps_per_cycle=256, steady_tol=1e-10,
                    max_extra_cycles=200)
    for h in (1, 3):
        assert tm.harmonic_amplitude(h) == pytest.approx(orb.harmonic_amplitude(h), rel=2e-3)


def test_third_harmonic_scales_with_cubic_coefficient():
    small = hb_solve(make_duffing(k3=0.01), 0.6, 0.2).harmonic_amplitude(3)
    double = hb_solve(make_duffing(k3=0.02), 0.6, 0.2).harmonic_amplitude(3)
    assert double / small == pytest.approx(2.0, rel=1e-2)


def test_energy_balance_on_orbit(duffing):
    orb = hb_solve(duffing, 1.3, 0.2)
    work, diss = energy_balance(duffing, orb, 0.2)
    assert work > 0
    assert work == pytest.approx(diss, rel=1e-9)


def test_hb_jacobian_matches_finite_differences(small_beam, rng):
    prob = HBProblem(small_beam, 3)
    w = small_beam.meta["omega_ref"]
    x = rng.normal(size=prob.size) * 1e-6
    J = prob.jacobian(x, w)
    J = J.toarray() if hasattr(J, "toarray") else J
    v = rng.normal(size=prob.size) * 1e-6
    h = 1e-3
    fd = (prob.residual(x + h * v, w, 0.3) - prob.residual(x - h * v, w, 0.3)) / (2 * h)
    assert np.linalg.norm(J @ v - fd) <= 1e-7 * np.linalg.norm(fd)
    dw = 1e-6 * w
    fdw = (prob.residual(x, w + dw, 0.3) - prob.residual(x, w - dw, 0.3)) / (2 * dw)
    assert np.linalg.norm(prob.d_omega(x, w) - fdw) <= 1e-5 * np.linalg.norm(fdw)


def test_sparse_and_dense_assembly_agree(small_beam, monkeypatch, rng):
    dense = HBProblem(small_beam, 5)
    monkeypatch.setattr(hb, "DENSE_LIMIT", 0)
    sparse = HBProblem(small_beam, 5)
    assert dense.dense and not sparse.dense
    x = rng.normal(size=dense.size) * 1e-6
    w = small_beam.meta["omega_ref"]
    assert np.allclose(dense.jacobian(x, w), sparse.jacobian(x, w).toarray(), rtol=0,
                       atol=1e-12 * np.abs(dense.jacobian(x, w)).max())
    a = hb_solve(dense, w, 0.5, H=5)
    b = hb_solve(sparse, w, 0.5, H=5)
    assert np.allclose(a.coeffs, b.coeffs, rtol=1e-9, atol=1e-9 * np.abs(a.coeffs).max())


def test_nonconvergence_reports_iterations(duffing):
    with pytest.raises(NonConvergence) as info:
        hb_solve(duffing, 1.5, 5.0, max_iter=1)
    assert info.value.iterations == 1


# -- continuation and phase parameterisation ------------------------------------------------


@pytest.fixture(scope="module")
def duffing_frf(duffing):
    return continue_frf(duffing, 0.2, 0.5, 2.0)


def test_continuation_passes_through_folds(duffing, duffing_frf):
    w = np.array([o.omega for o in duffing_frf])
    assert w[0] == 0.5 and w[-1] == pytest.approx(2.0)
    dw = np.diff(w)
    turns = np.count_nonzero(np.diff(np.sign(dw[np.abs(dw) > 0])))
    assert turns == 2  # two saddle-node folds
    for o in duffing_frf[:: max(1, len(duffing_frf) // 25)]:
        assert np.linalg.norm(hb_residual(duffing, o, 0.2)) < 1e-8


def test_continuation_phase_is_monotone(duffing_frf):
    phi = np.array([extract_phase(o) for o in duffing_frf])
    assert np.all(np.diff(phi) > -1e-9)
    assert phi[0] < 0.2 and phi[-1] > 3.0


def test_continuation_zero_forcing(duffing):
    orbits = continue_frf(duffing, 0.0, 0.5, 2.0)
    assert all(np.all(o.coeffs == 0) for o in orbits)


def test_continuation_config_validation():
    with pytest.raises(ContractError):
        ContinuationConfig(initial_step=1.0, max_step=0.1)
    with pytest.raises(ContractError):
        continue_frf(make_duffing(), 0.2, 1.0, 1.0)


@pytest.mark.parametrize("phase", [0.3, 1.0, np.pi / 2, 2.0, 2.8])
def test_phase_solve_hits_requested_phase(duffing, phase):
    guess = hb_solve(duffing, 1.0, 0.2)
    orb = phase_sweep(duffing, 0.2, [phase], start=guess)[0]
    assert extract_phase(orb) == pytest.approx(phase, abs=1e-9)
    assert np.linalg.norm(hb_residual(duffing, orb, 0.2)) < 1e-9
    again = hb_solve_phase(duffing, phase, 0.2, orb)
    assert again.omega == pytest.approx(orb.omega, rel=1e-12)


def test_phase_sweep_matches_continuation(duffing, duffing_frf):
    phi = np.array([extract_phase(o) for o in duffing_frf])
    idx = np.searchsorted(phi, [0.5, 1.2, 1.8, 2.5])
    targets = phi[idx]
    orbits = phase_sweep(duffing, 0.2, targets[::-1])[::-1]
    for o, k in zip(orbits, idx):
        assert o.omega == pytest.approx(duffing_frf[k].omega, rel=1e-8)
        assert orbit_amplitude(o) == pytest.approx(orbit_amplitude(duffing_frf[k]), rel=1e-8)


def test_phase_sweep_preserves_order_and_rejects_bad_targets(duffing):
    orbs = phase_sweep(duffing, 0.2, [2.0, 0.5, 1.0])
    assert [round(extract_phase(o), 9) for o in orbs] == [2.0, 0.5, 1.0]
    assert orbs[1].omega < orbs[2].omega < orbs[0].omega
    assert phase_sweep(duffing, 0.2, []) == []
    with pytest.raises(ContractError):
        phase_sweep(duffing, 0.2, [0.0])
    with pytest.raises(ContractError):
        phase_sweep(duffing, 0.2, [np.pi])
