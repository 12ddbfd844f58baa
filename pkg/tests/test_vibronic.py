import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumiphon import units
from lumiphon.errors import (
    AliasedGrid,
    GridTooNarrow,
    ImaginaryModePresent,
    NegativeFrequency,
)
from lumiphon.fcoracle import broadened_oracle_spectrum, enumerate_fc
from lumiphon.model import (
    CrystalStructure,
    ForceDelta,
    GeometryPair,
    Hessian,
    LineshapeConfig,
    PhononBasis,
)
from lumiphon.phonons import apply_asr, diagonalize, symmetrize
from lumiphon.vibronic import (
    effective_mode_report,
    generating_function,
    lineshape,
    make_time_grid,
    partial_hr,
    qk_from_displacement,
    qk_from_forces,
    spectral_density,
)

from helpers import extract_peak_weights, lorentzian_ev, poisson_weight, random_cluster_structure


def _single_mode_hr(s, omega_mev, mass=12.0):
    q = math.sqrt(2.0 * units.HBAR_AMU_A2_FS * s / units.omega_radfs(omega_mev))
    return partial_hr(np.array([q]), np.array([omega_mev]))


def _single_mode_lineshape(s, omega_mev, zpl_ev, gamma_mev, sigma_mev, window_ev, step_mev=0.1):
    hr = _single_mode_hr(s, omega_mev)
    sd = spectral_density(hr, sigma_mev)
    reach = max(zpl_ev * 1000 - window_ev[0] * 1000, window_ev[1] * 1000 - zpl_ev * 1000)
    tgrid = make_time_grid(omega_mev, hr.total, gamma_mev, reach)
    gf = generating_function(sd, tgrid)
    config = LineshapeConfig(
        zpl_ev=zpl_ev,
        gamma_mev=gamma_mev,
        sigma_mev=sigma_mev,
        window_ev=window_ev,
        step_mev=step_mev,
        omega_cubed=False,
    )
    return hr, lineshape(gf, config)


# --------------------------------------------------------------- q_k routes

def test_qk_zero_displacement(diatomic):
    structure, hessian = diatomic
    basis = diagonalize(hessian, structure)
    pair = GeometryPair(structure.positions, structure.positions)
    qk = qk_from_displacement(basis, pair, structure.masses)
    assert np.array_equal(qk, np.zeros(6))


def test_qk_recovers_single_mode(diatomic):
    # displacement along the plain-coordinate image of one mode projects
    # onto exactly that mode for a single-species system
    structure, hessian = diatomic
    basis = diagonalize(hessian, structure)
    c = 0.013
    j = 5
    disp = c * basis.vectors[j].reshape(-1, 3)
    pair = GeometryPair(structure.positions, structure.positions + disp)
    qk = qk_from_displacement(basis, pair, structure.masses)
    expected = np.zeros(6)
    expected[j] = math.sqrt(12.011) * c
    np.testing.assert_allclose(qk, expected, rtol=1e-10, atol=1e-14)


@settings(deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_qk_parseval_identity(seed):
    # completeness: sum q_k^2 equals the mass-weighted displacement norm
    rng = np.random.default_rng(seed)
    structure, hessian = random_cluster_structure(5, seed=2)
    basis = diagonalize(symmetrize(hessian), structure)
    delta = rng.normal(scale=0.02, size=(5, 3))
    pair = GeometryPair(structure.positions, structure.positions + delta)
    qk = qk_from_displacement(basis, pair, structure.masses)
    lhs = float(np.sum(qk * qk))
    rhs = float(np.sum(structure.mass_vector_3n() * delta.reshape(-1) ** 2))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_force_route_matches_displacement_route():
    structure, hessian = random_cluster_structure(6, seed=21)
    hessian = symmetrize(hessian)
    hessian, _ = apply_asr(hessian, structure.masses)
    basis = diagonalize(hessian, structure)
    rng = np.random.default_rng(4)
    delta = rng.normal(scale=0.01, size=(6, 3))
    pair = GeometryPair(structure.positions, structure.positions + delta)
    force = ForceDelta(hessian.matrix @ delta.reshape(-1))
    qd = qk_from_displacement(basis, pair, structure.masses)
    qf = qk_from_forces(basis, force, structure.masses)
    live = basis.omegas_mev > 0.01
    np.testing.assert_allclose(qf[live], qd[live], rtol=1e-8)


def test_force_route_zero_forces(diatomic):
    structure, hessian = diatomic
    basis = diagonalize(hessian, structure)
    qk = qk_from_forces(basis, ForceDelta(np.zeros(6)), structure.masses)
    assert np.array_equal(qk, np.zeros(6))


def test_force_route_1d_oscillator():
    # hand algebra: k = m omega^2, dF = k dx -> q = sqrt(m) dx
    mass, omega_mev, dx = 12.0, 100.0, 0.04
    lam = units.eigenvalue_from_hbar_omega(omega_mev)  # eV/(amu A^2)
    k = mass * lam
    structure = CrystalStructure(np.eye(3) * 8, ("C",), [mass], [[0, 0, 0]])
    basis = diagonalize(Hessian(np.eye(3) * k), structure)
    force = ForceDelta(np.array([k * dx, 0.0, 0.0]))
    qk = qk_from_forces(basis, force, structure.masses)
    # the x-polarized mode is degenerate with y,z; compare the projection norm
    assert np.linalg.norm(qk) == pytest.approx(math.sqrt(mass) * dx, rel=1e-10)


def test_force_on_rigid_translations_warns(diatomic):
    import warnings as _warnings

    from lumiphon.errors import ZeroFrequencyModeWarning

    structure, hessian = diatomic
    clean, _ = apply_asr(hessian, structure.masses)
    basis = diagonalize(clean, structure)
    # a net force pushes on the translation modes, which cannot carry a
    # finite displacement; they are dropped with a warning
    net = np.tile([0.3, 0.0, 0.0], 2)
    with pytest.warns(ZeroFrequencyModeWarning):
        qk = qk_from_forces(basis, ForceDelta(net), structure.masses)
    dead = basis.omegas_mev <= 0.01
    assert np.all(qk[dead] == 0.0)
    # a force with no rigid component stays silent
    delta = np.random.default_rng(0).normal(scale=0.01, size=6)
    clean_force = clean.matrix @ delta
    with _warnings.catch_warnings():
        _warnings.simplefilter("error", ZeroFrequencyModeWarning)
        qk_from_forces(basis, ForceDelta(clean_force), structure.masses)


def test_imaginary_modes_rejected(diatomic):
    structure, hessian = diatomic
    unstable = diagonalize(Hessian(-hessian.matrix), structure)
    pair = GeometryPair(structure.positions, structure.positions)
    with pytest.raises(ImaginaryModePresent):
        qk_from_displacement(unstable, pair, structure.masses)
    with pytest.raises(ImaginaryModePresent):
        qk_from_forces(unstable, ForceDelta(np.zeros(6)), structure.masses)


# --------------------------------------------------------------- partial HR

def test_partial_hr_zero_q():
    hr = partial_hr(np.zeros(3), np.array([10.0, 20.0, 30.0]))
    assert hr.total == 0.0


def test_partial_hr_unit_s():
    # dx = sqrt(2 hbar / omega) / sqrt(m) makes S exactly 1
    mass, omega_mev = 12.0, 100.0
    w = units.omega_radfs(omega_mev)
    dx = math.sqrt(2.0 * units.HBAR_AMU_A2_FS / w) / math.sqrt(mass)
    hr = partial_hr(np.array([math.sqrt(mass) * dx]), np.array([omega_mev]))
    assert hr.total == pytest.approx(1.0, rel=1e-12)


def test_partial_hr_quadratic_scaling():
    w = np.array([100.0])
    s1 = partial_hr(np.array([0.2]), w).total
    s2 = partial_hr(np.array([0.4]), w).total
    assert s2 == pytest.approx(4.0 * s1, rel=1e-12)


def test_partial_hr_negative_frequency():
    with pytest.raises(NegativeFrequency):
        partial_hr(np.array([0.1]), np.array([-5.0]))


# ---------------------------------------------------------- spectral density

def test_spectral_density_integral_single_mode():
    sd = spectral_density(_single_mode_hr(2.0, 150.0), sigma_mev=2.0)
    assert float(np.trapezoid(sd.values, sd.grid_mev)) == pytest.approx(2.0, abs=2e-6)


def test_spectral_density_linearity():
    hr = partial_hr(np.array([0.02, 0.03]), np.array([80.0, 160.0]))
    sd = spectral_density(hr, sigma_mev=2.0)
    assert float(np.trapezoid(sd.values, sd.grid_mev)) == pytest.approx(
        hr.total, rel=1e-6
    )


def test_spectral_density_peak_value():
    # resolved-sigma limit: the peak reaches S / (sigma sqrt(2 pi))
    sigma = 2.0
    sd = spectral_density(_single_mode_hr(2.0, 150.0), sigma)
    peak = float(sd.values.max())
    assert peak == pytest.approx(2.0 / (sigma * math.sqrt(2 * math.pi)), rel=1e-9)


def test_spectral_density_grid_too_narrow():
    hr = _single_mode_hr(1.0, 150.0)
    with pytest.raises(GridTooNarrow):
        spectral_density(hr, 2.0, grid_mev=np.arange(140.0, 160.0, 0.4))


# ------------------------------------------------------- generating function

def test_generating_function_no_coupling():
    hr = partial_hr(np.zeros(2), np.array([50.0, 150.0]))
    sd = spectral_density(hr, 2.0)
    t = (np.arange(64) - 32) * 1.0
    gf = generating_function(sd, t)
    assert np.array_equal(gf.values, np.ones(64, dtype=complex))


def test_generating_function_single_mode_closed_form():
    s, omega = 1.3, 150.0
    sigma = 0.005  # essentially a stick on the 150 fs window below
    hr = _single_mode_hr(s, omega)
    sd = spectral_density(hr, sigma)
    t = (np.arange(301) - 150) * 1.0
    gf = generating_function(sd, t)
    exact = np.exp(s * (np.exp(-1j * units.omega_radfs(omega) * t) - 1.0))
    assert np.max(np.abs(gf.values - exact)) < 1e-6


def test_generating_function_time_reversal():
    hr = partial_hr(np.array([0.05, 0.02]), np.array([60.0, 140.0]))
    sd = spectral_density(hr, 2.0)
    t = (np.arange(257) - 128) * 0.5
    gf = generating_function(sd, t)
    np.testing.assert_allclose(
        gf.values[::-1], np.conj(gf.values), rtol=0, atol=1e-14
    )


def test_generating_function_aliased_grid():
    sd = spectral_density(_single_mode_hr(1.0, 150.0), 2.0)
    coarse = (np.arange(64) - 32) * 20.0
    with pytest.raises(AliasedGrid):
        generating_function(sd, coarse)


# ---------------------------------------------------------------- lineshape

def test_lineshape_no_coupling_is_lorentzian():
    hr = partial_hr(np.zeros(1), np.array([100.0]))
    sd = spectral_density(hr, 2.0)
    zpl, gamma = 2.0, 1.0
    tgrid = make_time_grid(0.0, 0.0, gamma, reach_mev=600.0)
    gf = generating_function(sd, tgrid)
    config = LineshapeConfig(
        zpl_ev=zpl,
        gamma_mev=gamma,
        window_ev=(zpl - 0.5, zpl + 0.1),
        step_mev=0.1,
        omega_cubed=False,
    )
    ls = lineshape(gf, config)
    ref = lorentzian_ev(ls.energy_ev, zpl, gamma)
    ref /= np.trapezoid(ref, ls.energy_ev)
    l1 = float(np.trapezoid(np.abs(ls.intensity - ref), ls.energy_ev))
    assert l1 < 1e-5
    # full width at half maximum is 2 gamma
    half = ls.intensity.max() / 2.0
    above = ls.energy_ev[ls.intensity >= half]
    assert (above[-1] - above[0]) * 1000.0 == pytest.approx(2.0 * gamma, abs=0.25)


def test_lineshape_poisson_ladder_small():
    s, omega, zpl, gamma, sigma = 1.1, 150.0, 2.0, 1.0, 0.1
    hr, ls = _single_mode_lineshape(
        s, omega, zpl, gamma, sigma, window_ev=(zpl - 2.0, zpl + 0.08)
    )
    weights = extract_peak_weights(
        ls.energy_ev, ls.intensity, zpl, omega, gamma, sigma, nmax=10
    )
    for n in range(5):
        assert weights[n] == pytest.approx(poisson_weight(s, n), abs=1e-4)


def test_lineshape_zpl_weight_reference():
    # ZPL carries e^{-S}; for S = 2 that is 0.13534
    s, omega, zpl, gamma, sigma = 2.0, 150.0, 2.0, 1.0, 0.1
    hr, ls = _single_mode_lineshape(
        s, omega, zpl, gamma, sigma, window_ev=(zpl - 2.4, zpl + 0.08)
    )
    weights = extract_peak_weights(
        ls.energy_ev, ls.intensity, zpl, omega, gamma, sigma, nmax=12
    )
    assert weights[0] == pytest.approx(0.13534, abs=1e-4)


def test_lineshape_support_is_red_shifted():
    s, omega, zpl, gamma, sigma = 1.0, 150.0, 2.0, 1.0, 2.0
    hr, ls = _single_mode_lineshape(
        s, omega, zpl, gamma, sigma, window_ev=(zpl - 1.5, zpl + 0.1)
    )
    # only Lorentzian tails reach past the ZPL: one-sided mass beyond a
    # distance d is at most (1/pi) * gamma/d of the total
    d_mev = 20.0
    above = ls.energy_ev > zpl + d_mev / 1000.0
    tail = float(np.trapezoid(ls.intensity[above], ls.energy_ev[above]))
    assert tail < 2.0 * (gamma / d_mev) / math.pi
    assert tail < 0.02


def test_lineshape_prefactor_independence():
    s, omega, zpl = 0.8, 120.0, 1.9
    hr = _single_mode_hr(s, omega)
    sd = spectral_density(hr, 2.0)
    tgrid = make_time_grid(omega, s, 1.0, reach_mev=1200.0)
    gf = generating_function(sd, tgrid)
    base = dict(
        zpl_ev=zpl, gamma_mev=1.0, sigma_mev=2.0, window_ev=(zpl - 1.0, zpl + 0.06)
    )
    a = lineshape(gf, LineshapeConfig(**base))
    b = lineshape(
        gf,
        LineshapeConfig(**base, refractive_index=2.65, dipole_magnitude=7.0),
    )
    assert np.array_equal(a.intensity, b.intensity)
    assert a.norm_constant != b.norm_constant


def test_lineshape_window_excluding_support():
    hr = partial_hr(np.zeros(1), np.array([100.0]))
    sd = spectral_density(hr, 2.0)
    tgrid = make_time_grid(0.0, 0.0, 1.0, reach_mev=3000.0)
    gf = generating_function(sd, tgrid)
    config = LineshapeConfig(
        zpl_ev=2.0, gamma_mev=1.0, window_ev=(0.2, 0.5), step_mev=0.5
    )
    with pytest.raises(GridTooNarrow):
        lineshape(gf, config)


def test_lineshape_time_span_floor():
    sd = spectral_density(_single_mode_hr(0.5, 100.0), 2.0)
    t = (np.arange(4096) - 2048) * 0.5  # ~1 ps: far below 10 hbar/gamma
    gf = generating_function(sd, t)
    with pytest.raises(AliasedGrid):
        lineshape(gf, LineshapeConfig(zpl_ev=2.0, gamma_mev=1.0))


def test_degenerate_mode_mixing_invariance():
    # rotating a degenerate pair must leave total S and the spectrum alone
    structure = CrystalStructure(np.eye(3) * 8, ("C",), [12.0], [[0, 0, 0]])
    basis = diagonalize(Hessian(np.eye(3) * 5.0), structure)
    delta = np.array([[0.02, -0.013, 0.007]])
    pair = GeometryPair(structure.positions, structure.positions + delta)

    theta = 0.37
    rot = np.eye(3)
    rot[:2, :2] = [
        [math.cos(theta), -math.sin(theta)],
        [math.sin(theta), math.cos(theta)],
    ]
    mixed = PhononBasis(basis.omegas_mev, rot @ basis.vectors, basis.cutoff_bulk_mev)

    out = []
    for b in (basis, mixed):
        qk = qk_from_displacement(b, pair, structure.masses)
        hr = partial_hr(qk, b.omegas_mev)
        sd = spectral_density(hr, 2.0)
        tgrid = make_time_grid(150.0, hr.total, 1.0, reach_mev=800.0)
        gf = generating_function(sd, tgrid)
        ls = lineshape(
            gf,
            LineshapeConfig(
                zpl_ev=2.0, gamma_mev=1.0, window_ev=(1.4, 2.05), step_mev=0.2
            ),
        )
        out.append((hr.total, ls.intensity))
    assert out[0][0] == pytest.approx(out[1][0], rel=1e-12)
    assert np.max(np.abs(out[0][1] - out[1][1])) < 1e-8 * np.max(out[0][1])


# ----------------------------------------------------------- peak labelling

def test_effective_mode_report_single_mode():
    s, omega, zpl, gamma, sigma = 0.6, 150.0, 2.0, 1.0, 2.0
    hr, ls = _single_mode_lineshape(
        s, omega, zpl, gamma, sigma, window_ev=(zpl - 1.2, zpl + 0.08)
    )
    labels = effective_mode_report(hr, ls)
    assert labels and labels[0].mode_index == 0
    assert labels[0].offset_mev == pytest.approx(omega, abs=1.0)


def test_effective_mode_report_ordering_and_floor():
    omegas = np.array([52.0, 78.0, 115.0, 139.0, 176.0])
    sks = np.array([0.5, 0.35, 6e-5, 0.22, 0.12])
    w_radfs = units.omega_radfs(omegas)
    qk = np.sqrt(2.0 * units.HBAR_AMU_A2_FS * sks / w_radfs)
    hr = partial_hr(qk, omegas)
    zpl, gamma, sigma = 2.2, 1.0, 0.5
    sd = spectral_density(hr, sigma)
    tgrid = make_time_grid(176.0, hr.total, gamma, reach_mev=1600.0)
    gf = generating_function(sd, tgrid)
    ls = lineshape(
        gf,
        LineshapeConfig(
            zpl_ev=zpl,
            gamma_mev=gamma,
            sigma_mev=sigma,
            window_ev=(zpl - 1.4, zpl + 0.05),
            step_mev=0.05,
            omega_cubed=False,
        ),
    )
    labels = effective_mode_report(hr, ls)
    assert [p.mode_index for p in labels] == [0, 1, 3, 4]  # S_k floor drops mode 2
    assert labels[0].sk >= labels[-1].sk
    for p in labels:
        assert p.offset_mev == pytest.approx(hr.omegas_mev[p.mode_index], abs=1.5)

    # oracle cross-check: every labelled offset is a maximum of the
    # independently broadened ladder as well
    ladder = enumerate_fc(hr, cap=12)
    grid = ls.energy_ev
    oracle = broadened_oracle_spectrum(ladder, gamma, grid, zpl, sigma)
    y = oracle.intensity
    peak_idx = np.nonzero((y[1:-1] >= y[2:]) & (y[1:-1] > y[:-2]))[0] + 1
    peak_offsets = (zpl - grid[peak_idx]) * 1000.0
    for p in labels:
        assert np.min(np.abs(peak_offsets - p.offset_mev)) < 1.0

    lvm_only = effective_mode_report(hr, ls, lvm_indices=[2, 3, 4])
    assert [p.mode_index for p in lvm_only] == [3, 4]
