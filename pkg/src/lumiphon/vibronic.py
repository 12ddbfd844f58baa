"""Electron-phonon coupling and the emission lineshape.

The chain implemented here: project the excited-minus-ground geometry
change (or force change) onto the phonon modes to get per-mode
displacements q_k, form partial factors S_k = omega_k q_k^2 / (2 hbar),
smear them into a spectral density S(hw), Fourier it into S(t), build the
generating function G(t) = exp(S(t) - S(0)), and FFT the damped G into the
normalized emission lineshape anchored at the zero-phonon line.

Conventions: q_k in amu^1/2 * A against unit-norm mass-weighted mode
vectors; the force route divides the force change by sqrt(mass) and by the
mode eigenvalue, which reproduces the displacement route exactly on a
harmonic system.  Zero-temperature emission only: the excited state sits
in its vibrational ground state, so every phonon replica is red-shifted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.signal import czt

from . import units
from .errors import (
    AliasedGrid,
    DimensionMismatch,
    GridTooNarrow,
    ImaginaryModePresent,
    InputError,
    NegativeFrequency,
    NonPositiveGamma,
    NumericalError,
    ZeroFrequencyModeWarning,
)
from .model import (
    ForceDelta,
    GeneratingFunction,
    GeometryPair,
    HRDecomposition,
    Lineshape,
    LineshapeConfig,
    PhononBasis,
    SpectralDensity,
)
from .phonons import ZERO_MODE_MEV

#: Modes with S_k below this are left out of peak labelling.
LABEL_SK_FLOOR = 1e-4


def _masses_3n(masses, dim):
    m = np.asarray(masses, dtype=float)
    if m.size * 3 == dim:
        m = np.repeat(m, 3)
    if m.shape != (dim,):
        raise DimensionMismatch(f"got {np.asarray(masses).size} masses for 3N = {dim}")
    if np.any(m <= 0):
        raise InputError("masses must be positive")
    return m


def _reject_imaginary(basis: PhononBasis):
    bad = np.nonzero(basis.omegas_mev < -ZERO_MODE_MEV)[0]
    if bad.size:
        raise ImaginaryModePresent(
            f"basis has {bad.size} imaginary mode(s), first at index {int(bad[0])} "
            f"({basis.omegas_mev[bad[0]]:.3f} meV)"
        )


def qk_from_displacement(basis: PhononBasis, pair: GeometryPair, masses) -> np.ndarray:
    """Per-mode displacements q_k = sum sqrt(m) * dR . e_k, in amu^1/2 A."""
    _reject_imaginary(basis)
    m3 = _masses_3n(masses, basis.nmodes)
    if pair.natoms * 3 != basis.nmodes:
        raise DimensionMismatch(
            f"pair has {pair.natoms} atoms but basis expects {basis.natoms}"
        )
    weighted = np.sqrt(m3) * pair.delta.reshape(-1)
    return basis.vectors @ weighted


def qk_from_forces(basis: PhononBasis, force_delta: ForceDelta, masses) -> np.ndarray:
    """q_k from the force change at fixed geometry.

    q_k = (1/lambda_k) * sum (F_e - F_g) / sqrt(m) . e_k with lambda_k the
    mass-weighted Hessian eigenvalue, so a harmonic force change H*dR gives
    exactly the displacement-route q_k.  Rigid-translation modes cannot
    carry a finite displacement this way; they are excluded, with a warning
    if their projection is not negligible.
    """
    _reject_imaginary(basis)
    m3 = _masses_3n(masses, basis.nmodes)
    if force_delta.values.shape[0] != basis.nmodes:
        raise DimensionMismatch(
            f"force delta has {force_delta.natoms} atoms but basis expects {basis.natoms}"
        )
    proj = basis.vectors @ (force_delta.values / np.sqrt(m3))
    lam = units.eigenvalue_from_hbar_omega(basis.omegas_mev)
    qk = np.zeros_like(proj)
    live = basis.omegas_mev > ZERO_MODE_MEV
    qk[live] = proj[live] / lam[live]
    dead = ~live
    if np.any(dead) and np.max(np.abs(proj[dead])) > 1e-8 * max(
        1.0, float(np.max(np.abs(proj)))
    ):
        warnings.warn(
            f"{int(np.sum(dead))} near-zero mode(s) carried a force projection "
            "and were excluded",
            ZeroFrequencyModeWarning,
            stacklevel=2,
        )
    return qk


def partial_hr(qk, omegas_mev) -> HRDecomposition:
    """S_k = omega_k q_k^2 / (2 hbar), dimensionless, plus the total."""
    q = np.asarray(qk, dtype=float)
    w = np.asarray(omegas_mev, dtype=float)
    if q.shape != w.shape or q.ndim != 1:
        raise DimensionMismatch("qk and omegas must be matching 1-d arrays")
    if np.any(w < -ZERO_MODE_MEV):
        i = int(np.argwhere(w < -ZERO_MODE_MEV)[0][0])
        raise NegativeFrequency(f"omega[{i}] = {w[i]:.4f} meV is negative")
    w_clamped = np.clip(w, 0.0, None)
    sk = units.omega_radfs(w_clamped) * q * q / (2.0 * units.HBAR_AMU_A2_FS)
    order = np.argsort(w_clamped, kind="stable")
    sk_sorted = sk[order]
    return HRDecomposition(
        w_clamped[order], q[order], sk_sorted, math.fsum(sk_sorted.tolist())
    )


def _gaussian(x, mu, sigma):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))


def spectral_density(
    hr: HRDecomposition, sigma_mev: float, grid_mev: Optional[np.ndarray] = None
) -> SpectralDensity:
    """Smear the stick decomposition with Gaussians of width sigma.

    The grid (auto-built if omitted) must span every contributing mode by
    at least 6 sigma on each side so the integral reproduces the total.
    """
    if sigma_mev <= 0:
        raise InputError(f"sigma must be positive, got {sigma_mev}")
    live = hr.sk > 0.0
    omegas = hr.omegas_mev[live]
    sks = hr.sk[live]
    if omegas.size == 0:
        grid = np.arange(0.0, 12.0 * sigma_mev, sigma_mev / 5.0)
        return SpectralDensity(grid, np.zeros_like(grid), sigma_mev, 0.0)
    lo_req = float(omegas.min() - 6.0 * sigma_mev)
    hi_req = float(omegas.max() + 6.0 * sigma_mev)
    if grid_mev is None:
        step = sigma_mev / 5.0
        n = int(math.ceil((hi_req - lo_req) / step)) + 1
        grid = lo_req + step * np.arange(n)
    else:
        grid = np.asarray(grid_mev, dtype=float)
        if grid[0] > lo_req or grid[-1] < hi_req:
            raise GridTooNarrow(
                f"grid [{grid[0]}, {grid[-1]}] must span [{lo_req}, {hi_req}] meV"
            )
    vals = np.zeros_like(grid)
    for w0, s in zip(omegas, sks):
        vals += s * _gaussian(grid, w0, sigma_mev)
    return SpectralDensity(grid, vals, sigma_mev, float(math.fsum(sks.tolist())))


def make_time_grid(
    omega_max_mev: float,
    s_total: float,
    gamma_mev: float,
    reach_mev: float = 0.0,
    time_step_fs: Optional[float] = None,
    time_span_fs: Optional[float] = None,
) -> np.ndarray:
    """Symmetric power-of-two time grid adequate for the FFT lineshape.

    The step keeps the Nyquist energy above both the multi-phonon support
    (max phonon energy times max(10*S, 10)) and any explicitly requested
    reach; the span covers 25 damping constants hbar/gamma by default.
    """
    if gamma_mev <= 0:
        raise NonPositiveGamma(f"gamma must be positive, got {gamma_mev}")
    window = max(reach_mev, 10.0 * gamma_mev)
    need = window
    if omega_max_mev > 0:
        need = max(need, omega_max_mev * max(10.0 * s_total, 10.0))
    # Lorentzian tails beyond the Nyquist energy fold back into the output
    # window; push the Nyquist energy out until the folded weight over the
    # window stays below ~2e-6 in L1
    need = max(need, math.sqrt(2.0 * window * gamma_mev / (math.pi * 2e-6)))
    dt_nyquist = math.pi * units.HBAR_MEV_FS / need
    if omega_max_mev > 0:
        dt_nyquist = min(dt_nyquist, math.pi * units.HBAR_MEV_FS / (4.0 * omega_max_mev))
    dt = time_step_fs if time_step_fs is not None else dt_nyquist
    if dt <= 0:
        raise InputError(f"time step must be positive, got {dt}")
    if dt > dt_nyquist * (1.0 + 1e-12):
        raise AliasedGrid(
            f"time step {dt:.4f} fs too coarse; need <= {dt_nyquist:.4f} fs"
        )
    span = (
        time_span_fs
        if time_span_fs is not None
        else 25.0 * units.HBAR_MEV_FS / gamma_mev
    )
    if span < 10.0 * units.HBAR_MEV_FS / gamma_mev * (1.0 - 1e-12):
        raise AliasedGrid(
            f"time span {span:.1f} fs covers fewer than 10 damping constants "
            f"({10.0 * units.HBAR_MEV_FS / gamma_mev:.1f} fs)"
        )
    n = 1 << max(4, int(math.ceil(math.log2(2.0 * span / dt))))
    return (np.arange(n) - n // 2) * dt


def generating_function(sd: SpectralDensity, time_fs) -> GeneratingFunction:
    """G(t) = exp(S(t) - S(0)) with S(t) the quadrature Fourier transform.

    S(t) is evaluated on the non-negative half of the (arithmetic) time
    grid with a chirp-z transform and mirrored through S(-t) = conj(S(t)),
    so time reversal holds exactly; the identically-zero difference at
    t = 0 is pinned, keeping G(0) = 1 exact.
    """
    t = np.asarray(time_fs, dtype=float)
    if t.ndim != 1 or t.size < 4:
        raise DimensionMismatch("time grid must be a 1-d array")
    steps = np.diff(t)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise InputError("time grid must be uniform and ascending")
    dt = float(steps[0])
    i0 = int(np.argmin(np.abs(t)))
    if t[i0] != 0.0:
        raise InputError("time grid must contain t = 0 exactly")
    omega_max = float(np.max(np.abs(sd.grid_mev)))
    if omega_max > 0 and dt > math.pi * units.HBAR_MEV_FS / omega_max:
        raise AliasedGrid(
            f"time step {dt:.4f} fs aliases spectral content up to {omega_max:.1f} meV"
        )
    weights = np.full(sd.grid_mev.size, sd.step_mev)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    coeff = weights * sd.values
    s0 = float(np.sum(coeff))

    n = t.size
    half = max(i0, n - 1 - i0) + 1  # t = 0, dt, ..., covers both wings
    omega_lo = float(sd.grid_mev[0]) / units.HBAR_MEV_FS
    dw = sd.step_mev / units.HBAR_MEV_FS
    t_half = dt * np.arange(half)
    # sum_i coeff_i exp(-i w_i t_j): chirp-z over the uniform spectral grid
    s_half = np.exp(-1j * omega_lo * t_half) * czt(
        coeff, m=half, w=complex(math.cos(dw * dt), -math.sin(dw * dt)), a=1.0 + 0.0j
    )
    diff_half = s_half - s0
    diff_half[0] = 0.0  # S(0) - S(0) is identically zero
    g_half = np.exp(diff_half)

    vals = np.empty(n, dtype=complex)
    vals[i0:] = g_half[: n - i0]
    vals[: i0 + 1] = np.conj(g_half[: i0 + 1])[::-1]
    return GeneratingFunction(t, vals, s0, omega_max)


def _fft_spectral_function(gf: GeneratingFunction, gamma_mev: float):
    """FFT of the damped generating function.

    Returns the released-energy axis (meV, ascending, 0 at the zero-phonon
    line) and the real spectral density A per meV, unit integral.
    """
    t = gf.time_fs
    n = t.size
    dt = gf.dt_fs
    damped = gf.values * np.exp(-gamma_mev * np.abs(t) / units.HBAR_MEV_FS)
    # sum_j g_j exp(+i E t_j / hbar) with t_j = (j - n/2) dt
    spec = np.fft.ifft(damped) * n
    k = np.fft.fftfreq(n, d=1.0 / n)
    e_rel = 2.0 * math.pi * units.HBAR_MEV_FS * k / (n * dt)
    phase = np.exp(-1j * e_rel * (n // 2) * dt / units.HBAR_MEV_FS)
    a = (dt / (2.0 * math.pi * units.HBAR_MEV_FS)) * phase * spec
    order = np.argsort(e_rel, kind="stable")
    e_rel = e_rel[order]
    a = a[order]
    resid = float(np.max(np.abs(a.imag)))
    if resid > 1e-9:
        raise NumericalError(f"spectral function imaginary residue {resid:.3e} > 1e-9")
    a = a.real
    integral = float(np.trapezoid(a, e_rel))
    if abs(integral - 1.0) > 1e-6:
        raise NumericalError(
            f"spectral function integral {integral!r} deviates from 1 by > 1e-6"
        )
    return e_rel, a / integral


def default_window_mev(zpl_mev, omega_max_mev, s_total, gamma_mev, sigma_mev):
    """Window wide enough for the replica ladder plus broadening tails."""
    cover = s_total + 6.0 * math.sqrt(max(s_total, 0.0)) + 4.0
    below = omega_max_mev * cover + 50.0 * gamma_mev + 6.0 * sigma_mev
    above = 50.0 * gamma_mev + 6.0 * sigma_mev
    lo = max(zpl_mev - below, 1.0)
    return lo, zpl_mev + above


def lineshape(gf: GeneratingFunction, config: LineshapeConfig) -> Lineshape:
    """Normalized emission lineshape from the generating function.

    A(E_zpl - hw) is the FFT of G(t) e^{-gamma|t|/hbar}; the emission
    intensity is C * E^3 * A (or C * A with omega_cubed off), renormalized
    to unit integral over the output window.  The refractive index and
    transition dipole scale the unnormalized intensity only, so they drop
    out of the result.
    """
    if config.gamma_mev <= 0:
        raise NonPositiveGamma(f"gamma must be positive, got {config.gamma_mev}")
    zpl_mev = config.zpl_ev * 1000.0
    t = gf.time_fs
    dt = gf.dt_fs
    span = min(-float(t[0]), float(t[-1]) + dt)
    if span < 10.0 * units.HBAR_MEV_FS / config.gamma_mev * (1.0 - 1e-12):
        raise AliasedGrid(
            f"time span {span:.1f} fs covers fewer than 10 damping constants"
        )
    if config.window_ev is not None:
        lo_mev, hi_mev = (
            config.window_ev[0] * 1000.0,
            config.window_ev[1] * 1000.0,
        )
    else:
        lo_mev, hi_mev = default_window_mev(
            zpl_mev, gf.omega_max_mev, gf.s_total, config.gamma_mev, config.sigma_mev
        )
    if config.omega_cubed and lo_mev <= 0:
        raise InputError(
            "window must stay at positive emission energies when omega_cubed is on"
        )
    nyquist_mev = math.pi * units.HBAR_MEV_FS / dt
    support = gf.omega_max_mev * max(10.0 * gf.s_total, 10.0)
    reach = max(zpl_mev - lo_mev, abs(zpl_mev - hi_mev), support)
    if nyquist_mev < reach * (1.0 - 1e-12):
        raise AliasedGrid(
            f"time step {dt:.4f} fs gives Nyquist {nyquist_mev:.0f} meV, "
            f"below the required {reach:.0f} meV"
        )

    e_rel, a_full = _fft_spectral_function(gf, config.gamma_mev)
    npts = int(math.floor((hi_mev - lo_mev) / config.step_mev + 1e-9)) + 1
    energy_mev = lo_mev + config.step_mev * np.arange(npts)
    a_win = CubicSpline(e_rel, a_full)(zpl_mev - energy_mev)
    low = float(np.min(a_win))
    if low < -1e-9:
        raise NumericalError(
            f"windowed intensity dips to {low:.3e}; increase the time span"
        )
    a_win = np.clip(a_win, 0.0, None)
    if float(np.trapezoid(a_win, energy_mev)) < 1e-3:
        raise GridTooNarrow(
            f"window [{lo_mev / 1000.0}, {hi_mev / 1000.0}] eV captures less than "
            "0.1% of the emission"
        )
    # the physical prefactor (refractive index, dipole) scales the
    # unnormalized intensity and its integral alike, so it only shows up
    # in the normalization constant, never in the normalized curve
    scale = (config.refractive_index or 1.0) * (config.dipole_magnitude or 1.0) ** 2
    energy_ev = energy_mev / 1000.0
    weighted = a_win * (energy_ev**3 if config.omega_cubed else 1.0)
    norm = float(np.trapezoid(weighted, energy_ev))
    return Lineshape(
        energy_ev,
        weighted / norm,
        config.zpl_ev,
        config.gamma_mev,
        1.0 / (norm * scale),
        config.omega_cubed,
    )


@dataclass(frozen=True)
class PeakLabel:
    """One labelled sideband replica: offset below the ZPL and its mode."""

    offset_mev: float
    sk: float
    mode_index: int
    energy_ev: float


def effective_mode_report(
    hr: HRDecomposition,
    ls: Lineshape,
    lvm_indices: Optional[Sequence[int]] = None,
    match_tol_mev: Optional[float] = None,
) -> List[PeakLabel]:
    """Label sideband maxima with the strongest-coupling matching modes.

    Local maxima of the intensity below the ZPL are matched against modes
    (optionally restricted to a list of indices, e.g. the LVMs) whose
    energy lies within the match tolerance of the peak offset; among the
    candidates the largest S_k wins.  Modes with S_k < 1e-4 never label a
    peak.  Returned sorted by S_k, strongest first.
    """
    candidates = (
        np.arange(hr.nmodes) if lvm_indices is None else np.asarray(lvm_indices, int)
    )
    candidates = candidates[hr.sk[candidates] >= LABEL_SK_FLOOR]
    if match_tol_mev is None:
        match_tol_mev = max(3.0 * ls.gamma_mev, 5.0)
    e = ls.energy_ev
    y = ls.intensity
    below = e < ls.zpl_ev - 2.0 * ls.gamma_mev / 1000.0
    interior = np.zeros(e.size, dtype=bool)
    interior[1:-1] = (y[1:-1] >= y[2:]) & (y[1:-1] > y[:-2])
    peaks = np.nonzero(interior & below)[0]
    peaks = peaks[np.argsort(y[peaks], kind="stable")[::-1]]

    labels: List[PeakLabel] = []
    used: set = set()
    for p in peaks:
        offset = (ls.zpl_ev - e[p]) * 1000.0
        near = [
            int(k)
            for k in candidates
            if abs(hr.omegas_mev[k] - offset) <= match_tol_mev and int(k) not in used
        ]
        if not near:
            continue
        best = max(near, key=lambda k: (hr.sk[k], -k))
        used.add(best)
        labels.append(PeakLabel(offset, float(hr.sk[best]), best, float(e[p])))
    labels.sort(key=lambda pl: -pl.sk)
    return labels
