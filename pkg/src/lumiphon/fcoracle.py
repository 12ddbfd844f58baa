"""Brute-force displaced-oscillator ladder for small mode counts.

Under the equal-mode approximation every vibrational overlap squared is a
product of Poisson factors exp(-S_k) S_k^m / m!, so for a handful of modes
the sideband can be enumerated line by line.  This is deliberately
independent of the generating-function route and exists to validate it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import (
    CapTooSmallWarning,
    GridTooNarrow,
    InputError,
    NegativeFrequency,
    TooManyModes,
)
from .model import HRDecomposition, _own

MAX_MODES = 8
MAX_CAP = 24

#: Quanta vectors whose partial weight falls below this are pruned.
PRUNE_WEIGHT = 1e-16


@dataclass(frozen=True, eq=False)
class FCLadder:
    """Enumerated emission lines: quanta vectors, weights, phonon energies."""

    quanta: np.ndarray  # (L, M) ints
    weights: np.ndarray  # (L,)
    energies_mev: np.ndarray  # (L,) energy released to phonons
    omegas_mev: np.ndarray  # (M,)
    sks: np.ndarray  # (M,)
    cap: int
    tail: float  # 1 - sum(weights), never renormalized away

    def __post_init__(self):
        object.__setattr__(self, "quanta", _own(self.quanta, dtype=int))
        object.__setattr__(self, "weights", _own(self.weights))
        object.__setattr__(self, "energies_mev", _own(self.energies_mev))
        object.__setattr__(self, "omegas_mev", _own(self.omegas_mev))
        object.__setattr__(self, "sks", _own(self.sks))
        balance = math.fsum(self.weights.tolist()) + self.tail
        if abs(balance - 1.0) > 1e-10:
            raise InputError(f"weights + tail = {balance!r}, expected 1")

    @property
    def nlines(self):
        return self.weights.shape[0]


def enumerate_fc(hr: HRDecomposition, cap: int) -> FCLadder:
    """Enumerate all quanta vectors with total quanta <= cap.

    Modes with S_k = 0 contribute only the zero-quanta factor and are
    dropped from the vectors.  Enumeration is lexicographic with early
    pruning of branches whose partial weight is already below 1e-16; the
    pruned and capped mass is reported as the tail, and a warning is
    emitted when it exceeds 1e-6.
    """
    if cap < 0 or cap > MAX_CAP:
        raise InputError(f"cap must be in 0..{MAX_CAP}, got {cap}")
    if np.any(hr.omegas_mev < 0):
        raise NegativeFrequency("ladder requires non-negative mode energies")
    live = hr.sk > 0.0
    omegas = hr.omegas_mev[live]
    sks = hr.sk[live]
    m = omegas.size
    if m > MAX_MODES:
        raise TooManyModes(f"{m} coupled modes exceed the enumeration limit {MAX_MODES}")

    pois = [
        np.array([math.exp(-s) * s**q / math.factorial(q) for q in range(cap + 1)])
        for s in sks
    ]
    quanta, weights, energies = [], [], []
    vec = np.zeros(m, dtype=int)

    def walk(k, weight, energy, used):
        if k == m:
            quanta.append(vec.copy())
            weights.append(weight)
            energies.append(energy)
            return
        for q in range(cap + 1 - used):
            w = weight * pois[k][q]
            if w < PRUNE_WEIGHT:
                if q >= sks[k]:
                    break  # factors only decrease from here on
                continue
            vec[k] = q
            walk(k + 1, w, energy + q * omegas[k], used + q)
        vec[k] = 0

    if m == 0:
        quanta.append(np.zeros(0, dtype=int))
        weights.append(1.0)
        energies.append(0.0)
    else:
        walk(0, 1.0, 0.0, 0)

    weights = np.array(weights)
    tail = 1.0 - math.fsum(weights.tolist())
    tail = max(tail, 0.0)
    if tail > 1e-6:
        warnings.warn(
            f"enumeration cap {cap} leaves tail mass {tail:.3e}",
            CapTooSmallWarning,
            stacklevel=2,
        )
    return FCLadder(
        np.array(quanta, dtype=int).reshape(len(weights), m),
        weights,
        np.array(energies),
        omegas,
        sks,
        cap,
        tail,
    )


def first_moment_mev(ladder: FCLadder) -> float:
    """Mean phonon energy released per emission event (the Stokes shift)."""
    wsum = math.fsum(ladder.weights.tolist())
    return float(np.dot(ladder.weights, ladder.energies_mev) / wsum)


@dataclass(frozen=True, eq=False)
class OracleSpectrum:
    """Broadened ladder on an energy grid; integral tracks 1 - tail."""

    energy_ev: np.ndarray
    intensity: np.ndarray  # per eV
    total_weight: float
    tail: float
    window_mass: float  # analytic in-window mass of the broadened lines

    def __post_init__(self):
        object.__setattr__(self, "energy_ev", _own(self.energy_ev))
        object.__setattr__(self, "intensity", _own(self.intensity))


def broadened_oracle_spectrum(
    ladder: FCLadder,
    gamma_mev: float,
    grid_ev,
    zpl_ev: float,
    sigma_mev: float = 0.0,
    min_weight: float = 0.0,
) -> OracleSpectrum:
    """Sum a Lorentzian of half-width gamma over every enumerated line.

    With sigma > 0 each line is additionally convolved with a Gaussian of
    width sigma * sqrt(total quanta), matching the smearing the
    generating-function route applies to the spectral density, so the two
    routes become comparable profile by profile.  The tail mass is
    reported, never folded back in.  Lines below min_weight are skipped in
    the evaluation (their aggregate is bounded by nlines * min_weight, so
    1e-12 is safely below any stated tolerance); the analytic window mass
    still counts every line.
    """
    if gamma_mev <= 0:
        raise InputError(f"gamma must be positive, got {gamma_mev}")
    if min_weight < 0:
        raise InputError(f"min_weight must be non-negative, got {min_weight}")
    grid = np.asarray(grid_ev, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InputError("grid must be a 1-d array")
    steps = np.diff(grid)
    if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
        raise InputError("grid must be uniform and ascending")
    step_ev = float(steps[0])
    gamma_ev = gamma_mev / 1000.0
    lines_ev = zpl_ev - ladder.energies_mev / 1000.0
    # lines of appreciable weight must sit inside the grid by 10 gamma;
    # enumeration dust at the far red end may fall off the edge
    outside = (lines_ev < grid[0] + 10.0 * gamma_ev) | (
        lines_ev > grid[-1] - 10.0 * gamma_ev
    )
    lost = float(np.sum(ladder.weights[outside]))
    if lost > 1e-9:
        raise GridTooNarrow(
            f"grid [{grid[0]:.4f}, {grid[-1]:.4f}] eV cuts off lines carrying "
            f"weight {lost:.3e} (need lines +- 10 gamma inside)"
        )

    totals = ladder.quanta.sum(axis=1) if ladder.quanta.size else np.zeros(
        ladder.nlines, dtype=int
    )
    sigma_ev = sigma_mev / 1000.0
    pad_ev = 10.0 * gamma_ev + (
        8.0 * sigma_ev * math.sqrt(max(int(totals.max()), 1)) if sigma_mev > 0 else 0.0
    )
    npad = int(math.ceil(pad_ev / step_ev)) + 1
    padded = np.concatenate(
        [
            grid[0] - step_ev * np.arange(npad, 0, -1),
            grid,
            grid[-1] + step_ev * np.arange(1, npad + 1),
        ]
    )

    out = np.zeros(padded.size)
    keep = ladder.weights >= min_weight
    for q in np.unique(totals[keep]):
        sel = keep & (totals == q)
        wts = ladder.weights[sel]
        ens = lines_ev[sel]
        sub = np.zeros(padded.size)
        chunk = max(1, 4_000_000 // padded.size)
        for i in range(0, wts.size, chunk):
            sub += (
                wts[i : i + chunk, None]
                * (gamma_ev / math.pi)
                / ((padded[None, :] - ens[i : i + chunk, None]) ** 2 + gamma_ev**2)
            ).sum(axis=0)
        if sigma_mev > 0 and q > 0:
            sg = sigma_ev * math.sqrt(float(q))
            nk = int(math.ceil(8.0 * sg / step_ev))
            kernel = np.exp(-0.5 * ((np.arange(-nk, nk + 1) * step_ev) / sg) ** 2)
            kernel /= kernel.sum()
            sub = fftconvolve(sub, kernel, mode="same")
        out += sub
    values = out[npad : npad + grid.size]

    # analytic in-window Lorentzian mass (the Gaussian part is narrow and
    # symmetric, so its effect on the window mass is second order)
    frac = (
        np.arctan((grid[-1] - lines_ev) / gamma_ev)
        - np.arctan((grid[0] - lines_ev) / gamma_ev)
    ) / math.pi
    window_mass = float(np.dot(ladder.weights, frac))
    return OracleSpectrum(
        grid,
        values,
        float(math.fsum(ladder.weights.tolist())),
        ladder.tail,
        window_mass,
    )
