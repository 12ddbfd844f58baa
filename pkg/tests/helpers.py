"""Shared synthetic systems and independent oracles used across the suite.

Everything here is deliberately built from first principles (springs,
Poisson factors, window integrals) so the tests never reuse the code paths
they are checking.
"""

import math

import numpy as np
from scipy.special import voigt_profile

from lumiphon.model import CrystalStructure, Hessian


def spring_hessian(positions, springs, dim=None):
    """Central-force spring network Hessian (eV/A^2), translation invariant.

    springs: iterable of (a, b, k) index pairs with spring constant k;
    blocks are k * outer(nhat, nhat) along the bond direction.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    h = np.zeros((3 * n, 3 * n))
    for a, b, k in springs:
        d = positions[b] - positions[a]
        nhat = d / np.linalg.norm(d)
        block = k * np.outer(nhat, nhat)
        h[3 * a : 3 * a + 3, 3 * b : 3 * b + 3] -= block
        h[3 * b : 3 * b + 3, 3 * a : 3 * a + 3] -= block
        h[3 * a : 3 * a + 3, 3 * a : 3 * a + 3] += block
        h[3 * b : 3 * b + 3, 3 * b : 3 * b + 3] += block
    return h


def isotropic_pair_hessian(k):
    """Two atoms coupled by an isotropic spring: 3 zero + 3 stretch modes."""
    eye = np.eye(3)
    h = np.zeros((6, 6))
    h[:3, :3] = k * eye
    h[3:, 3:] = k * eye
    h[:3, 3:] = -k * eye
    h[3:, :3] = -k * eye
    return h


def random_cluster_structure(natoms, seed, species=("C", "Si")):
    """Random jittered-grid cluster with all-pairs springs."""
    rng = np.random.default_rng(seed)
    side = int(math.ceil(natoms ** (1.0 / 3.0)))
    grid = np.array(
        [[i, j, k] for i in range(side) for j in range(side) for k in range(side)],
        dtype=float,
    )[:natoms]
    positions = 2.2 * grid + rng.uniform(-0.25, 0.25, size=(natoms, 3))
    names = [species[i % len(species)] for i in range(natoms)]
    masses = [12.011 if s == "C" else 28.085 for s in names]
    lattice = np.eye(3) * (2.2 * side + 10.0)
    structure = CrystalStructure(lattice, tuple(names), masses, positions)
    springs = [
        (a, b, float(rng.uniform(1.0, 8.0)))
        for a in range(natoms)
        for b in range(a + 1, natoms)
    ]
    hessian = Hessian(spring_hessian(positions, springs))
    return structure, hessian


def poisson_weight(s, n):
    return math.exp(-s) * s**n / math.factorial(n)


def extract_peak_weights(
    energy_ev, intensity, zpl_ev, omega_mev, gamma_mev, sigma_mev, nmax
):
    """Recover replica weights from a broadened single-mode spectrum.

    Window integrals of the computed spectrum are matched against the
    analytic window integrals of unit-mass Voigt profiles (Gaussian width
    sqrt(n)*sigma, Lorentzian half-width gamma), which undoes both the
    finite window overlap between neighbouring Lorentzians and the output
    renormalization.  Returned weights sum to one.
    """
    energy_mev = np.asarray(energy_ev) * 1000.0
    zpl_mev = zpl_ev * 1000.0
    centers = zpl_mev - omega_mev * np.arange(nmax + 1)
    half = omega_mev / 2.0
    b = np.zeros(nmax + 1)
    m = np.zeros((nmax + 1, nmax + 1))
    for j, c in enumerate(centers):
        sel = (energy_mev >= c - half) & (energy_mev <= c + half)
        b[j] = np.trapezoid(np.asarray(intensity)[sel] / 1000.0, energy_mev[sel])
        x = np.arange(c - half, c + half + 1e-9, 0.01)
        for n, cn in enumerate(centers):
            width = sigma_mev * math.sqrt(n) if n > 0 else 1e-12
            m[j, n] = np.trapezoid(voigt_profile(x - cn, width, gamma_mev), x)
    weights = np.linalg.solve(m, b)
    return weights / weights.sum()


def lorentzian_ev(x_ev, center_ev, gamma_mev):
    g = gamma_mev / 1000.0
    return (g / math.pi) / ((x_ev - center_ev) ** 2 + g * g)
