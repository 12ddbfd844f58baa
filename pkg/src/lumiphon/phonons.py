"""Lattice dynamics: Hessian -> phonon basis.

Pipeline: symmetrize, optionally enforce the acoustic sum rule, mass-weight,
diagonalize, then classify localized modes against the bulk cutoff.
"""

from __future__ import annotations

from typing import List

import numpy as np

from . import units
from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InputError,
    NonConvergence,
)
from .model import AsrReport, CrystalStructure, Hessian, PhononBasis

#: Modes with |omega| at or below this are treated as rigid translations.
ZERO_MODE_MEV = 0.01

#: Residual contract of the eigendecomposition, relative to ||D||.
RESIDUAL_TOL = 1e-8


def symmetrize(hessian: Hessian) -> Hessian:
    """Replace H by (H + H^T)/2; idempotent, bitwise symmetric output."""
    m = hessian.matrix
    # a+b == b+a in IEEE754, so both mirror entries come out identical
    return Hessian(0.5 * (m + m.T), hessian.structure_hash)


def _translation_basis(masses_3n):
    """Mass-weighted rigid translations, orthonormal, shape (3, 3N)."""
    n3 = masses_3n.shape[0]
    t = np.zeros((3, n3))
    sq = np.sqrt(masses_3n)
    for j in range(3):
        t[j, j::3] = sq[j::3]
        t[j] /= np.linalg.norm(t[j])
    return t


def _mass_weight(matrix, masses_3n):
    inv = 1.0 / np.sqrt(masses_3n)
    return matrix * np.outer(inv, inv)


def apply_asr(hessian: Hessian, masses) -> tuple[Hessian, AsrReport]:
    """Project rigid translations out of the dynamical matrix.

    The three mass-weighted translation vectors become exact null vectors;
    already translation-invariant Hessians pass through unchanged.  The
    report carries the translational residuals before and after, expressed
    as equivalent mode energies in meV.
    """
    masses = np.asarray(masses, dtype=float)
    masses_3n = np.repeat(masses, 3) if masses.size * 3 == hessian.dim else masses
    if masses_3n.shape != (hessian.dim,):
        raise DimensionMismatch(
            f"got {masses.size} masses for a {hessian.dim}-dimensional hessian"
        )
    if not hessian.is_symmetric():
        raise InputError("apply_asr requires a symmetrized hessian")

    d = _mass_weight(hessian.matrix, masses_3n)
    t = _translation_basis(masses_3n)

    def _residuals(mat):
        res = np.linalg.norm(mat @ t.T, axis=0)
        return units.HBAR_MEV_FS * np.sqrt(res * units.EV_PER_AMU_A2)

    pre = _residuals(d)
    proj = np.eye(hessian.dim) - t.T @ t
    d_clean = proj @ d @ proj
    d_clean = 0.5 * (d_clean + d_clean.T)
    # the projection cannot increase a residual; clamp matmul noise
    post = np.minimum(_residuals(d_clean), pre)

    sq = np.sqrt(masses_3n)
    h_clean = d_clean * np.outer(sq, sq)
    applied = bool(np.max(np.abs(h_clean - hessian.matrix)) > 1e-14)
    return Hessian(h_clean, hessian.structure_hash), AsrReport(pre, post, applied)


def diagonalize(hessian: Hessian, structure: CrystalStructure) -> PhononBasis:
    """Eigendecompose the mass-weighted Hessian into a PhononBasis.

    Eigenvalues lambda (eV/(amu A^2)) map to hbar*omega = hbar*sqrt(lambda)
    in meV, with lambda < 0 stored as negative meV.  Modes come out sorted
    ascending with a deterministic sign (first significant component of
    each vector is positive).  The residual contract ||D v - lambda v|| <
    1e-8 ||D|| is checked for every mode.
    """
    if hessian.dim != 3 * structure.natoms:
        raise DimensionMismatch(
            f"hessian dimension {hessian.dim} does not match {structure.natoms} atoms"
        )
    if not hessian.is_symmetric():
        raise InputError("diagonalize requires a symmetrized hessian")

    masses_3n = structure.mass_vector_3n()
    d = _mass_weight(hessian.matrix, masses_3n)
    d = 0.5 * (d + d.T)
    try:
        lam, vecs = np.linalg.eigh(d)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise NonConvergence(f"eigensolver failed: {exc}") from None
    vecs = vecs.T  # rows are modes

    norm_d = float(np.max(np.abs(lam))) if lam.size else 0.0
    if norm_d > 0:
        resid = np.linalg.norm(d @ vecs.T - vecs.T * lam[None, :], axis=0)
        worst = float(np.max(resid))
        if worst > RESIDUAL_TOL * norm_d:
            raise NonConvergence(
                f"eigenvector residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}*||D||"
            )

    # deterministic sign convention
    for k in range(vecs.shape[0]):
        v = vecs[k]
        nz = np.nonzero(np.abs(v) > 1e-12 * np.max(np.abs(v)))[0]
        if nz.size and v[nz[0]] < 0:
            vecs[k] = -v

    omegas = units.hbar_omega_from_eigenvalue(lam)
    order = np.argsort(omegas, kind="stable")
    return PhononBasis(omegas[order], vecs[order])


def classify_lvm(basis: PhononBasis, cutoff_mev: float = 115.0) -> List[int]:
    """Indices of modes strictly above the bulk phonon cutoff, ascending."""
    return [int(i) for i in np.nonzero(basis.omegas_mev > cutoff_mev)[0]]


def localization(basis: PhononBasis, mode_index: int) -> float:
    """Inverse participation ratio of one mode, in [1/N, 1].

    Computed from per-atom weights p_a = sum_i v_ai^2 as sum_a p_a^2;
    a mode living on a single atom scores 1, a uniform mode scores 1/N.
    """
    if not 0 <= mode_index < basis.nmodes:
        raise IndexOutOfRange(
            f"mode index {mode_index} outside 0..{basis.nmodes - 1}"
        )
    v = basis.vectors[mode_index].reshape(-1, 3)
    weights = np.sum(v * v, axis=1)
    total = float(np.sum(weights))
    return float(np.sum((weights / total) ** 2))


def localization_table(basis: PhononBasis) -> np.ndarray:
    """IPR of every mode (vectorized form of :func:`localization`)."""
    v = basis.vectors.reshape(basis.nmodes, -1, 3)
    weights = np.sum(v * v, axis=2)
    weights /= np.sum(weights, axis=1, keepdims=True)
    return np.sum(weights * weights, axis=1)
