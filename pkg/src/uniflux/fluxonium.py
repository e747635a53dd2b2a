"""Fluxonium circuit spectra and phase matrix elements.

The qubit Hamiltonian is

    H0 = 4 E_C n^2 + (1/2) E_L (phi - phi_ext)^2 - E_J cos(phi),

with all energies given as frequencies (E/h, GHz) and the external flux in
units of the flux quantum. The matrix is built in the harmonic-oscillator
basis of the LC subcircuit (plasma frequency sqrt(8 E_L E_C)) after
translating the phase coordinate to the inductive minimum, where the LC part
is diagonal and the Josephson term becomes -E_J cos(phi_op - phi_dc) with
phi_dc = 2*pi*phi_ext. The translation shifts only diagonal elements of the
phase operator, so off-diagonal matrix elements |<i|phi|j>| are unaffected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NoSolutionError, NumericalError

DEFAULT_BASIS_SIZE = 120
DEFAULT_N_LEVELS = 6
MIN_BASIS_SIZE = 12


@dataclass(frozen=True)
class FluxoniumParams:
    """Circuit energies (GHz), external flux (Phi0), and basis truncation.

    Attributes
    ----------
    e_j, e_c, e_l :
        Josephson, charging, and inductive energies as E/h in GHz.
    phi_ext :
        External flux bias in units of Phi0 (0.5 is the half-flux sweet spot).
    basis_size :
        Oscillator-basis truncation; 120 converges the low levels with a wide
        margin at typical fluxonium parameters.
    """

    e_j: float
    e_c: float
    e_l: float
    phi_ext: float = 0.5
    basis_size: int = DEFAULT_BASIS_SIZE

    def __post_init__(self):
        if self.e_j < 0:
            raise ValueError(f"e_j must be non-negative, got {self.e_j}")
        if self.e_c <= 0 or self.e_l <= 0:
            raise ValueError("e_c and e_l must be positive")
        if self.basis_size < MIN_BASIS_SIZE:
            raise ValueError(
                f"basis_size must be at least {MIN_BASIS_SIZE}, got {self.basis_size}"
            )

    def replace(self, **kwargs) -> "FluxoniumParams":
        from dataclasses import replace as _replace

        return _replace(self, **kwargs)

    @property
    def plasma_frequency(self) -> float:
        """LC plasma frequency sqrt(8 E_L E_C) in GHz."""
        return np.sqrt(8.0 * self.e_l * self.e_c)

    @property
    def phi_zpf(self) -> float:
        """Zero-point phase amplitude <0|phi|1> of the bare LC oscillator."""
        return (8.0 * self.e_c / self.e_l) ** 0.25 / np.sqrt(2.0)


@dataclass(frozen=True)
class EnergySpectrum:
    """Eigenfrequencies relative to the ground state, in GHz.

    ``levels[0]`` is exactly 0. Eigenvectors are retained (in the oscillator
    basis, phase-fixed) so matrix elements can be evaluated afterwards;
    ``matrix_elements`` caches |<i|phi|j>| for the pairs requested so far.
    """

    levels: np.ndarray
    matrix_elements: dict = field(default_factory=dict)
    _vectors: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv[0] != 0.0 or np.any(np.diff(lv) < 0):
            raise ValueError("levels must be non-decreasing with levels[0] == 0")
        object.__setattr__(self, "levels", lv)

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def phase_operator(params: FluxoniumParams) -> np.ndarray:
    """Phase operator (relative to the inductive minimum) in the oscillator basis."""
    n = params.basis_size
    ladder = np.diag(np.sqrt(np.arange(1, n)), 1)
    return (ladder + ladder.T) * (params.phi_zpf)


def build_hamiltonian(params: FluxoniumParams) -> np.ndarray:
    """Hamiltonian matrix in the LC oscillator basis, GHz units.

    Returns a real symmetric ``basis_size x basis_size`` matrix; explicitly
    symmetrized to absorb floating-point asymmetry from the matrix cosine.
    """
    n = params.basis_size
    phi_op = phase_operator(params)
    phi_dc = 2.0 * np.pi * params.phi_ext
    lc = np.diag((np.arange(n) + 0.5) * params.plasma_frequency)
    h = lc - params.e_j * scipy.linalg.cosm(phi_op - phi_dc * np.eye(n))
    return (h + h.T) / 2.0


def eigensystem(h: np.ndarray, n_levels: int = DEFAULT_N_LEVELS) -> EnergySpectrum:
    """Lowest ``n_levels`` eigenfrequencies of ``h``, relative to the ground state.

    ``n_levels`` may be at most a third of the basis size: levels closer to
    the truncation edge are not trustworthy.
    """
    dim = h.shape[0]
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    if n_levels > dim // 3:
        raise ValueError(
            f"n_levels={n_levels} exceeds the truncation safety margin "
            f"(basis_size={dim} supports at most {dim // 3})"
        )
    try:
        vals, vecs = scipy.linalg.eigh(h, subset_by_index=(0, n_levels - 1))
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise NumericalError(f"eigensolver failed to converge: {exc}") from exc
    # Fix each eigenvector's sign: largest-magnitude component real-positive.
    for k in range(vecs.shape[1]):
        lead = np.argmax(np.abs(vecs[:, k]))
        if vecs[lead, k] < 0:
            vecs[:, k] = -vecs[:, k]
    return EnergySpectrum(levels=vals - vals[0], _vectors=vecs)


def _element(params: FluxoniumParams, spectrum: EnergySpectrum, i: int, j: int) -> float:
    i, j = min(i, j), max(i, j)  # evaluation order fixed so (i,j) == (j,i) exactly
    phi_op = phase_operator(params)
    vecs = spectrum._vectors
    return float(abs(vecs[:, i] @ phi_op @ vecs[:, j]))


def phase_matrix_element(
    params: FluxoniumParams, i: int, j: int, n_levels: int = DEFAULT_N_LEVELS
) -> float:
    """|<i|phi|j>| between eigenstates, i != j.

    Magnitudes are translation-independent for i != j, so the value refers to
    the phase operator of the untranslated Hamiltonian as well.
    """
    if i == j:
        raise ValueError("phase_matrix_element is defined for i != j")
    n_levels = max(n_levels, i + 1, j + 1)
    if min(i, j) < 0 or n_levels > params.basis_size // 3:
        raise ValueError(f"level index out of range for basis_size={params.basis_size}")
    spectrum = eigensystem(build_hamiltonian(params), n_levels)
    value = _element(params, spectrum, i, j)
    spectrum.matrix_elements[(i, j)] = value
    return value


def eigenbasis_phase_matrix(
    params: FluxoniumParams, n_levels: int = DEFAULT_N_LEVELS
) -> tuple[np.ndarray, np.ndarray]:
    """(levels, phase-operator matrix) in the truncated eigenbasis.

    The matrix includes diagonal elements referenced to the inductive minimum;
    drive physics uses it as the coupling operator, where diagonal offsets
    only shift the energy reference.
    """
    spectrum = eigensystem(build_hamiltonian(params), n_levels)
    phi_op = phase_operator(params)
    vecs = spectrum._vectors
    return spectrum.levels.copy(), vecs.T @ phi_op @ vecs


def spectrum_sweep(
    params: FluxoniumParams, flux_grid, n_levels: int = DEFAULT_N_LEVELS
) -> list[tuple[float, EnergySpectrum]]:
    """Eigensystem at each flux in ``flux_grid``; rows are independent."""
    flux_grid = list(flux_grid)
    if not flux_grid:
        raise ValueError("flux_grid must be non-empty")
    rows = []
    for idx, flux in enumerate(flux_grid):
        try:
            spec = eigensystem(build_hamiltonian(params.replace(phi_ext=flux)), n_levels)
        except NumericalError as exc:
            raise NumericalError(f"sweep row {idx} (flux={flux}): {exc}") from exc
        rows.append((float(flux), spec))
    return rows


@dataclass(frozen=True)
class ResetFlux:
    """Solution of f01(flux) = f_target closest to the half-flux point."""

    flux_phi0: float
    excursion_phi0: float
    f01_ghz: float


def _f01(params: FluxoniumParams, flux: float) -> float:
    spec = eigensystem(build_hamiltonian(params.replace(phi_ext=flux)), 2)
    return float(spec.levels[1])


def find_reset_flux(
    params: FluxoniumParams, f_target: float, scan_points: int = 160
) -> ResetFlux:
    """Flux phi* in (0, 0.5) nearest 0.5 where f01(phi*) equals ``f_target``.

    Scans a dense grid from 0.5 downward to bracket the crossing closest to
    the sweet spot, then refines with a bracketing root-finder. Raises
    NoSolutionError naming the attainable band when the target is outside it.
    """
    from scipy.optimize import brentq

    grid = np.linspace(0.5, 1e-3, scan_points)
    f01s = np.array([_f01(params, g) for g in grid])
    lo, hi = f01s[0], float(f01s.max())
    if not (lo <= f_target <= hi):
        raise NoSolutionError(
            f"f_target={f_target} GHz outside attainable band "
            f"[{lo:.4f}, {hi:.4f}] GHz on flux in (0, 0.5]"
        )
    if f_target == lo:
        return ResetFlux(0.5, 0.0, lo)
    # first bracket scanning away from 0.5
    for k in range(len(grid) - 1):
        if (f01s[k] - f_target) * (f01s[k + 1] - f_target) <= 0:
            root = brentq(
                lambda x: _f01(params, x) - f_target, grid[k + 1], grid[k], xtol=1e-10
            )
            return ResetFlux(float(root), 0.5 - float(root), f_target)
    raise NoSolutionError(  # pragma: no cover - guarded by band check
        f"no crossing found for f_target={f_target} GHz"
    )
