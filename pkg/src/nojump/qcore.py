"""Small dense complex linear algebra and quantum state primitives.

Everything operates on 2x2 or 3x3 complex numpy arrays.  Basis ordering is
fixed globally: index 0 = |g>, 1 = |e>, 2 = |f> for three-level objects, and
index 0 = |e>, 1 = |f> for the excited two-level manifold.  Pauli operators
live on the (|e>, |f>) manifold with sigma_z = |e><e| - |f><f|.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Tolerances used across the package; override here, not at call sites.
NORM_ATOL = 1e-12            # |norm^2 - 1| for a normalized ket
HERMITIAN_ATOL = 1e-12       # elementwise Hermiticity of density matrices
EIG_HERMITIAN_ATOL = 1e-10   # input Hermiticity accepted by eig_hermitian
PSD_ATOL = 1e-10             # eigenvalue floor for density matrices
PHASE_ATOL = 1e-12           # component magnitude treated as vanishing
DEFECTIVE_OVERLAP = 1.0 - 1e-8  # eigenvector overlap flagged as defective

_MASK64 = (1 << 64) - 1


class PostselectionError(RuntimeError):
    """Raised when a conditional (postselected) ensemble is empty."""


@dataclass(frozen=True)
class SystemParams:
    """Physical parameters of the dissipative qutrit.

    gamma_e, gamma_f are decay rates in 1/us; J and Delta are the drive
    amplitude and detuning on the (|e>, |f>) transition in rad/us.
    """

    gamma_e: float
    gamma_f: float
    J: float
    Delta: float = 0.0

    def __post_init__(self) -> None:
        if self.gamma_e < 0 or self.gamma_f < 0:
            raise ValueError("decay rates must be nonnegative")
        if self.J < 0:
            raise ValueError("drive amplitude J must be nonnegative")


def basis_ket(label: str, dim: int) -> np.ndarray:
    """Unit ket for |g>, |e> or |f> in the chosen basis ordering."""
    orderings = {3: ("g", "e", "f"), 2: ("e", "f")}
    if dim not in orderings:
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if label not in orderings[dim]:
        raise ValueError(f"state |{label}> does not exist in the {dim}-level manifold")
    ket = np.zeros(dim, dtype=complex)
    ket[orderings[dim].index(label)] = 1.0
    return ket


def pauli(axis: str) -> np.ndarray:
    """Pauli operator on the (|e>, |f>) manifold, |e> first."""
    if axis == "x":
        return np.array([[0, 1], [1, 0]], dtype=complex)
    if axis == "y":
        return np.array([[0, -1j], [1j, 0]], dtype=complex)
    if axis == "z":
        return np.array([[1, 0], [0, -1]], dtype=complex)
    raise ValueError(f"unknown Pauli axis {axis!r}")


def norm_squared(psi: np.ndarray) -> float:
    return float(np.sum(np.abs(psi) ** 2))


def is_normalized(psi: np.ndarray, atol: float = NORM_ATOL) -> bool:
    return abs(norm_squared(psi) - 1.0) <= atol


def fix_global_phase(psi: np.ndarray) -> np.ndarray:
    """Rotate the global phase so the first nonvanishing component is real positive."""
    for c in psi:
        if abs(c) > PHASE_ATOL:
            return psi * (np.conj(c) / abs(c))
    return psi


def check_density_matrix(rho: np.ndarray) -> None:
    """Validate Hermiticity, positivity and trace of a (possibly sub-normalized) rho."""
    rho = np.asarray(rho)
    if rho.shape not in ((2, 2), (3, 3)):
        raise ValueError(f"density matrix must be 2x2 or 3x3, got {rho.shape}")
    if not np.all(np.isfinite(rho.view(float))):
        raise ValueError("density matrix has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_ATOL:
        raise ValueError("density matrix is not Hermitian")
    evals = np.linalg.eigvalsh((rho + rho.conj().T) / 2)
    if evals.min() < -PSD_ATOL:
        raise ValueError(f"density matrix has negative eigenvalue {evals.min():.3e}")
    tr = float(np.trace(rho).real)
    if not 0.0 < tr <= 1.0 + NORM_ATOL:
        raise ValueError(f"density matrix trace {tr} outside (0, 1]")


def eig_general_2x2(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigendecomposition of a general complex 2x2 matrix.

    Returns (eigenvalues, V) with eigenvectors in the columns of V, each
    normalized and phase-fixed.  At an exact double root of a defective
    matrix both columns hold the single eigenvector; defectiveness is
    detected by the caller from |<v0|v1>|.
    """
    m = np.asarray(m, dtype=complex)
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    mean = 0.5 * (a + d)
    disc = np.sqrt(mean * mean - (a * d - b * c))
    evals = np.array([mean - disc, mean + disc])

    scale = max(np.max(np.abs(m)), 1.0)
    vecs = []
    for lam in evals:
        # Rows of (M - lam) are both orthogonal to the eigenvector; build it
        # from whichever row gives the larger (more stable) candidate.
        v1 = np.array([b, lam - a])
        v2 = np.array([lam - d, c])
        v = v1 if np.linalg.norm(v1) >= np.linalg.norm(v2) else v2
        n = np.linalg.norm(v)
        if n <= 1e-14 * scale:
            # (Near-)scalar matrix: every vector is an eigenvector.
            v = basis_ket("e" if len(vecs) == 0 else "f", 2)
            n = 1.0
        vecs.append(fix_global_phase(v / n))
    return evals, np.column_stack(vecs)


def eigenvector_overlap(v: np.ndarray) -> float:
    """|<v0|v1>| of the two (normalized) columns; ~1 marks a defective matrix."""
    return float(abs(np.vdot(v[:, 0], v[:, 1])))


def eig_hermitian(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending.

    Eigenvectors are orthonormal columns with the global phase convention of
    fix_global_phase.  Raises if the input is non-Hermitian beyond tolerance.
    """
    m = np.asarray(m, dtype=complex)
    if np.max(np.abs(m - m.conj().T)) > EIG_HERMITIAN_ATOL:
        raise ValueError("matrix is not Hermitian within tolerance")
    evals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    for k in range(vecs.shape[1]):
        vecs[:, k] = fix_global_phase(vecs[:, k])
    return evals, vecs


def matrix_exponential(m: np.ndarray, t: float) -> np.ndarray:
    """Propagator exp(-i*m*t) for a 2x2 or 3x3 complex matrix.

    2x2 matrices go through the closed-form eigendecomposition unless the
    eigenvectors are near-parallel (close to an exceptional point), where the
    decomposition is ill-conditioned; that case and all 3x3 inputs use
    scaling-and-squaring on the Taylor series.
    """
    m = np.asarray(m, dtype=complex)
    if t == 0.0:
        return np.eye(m.shape[0], dtype=complex)
    if m.shape == (2, 2):
        evals, vecs = eig_general_2x2(m)
        if eigenvector_overlap(vecs) <= DEFECTIVE_OVERLAP:
            phases = np.exp(-1j * evals * t)
            return vecs @ np.diag(phases) @ np.linalg.inv(vecs)
    return _expm_taylor(-1j * t * m)


def _expm_taylor(a: np.ndarray) -> np.ndarray:
    """exp(a) by scaling-and-squaring with a machine-precision Taylor sum."""
    nrm = np.linalg.norm(a, ord=np.inf)
    squarings = 0
    if nrm > 0.5:
        squarings = int(np.ceil(np.log2(nrm / 0.5)))
        a = a / (2.0 ** squarings)
    out = np.eye(a.shape[0], dtype=complex)
    term = np.eye(a.shape[0], dtype=complex)
    for k in range(1, 40):
        term = term @ a / k
        out = out + term
        if np.max(np.abs(term)) < 1e-20:
            break
    for _ in range(squarings):
        out = out @ out
    return out


def splitmix64(x: int) -> int:
    """One splitmix64 output for state x; the basis of seed derivation."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def derive_seed(master: int, index: int) -> int:
    """Child seed for stream `index` of a run seeded with `master`.

    splitmix64 is counter-based, so streams are independent and O(1) to
    derive; ensembles are reproducible and embarrassingly parallel.
    """
    if index < 0:
        raise ValueError("stream index must be nonnegative")
    return splitmix64((master & _MASK64) + index * 0x9E3779B97F4A7C15)
