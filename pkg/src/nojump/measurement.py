"""Simulated three-state readout and tomography.

The measurement chain mirrors the experimental one: rotate the tomography
axis onto the energy basis, read out (g, +a, -a) with classifier confusion,
sample finite shots, unfold the confusion with an iterative Bayesian update,
renormalize the surviving (+a, -a) sub-ensemble, and reconstruct the
two-level density matrix from the three Bloch components.

Outcome ordering is (g, +a, -a) everywhere, aligned with the (g, e, f)
energy-basis ordering through the rotation convention below.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .qcore import PostselectionError, pauli

AXES = ("x", "y", "z")

ROW_SUM_TOL = 2e-3        # accepted deviation of raw confusion rows from 1
PROBABILITY_ATOL = 1e-9
IBU_ITERATIONS = 50       # fixed count; deterministic, no stopping rule

# Bloch components are read as a = 2 P(+a) - 1, consistent with
# sigma_z = |e><e| - |f><f| and outcome "+z" <-> "e".
BLOCH_SIGN_CONVENTION = "a = 2*P(+a) - 1"

# Raw three-state assignment probabilities of the SWAP-assisted readout
# classifier, kept verbatim for provenance; rows sum to 1.001/1.000/0.999
# and are renormalized when building the stochastic matrix.
RAW_ASSIGNMENT_PROBS = (
    (0.993, 0.003, 0.005),
    (0.123, 0.871, 0.006),
    (0.056, 0.018, 0.925),
)

COUNTS_CSV_HEADER = ("axis", "shots", "n_g", "n_plus", "n_minus")


class IngestError(ValueError):
    """Malformed externally supplied counts data."""


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic assignment matrix; beta[i, j] = P(assign j | prepared i)."""

    beta: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.beta, dtype=float)
        if b.shape != (3, 3):
            raise ValueError("confusion matrix must be 3x3")
        if np.any(b < 0):
            raise ValueError("confusion matrix entries must be nonnegative")
        if np.max(np.abs(b.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("confusion matrix rows must sum to 1")
        if np.any(np.diag(b) <= 0.5):
            raise ValueError("confusion matrix must be diagonally dominant (beta_ii > 1/2)")
        object.__setattr__(self, "beta", b)

    @classmethod
    def from_raw(cls, rows, row_sum_tol: float = ROW_SUM_TOL) -> "ConfusionMatrix":
        """Build from raw assignment probabilities, renormalizing each row.

        Rows whose sums deviate from 1 by more than row_sum_tol are rejected
        rather than silently rescaled.
        """
        b = np.asarray(rows, dtype=float)
        sums = b.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > row_sum_tol:
            raise ValueError(f"row sums {sums} deviate from 1 beyond {row_sum_tol}")
        return cls(beta=b / sums[:, None])

    @classmethod
    def identity(cls) -> "ConfusionMatrix":
        return cls(beta=np.eye(3))


def default_confusion_matrix() -> ConfusionMatrix:
    """The SWAP-readout classifier assignment matrix, row-normalized."""
    return ConfusionMatrix.from_raw(RAW_ASSIGNMENT_PROBS)


@dataclass(frozen=True)
class CountsRecord:
    """Tomography outcome counts for one axis setting.

    With shots = 0 the record is exact: `counts` holds the outcome
    probabilities themselves instead of integers.
    """

    axis: str
    shots: int
    counts: np.ndarray
    exact: bool = False

    def __post_init__(self) -> None:
        if self.axis not in AXES:
            raise ValueError(f"unknown tomography axis {self.axis!r}")
        counts = np.asarray(self.counts)
        if counts.shape != (3,) or np.any(counts < 0):
            raise ValueError("counts must be 3 nonnegative values (g, +a, -a)")
        if not self.exact and counts.sum() != self.shots:
            raise ValueError(f"counts {counts.tolist()} do not sum to shots = {self.shots}")

    def frequencies(self) -> np.ndarray:
        if self.exact:
            return np.asarray(self.counts, dtype=float)
        if self.shots <= 0:
            raise ValueError("cannot form frequencies from a zero-shot record")
        return np.asarray(self.counts, dtype=float) / self.shots


def check_probability_vector(p: np.ndarray, atol: float = PROBABILITY_ATOL) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (3,):
        raise ValueError("probability vector must have 3 entries (g, e, f)")
    if np.any(p < -atol) or abs(p.sum() - 1.0) > max(atol, 1e-12):
        raise ValueError(f"not a probability vector: {p}")
    return np.clip(p, 0.0, None)


def apply_confusion(p_true: np.ndarray, beta: ConfusionMatrix) -> np.ndarray:
    """Observed outcome distribution: observed_j = sum_i p_i beta_ij."""
    p_true = check_probability_vector(p_true)
    return beta.beta.T @ p_true


def sample_counts(p_observed: np.ndarray, shots: int, seed: int) -> np.ndarray:
    """Multinomial outcome counts, deterministic given the seed."""
    if shots < 0:
        raise ValueError("shots must be nonnegative")
    p = check_probability_vector(p_observed)
    if shots == 0:
        return np.zeros(3, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return rng.multinomial(shots, p / p.sum())


def ibu_correct(
    observed: np.ndarray,
    beta: ConfusionMatrix,
    n_iter: int = IBU_ITERATIONS,
    prior: np.ndarray | None = None,
) -> np.ndarray:
    """Iterative Bayesian update unfolding of readout confusion.

    p_i <- p_i * sum_j beta_ij observed_j / (sum_k p_k beta_kj), run for a
    fixed n_iter from a strictly positive prior (uniform by default).  The
    iteration preserves the simplex exactly.
    """
    observed = check_probability_vector(observed)
    p = np.full(3, 1.0 / 3.0) if prior is None else np.asarray(prior, dtype=float).copy()
    if np.any(p <= 0):
        raise ValueError("prior must be strictly positive")
    p = p / p.sum()
    b = beta.beta
    for _ in range(n_iter):
        predicted = b.T @ p
        bad = (predicted <= 0) & (observed > 0)
        if np.any(bad):
            raise ValueError("observed outcome has zero predicted probability; "
                             "confusion model inconsistent with data")
        ratio = np.divide(observed, predicted, out=np.zeros(3), where=predicted > 0)
        p = p * (b @ ratio)
    return p


def tomography_rotation(axis: str) -> np.ndarray:
    """Pre-readout pi/2 rotation mapping the axis eigenstates onto (|e>, |f>).

    X: exp(+i pi sigma_y / 4) takes |+x> -> |e>, |-x> -> |f>;
    Y: exp(-i pi sigma_x / 4) takes |+y> -> |e>, |-y> -> |f>;
    Z: identity.  |g> is untouched.
    """
    if axis == "z":
        block = np.eye(2, dtype=complex)
    elif axis == "x":
        block = (np.eye(2) + 1j * pauli("y")) / np.sqrt(2)
    elif axis == "y":
        block = (np.eye(2) - 1j * pauli("x")) / np.sqrt(2)
    else:
        raise ValueError(f"unknown tomography axis {axis!r}")
    rot = np.eye(3, dtype=complex)
    rot[1:, 1:] = block
    return rot


def simulate_tomography(
    rho3: np.ndarray,
    axis: str,
    beta: ConfusionMatrix,
    shots: int,
    seed: int = 0,
) -> CountsRecord:
    """Readout of one tomography axis: rotate, confuse, sample.

    shots = 0 returns the exact observed probabilities (flagged exact) so the
    downstream pipeline can be run without sampling noise.
    """
    rot = tomography_rotation(axis)
    p_true = np.diag(rot @ rho3 @ rot.conj().T).real
    p_true = np.clip(p_true, 0.0, None)
    p_true = p_true / p_true.sum()
    p_obs = apply_confusion(p_true, beta)
    if shots == 0:
        return CountsRecord(axis=axis, shots=0, counts=p_obs, exact=True)
    return CountsRecord(
        axis=axis, shots=shots, counts=sample_counts(p_obs, shots, seed), exact=False
    )


def renormalize_subensemble(p_corrected: np.ndarray) -> tuple[float, float, float]:
    """Condition on surviving the |g> outcome: (P(+a), P(-a)) / (P(+a)+P(-a)).

    Returns (p_plus_n, p_minus_n, success) with success = P(+a) + P(-a).
    """
    p = np.asarray(p_corrected, dtype=float)
    success = float(p[1] + p[2])
    if success <= 1e-12:
        raise PostselectionError("postselected tomography ensemble is empty")
    return p[1] / success, p[2] / success, success


def reconstruct_density(
    pn_x: tuple[float, float],
    pn_y: tuple[float, float],
    pn_z: tuple[float, float],
) -> np.ndarray:
    """Two-level state from renormalized (+a, -a) pairs via the Bloch expansion.

    Components follow BLOCH_SIGN_CONVENTION; a shot-noise Bloch vector outside
    the unit ball is radially projected onto it.
    """
    components = []
    for pair in (pn_x, pn_y, pn_z):
        if abs(pair[0] + pair[1] - 1.0) > 1e-9 or pair[0] < -1e-12 or pair[1] < -1e-12:
            raise ValueError(f"not a normalized outcome pair: {pair}")
        components.append(2.0 * pair[0] - 1.0)
    r = np.array(components)
    r_norm = np.linalg.norm(r)
    if r_norm > 1.0:
        r = r / r_norm
    rho = 0.5 * (np.eye(2, dtype=complex)
                 + r[0] * pauli("x") + r[1] * pauli("y") + r[2] * pauli("z"))
    return rho


def reconstruct_diag3(p: np.ndarray) -> np.ndarray:
    """Population-only qutrit state diag(P(g), P(e), P(f))."""
    return np.diag(check_probability_vector(p)).astype(complex)


def renormalization_factor(p_g: float) -> float:
    """Postselection weight 1 / (1 - P(g)); diverges as the ensemble empties."""
    if not 0.0 <= p_g < 1.0:
        raise ValueError(f"P(g) = {p_g} outside [0, 1)")
    return 1.0 / (1.0 - p_g)


def bloch_vector(rho_ef: np.ndarray) -> np.ndarray:
    """(x, y, z) expectation values of a two-level density matrix."""
    return np.array([np.trace(rho_ef @ pauli(a)).real for a in AXES])


def write_counts_csv(path, records) -> None:
    """Write tomography counts in the external ingestion format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COUNTS_CSV_HEADER)
        for rec in records:
            if rec.exact or rec.shots <= 0:
                raise ValueError("counts CSV stores finite-shot records only")
            writer.writerow([rec.axis, rec.shots, *map(int, rec.counts)])


def read_counts_csv(source) -> list[CountsRecord]:
    """Parse the external counts format, validating every row.

    `source` is a path or a text stream.  Raises IngestError with the
    offending row number on malformed data.
    """
    if hasattr(source, "read"):
        return _parse_counts(source)
    with open(source, "r", encoding="utf-8", newline="") as fh:
        return _parse_counts(fh)


def _parse_counts(fh: io.TextIOBase) -> list[CountsRecord]:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("counts CSV is empty") from None
    header = tuple(h.strip() for h in header)
    if header != COUNTS_CSV_HEADER:
        missing = [c for c in COUNTS_CSV_HEADER if c not in header]
        raise IngestError(
            f"bad counts header {header!r}; missing column(s) {missing or header}"
        )
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 5:
            raise IngestError(f"row {lineno}: expected 5 fields, got {len(row)}")
        axis = row[0].strip().lower()
        if axis not in AXES:
            raise IngestError(f"row {lineno}: unknown axis {row[0]!r}")
        try:
            shots = int(row[1])
            counts = np.array([int(c) for c in row[2:]], dtype=np.int64)
        except ValueError as exc:
            raise IngestError(f"row {lineno}: {exc}") from None
        if shots <= 0:
            raise IngestError(f"row {lineno}: shots must be positive")
        if np.any(counts < 0) or counts.sum() != shots:
            raise IngestError(f"row {lineno}: counts {counts.tolist()} do not sum to shots={shots}")
        records.append(CountsRecord(axis=axis, shots=shots, counts=counts))
    if not records:
        raise IngestError("counts CSV has no data rows")
    return records
