"""Linearity diagnostics of the postselected dynamics.

The central comparison: propagate a superposition state directly, and
separately superpose the individually propagated basis states; their overlap
(a Fubini-Study fidelity) is 1 under linear evolution and drops below 1 when
trajectory-dependent postselection renormalization breaks superposition.

Two execution modes keep physics and instrumentation separable: "ideal" works
with exact conditioned kets, "measured" pushes every state through the full
simulated pipeline (Lindblad evolution, confused finite-shot tomography,
Bayesian unfolding, reconstruction, purification).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import PostselectionError, SystemParams, derive_seed, eig_hermitian, fix_global_phase
from .dynamics import (
    build_effective_hamiltonian,
    build_three_level_model,
    conditional_ef_state,
    embed_ef_density,
    evolve_lindblad_series,
    initial_ket,
    projector,
    propagate_nonhermitian,
)
from .measurement import (
    ConfusionMatrix,
    ibu_correct,
    reconstruct_density,
    renormalize_subensemble,
    simulate_tomography,
)

PURIFY_DEGENERACY_GAP = 1e-12

# Superposition weights realizing each initial state from (|e>, |f>).
SUPERPOSITION_WEIGHTS = {
    "+x": (1.0 / np.sqrt(2), 1.0 / np.sqrt(2)),
    "+y": (1.0 / np.sqrt(2), 1.0j / np.sqrt(2)),
}


@dataclass(frozen=True)
class PureTrajectory:
    """Pure-state trajectory on the (|e>, |f>) manifold.

    Kets are normalized and carry a deterministic phase: the physical
    propagator phase in ideal mode, and a time-continuous phase anchored at
    the exact t=0 preparation in measured mode.  Relative phases between
    trajectories are meaningful; superpositions rely on them.
    """

    times: np.ndarray
    kets: np.ndarray          # (n_times, 2), each normalized
    source: str               # initial-state label


@dataclass(frozen=True)
class LinearityScanResult:
    times: np.ndarray
    ofs: np.ndarray           # overlap fidelity per time, in [0, 1]
    initial_state: str        # "+x" or "+y"
    J: float
    mode: str


@dataclass(frozen=True)
class MixtureTestResult:
    times: np.ndarray
    p_mixture: np.ndarray     # P(e) from the evolved 50/50 mixture
    p_superposed: np.ndarray  # averaged P(e) of the separately evolved parts
    deviation: np.ndarray     # |p_mixture - p_superposed|
    system: str               # "two_level_postselected" or "three_level_full"


def purify(rho_ef: np.ndarray) -> tuple[np.ndarray, bool]:
    """Pure-state projection: the eigenvector of the larger eigenvalue.

    Returns (ket, degenerate).  At an eigenvalue tie (maximally mixed state,
    gap below PURIFY_DEGENERACY_GAP) the deterministic tie-break |e> is
    returned with the degenerate flag set, so scans never crash there.
    """
    evals, vecs = eig_hermitian(rho_ef)
    if evals[-1] - evals[0] < PURIFY_DEGENERACY_GAP:
        return np.array([1.0, 0.0], dtype=complex), True
    return fix_global_phase(vecs[:, -1]), False


def superpose(
    psi_a: np.ndarray, psi_b: np.ndarray, alpha: complex, beta: complex
) -> tuple[np.ndarray, float]:
    """Normalized alpha*psi_a + beta*psi_b and its normalization factor.

    The factor a_s makes a_s*(alpha psi_a + beta psi_b)/sqrt(|alpha|^2+|beta|^2)
    a unit vector; it is 1 for orthonormal inputs and grows as the branches
    become antiparallel.  Raises on cancellation below threshold.
    """
    combined = alpha * np.asarray(psi_a) + beta * np.asarray(psi_b)
    nrm = np.linalg.norm(combined)
    if nrm <= 1e-12:
        raise PostselectionError("superposition branches cancel (antiparallel inputs)")
    a_s = float(np.sqrt(abs(alpha) ** 2 + abs(beta) ** 2) / nrm)
    return combined / nrm, a_s


def ofs(psi_measured: np.ndarray, psi_superposed: np.ndarray) -> float:
    """Overlap fidelity |<superposed|measured>| with both arguments normalized.

    The modulus makes the metric independent of either argument's global
    phase convention.
    """
    a = np.asarray(psi_measured) / np.linalg.norm(psi_measured)
    b = np.asarray(psi_superposed) / np.linalg.norm(psi_superposed)
    return float(abs(np.vdot(b, a)))


def ideal_pure_trajectory(params: SystemParams, source: str, times: np.ndarray) -> PureTrajectory:
    """Conditioned kets from exact no-jump propagation of a named initial state.

    The propagator phase is kept as is; re-fixing each ket separately would
    scramble the relative phase between trajectories that the superposition
    construction depends on.
    """
    h_eff = build_effective_hamiltonian(params)
    psi0 = initial_ket(source)
    kets = np.empty((len(times), 2), dtype=complex)
    for k, t in enumerate(times):
        psi, _ = propagate_nonhermitian(psi0, h_eff, float(t))
        kets[k] = psi
    return PureTrajectory(times=np.asarray(times, dtype=float), kets=kets, source=source)


MEASURED_IBU_ITERATIONS = 2000


def measured_pure_trajectory(
    params: SystemParams,
    source: str,
    times: np.ndarray,
    beta: ConfusionMatrix,
    shots: int,
    seed: int = 0,
    dt: float = 1e-3,
    ibu_iterations: int = MEASURED_IBU_ITERATIONS,
) -> PureTrajectory:
    """Conditioned kets through the full simulated measurement pipeline.

    Lindblad evolution of the embedded preparation, axis-wise tomography with
    classifier confusion and finite shots, Bayesian unfolding, sub-ensemble
    renormalization, Bloch reconstruction and purification.  Each (time, axis)
    setting draws its own derived seed, mimicking independent experiments.

    Purification loses the global phase, so phases are rebuilt by parallel
    transport: the t=0 ket is rotated to a real positive overlap with the
    known preparation, and each later ket to a real positive overlap with its
    predecessor.  This recovers the physical relative phase between
    trajectories up to the grid resolving the motion.

    The unfolding runs far deeper than the 50-iteration operation default:
    near-pure states put exact zeros on the simplex boundary, where the
    Bayesian update converges only like 1/n, and the leftover bias would
    otherwise wobble the transported phases.
    """
    times = np.asarray(times, dtype=float)
    model = build_three_level_model(params)
    rho0 = embed_ef_density(projector(initial_ket(source)))
    rho3s = evolve_lindblad_series(rho0, model, times, dt=dt)
    kets = np.empty((len(times), 2), dtype=complex)
    stream = 0
    for k, rho3 in enumerate(rho3s):
        pairs = {}
        for axis in ("x", "y", "z"):
            rec = simulate_tomography(rho3, axis, beta, shots, seed=derive_seed(seed, stream))
            stream += 1
            corrected = ibu_correct(rec.frequencies(), beta, n_iter=ibu_iterations)
            pairs[axis] = renormalize_subensemble(corrected)[:2]
        rho_ef = reconstruct_density(pairs["x"], pairs["y"], pairs["z"])
        kets[k], _ = purify(rho_ef)
        reference = initial_ket(source) if k == 0 else kets[k - 1]
        overlap = np.vdot(kets[k], reference)
        if abs(overlap) > 1e-12:
            kets[k] = kets[k] * (overlap / abs(overlap))
    return PureTrajectory(times=times, kets=kets, source=source)


def linearity_scan(
    params: SystemParams,
    initial: str,
    times: np.ndarray,
    mode: str = "ideal",
    beta: ConfusionMatrix | None = None,
    shots: int = 0,
    seed: int = 0,
) -> LinearityScanResult:
    """Overlap fidelity between the evolved superposition and the superposed evolutions.

    For initial "+x" the superposition weights are (1, 1)/sqrt(2), for "+y"
    (1, i)/sqrt(2).  mode="ideal" uses exact conditioned kets; mode="measured"
    reconstructs every ket through the simulated tomography pipeline.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times grid is empty")
    if initial not in SUPERPOSITION_WEIGHTS:
        raise ValueError(f"initial state must be '+x' or '+y', got {initial!r}")
    alpha, w_beta = SUPERPOSITION_WEIGHTS[initial]

    if mode == "ideal":
        trajectories = {
            src: ideal_pure_trajectory(params, src, times) for src in (initial, "e", "f")
        }
    elif mode == "measured":
        if beta is None:
            raise ValueError("measured mode requires a confusion matrix")
        trajectories = {
            src: measured_pure_trajectory(params, src, times, beta, shots,
                                          seed=derive_seed(seed, n))
            for n, src in enumerate((initial, "e", "f"))
        }
    else:
        raise ValueError(f"unknown mode {mode!r}")

    values = np.empty(times.size)
    for k in range(times.size):
        psi_s, _ = superpose(trajectories["e"].kets[k], trajectories["f"].kets[k], alpha, w_beta)
        values[k] = ofs(trajectories[initial].kets[k], psi_s)
    return LinearityScanResult(times=times, ofs=values, initial_state=initial,
                               J=params.J, mode=mode)


def renorm_ratio_series(
    params: SystemParams, times: np.ndarray
) -> tuple[np.ndarray, float]:
    """Postselection-weight ratio r_f / r_e over time and its mean.

    r_i(t) = 1 / (1 - P(g)) = 1 / survival for initialization in |i>; the
    ratio oscillates around 1 in the unbroken regime and decays below 1 in
    the broken regime.  The time average is the plain mean over the grid.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times grid is empty")
    h_eff = build_effective_hamiltonian(params)
    ratio = np.empty(times.size)
    for k, t in enumerate(times):
        _, surv_e = propagate_nonhermitian(initial_ket("e"), h_eff, float(t))
        _, surv_f = propagate_nonhermitian(initial_ket("f"), h_eff, float(t))
        ratio[k] = surv_e / surv_f   # r_f / r_e = (1/surv_f) / (1/surv_e)
    return ratio, float(ratio.mean())


def _mixture_preparations() -> dict[str, np.ndarray]:
    # The 50/50 +x/-x mixture equals the identity block exactly.
    return {
        "e": embed_ef_density(projector(initial_ket("e"))),
        "f": embed_ef_density(projector(initial_ket("f"))),
        "m": embed_ef_density(np.eye(2, dtype=complex) / 2),
    }


def mixture_test_2level(
    params: SystemParams, times: np.ndarray, dt: float = 1e-3
) -> MixtureTestResult:
    """Classical-mixture linearity test in the postselected two-level system.

    Evolves |e><e|, |f><f| and the 50/50 mixture under the full three-level
    model, conditions each on not-|g>, and compares the conditioned P(e) of
    the mixture to the average of the separately conditioned parts.  The
    state-dependent renormalization makes these disagree.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times grid is empty")
    model = build_three_level_model(params)
    preps = _mixture_preparations()
    p_e = {}
    for name, rho0 in preps.items():
        rho3s = evolve_lindblad_series(rho0, model, times, dt=dt)
        p_e[name] = np.array([conditional_ef_state(r)[0][0, 0].real for r in rho3s])
    p_superposed = 0.5 * p_e["e"] + 0.5 * p_e["f"]
    return MixtureTestResult(
        times=times,
        p_mixture=p_e["m"],
        p_superposed=p_superposed,
        deviation=np.abs(p_e["m"] - p_superposed),
        system="two_level_postselected",
    )


def mixture_test_3level(
    params: SystemParams, times: np.ndarray, dt: float = 1e-3
) -> MixtureTestResult:
    """Same preparations without postselection: the full map stays linear.

    Compares the un-postselected P(e) of the evolved mixture to the average
    of the separately evolved parts; the deviation is bounded by integrator
    rounding.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times grid is empty")
    model = build_three_level_model(params)
    preps = _mixture_preparations()
    p_e = {}
    for name, rho0 in preps.items():
        rho3s = evolve_lindblad_series(rho0, model, times, dt=dt)
        p_e[name] = np.array([r[1, 1].real for r in rho3s])
    p_superposed = 0.5 * p_e["e"] + 0.5 * p_e["f"]
    return MixtureTestResult(
        times=times,
        p_mixture=p_e["m"],
        p_superposed=p_superposed,
        deviation=np.abs(p_e["m"] - p_superposed),
        system="three_level_full",
    )
