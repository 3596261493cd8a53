"""Time evolution of the dissipative qutrit.

Three routes are implemented and cross-checked against each other:

- full Lindblad integration of the 3x3 density matrix (fixed-step RK4),
- exact propagation of the no-jump conditioned two-level state under the
  non-Hermitian effective Hamiltonian (normalized at readout, which solves
  the equivalent nonlinear Schrodinger equation),
- Monte Carlo wavefunction sampling of individual jump trajectories with
  postselection on "no jump into |g>".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qcore import (
    PostselectionError,
    SystemParams,
    derive_seed,
    matrix_exponential,
    norm_squared,
)

DEFAULT_DT = 1e-3  # us; aligned time grids matter more than adaptivity here

SURVIVAL_FLOOR = 1e-300
SUCCESS_FLOOR = 1e-12


@dataclass(frozen=True)
class Dissipator:
    """A decay channel; the rate is folded into the operator, L = sqrt(rate)*|to><from|."""

    label: str
    operator: np.ndarray


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: np.ndarray
    dissipators: tuple[Dissipator, ...]

    def __post_init__(self) -> None:
        dim = self.hamiltonian.shape[0]
        if self.hamiltonian.shape != (dim, dim):
            raise ValueError("hamiltonian must be square")
        for d in self.dissipators:
            if d.operator.shape != (dim, dim):
                raise ValueError(f"dissipator {d.label!r} dimension mismatch")

    def no_jump_generator(self) -> np.ndarray:
        """H - (i/2) sum_j L_j^dag L_j, generating evolution between jumps."""
        h = self.hamiltonian.astype(complex).copy()
        for d in self.dissipators:
            h = h - 0.5j * (d.operator.conj().T @ d.operator)
        return h


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """2x2 non-Hermitian generator of the conditioned (|e>, |f>) dynamics."""

    matrix: np.ndarray
    params: SystemParams

    def __post_init__(self) -> None:
        expected = np.array(
            [[self.params.Delta - 0.5j * self.params.gamma_e, self.params.J],
             [self.params.J, 0.0]]
        )
        if np.max(np.abs(self.matrix - expected)) > 1e-15:
            raise ValueError("matrix does not match the effective form for these parameters")


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray          # us, includes 0 and the horizon
    states: np.ndarray         # (n_times, dim) normalized conditional kets
    jumps: tuple[tuple[float, str], ...]  # (time, channel label), sorted
    postselected: bool         # no jump into |g> by the horizon

    @property
    def jump_count(self) -> int:
        return len(self.jumps)


def build_effective_hamiltonian(params: SystemParams) -> EffectiveHamiltonian:
    """[[Delta - i*gamma_e/2, J], [J, 0]] on the (|e>, |f>) manifold."""
    m = np.array(
        [[params.Delta - 0.5j * params.gamma_e, params.J], [params.J, 0.0]],
        dtype=complex,
    )
    return EffectiveHamiltonian(matrix=m, params=params)


def pt_decompose(h_eff: EffectiveHamiltonian) -> tuple[complex, np.ndarray]:
    """Split off the uniform decay: H_eff = shift*1 + H_PT with shift = -i*gamma_e/4.

    H_PT has balanced gain and loss (+-i*gamma_e/4 on the diagonal) and carries
    the PT-breaking transition of the conditioned dynamics.
    """
    shift = -0.25j * h_eff.params.gamma_e
    h_pt = h_eff.matrix - shift * np.eye(2)
    return shift, h_pt


def build_three_level_model(params: SystemParams) -> LindbladModel:
    """Driven (|e>, |f>) transition plus the two decay channels, in the qutrit space."""
    h = np.zeros((3, 3), dtype=complex)
    h[1, 1] = params.Delta
    h[1, 2] = h[2, 1] = params.J
    l_e = np.zeros((3, 3), dtype=complex)
    l_e[0, 1] = np.sqrt(params.gamma_e)   # |g><e|
    l_f = np.zeros((3, 3), dtype=complex)
    l_f[1, 2] = np.sqrt(params.gamma_f)   # |e><f|
    return LindbladModel(
        hamiltonian=h,
        dissipators=(Dissipator("e", l_e), Dissipator("f", l_f)),
    )


def lindblad_rhs(rho: np.ndarray, model: LindbladModel) -> np.ndarray:
    """-i[H, rho] + sum_j (L_j rho L_j^dag - (1/2){L_j^dag L_j, rho})."""
    h = model.hamiltonian
    drho = -1j * (h @ rho - rho @ h)
    for d in model.dissipators:
        ld = d.operator.conj().T
        ldl = ld @ d.operator
        drho = drho + d.operator @ rho @ ld - 0.5 * (ldl @ rho + rho @ ldl)
    return drho


def _rk4_step(rho: np.ndarray, model: LindbladModel, dt: float) -> np.ndarray:
    k1 = lindblad_rhs(rho, model)
    k2 = lindblad_rhs(rho + 0.5 * dt * k1, model)
    k3 = lindblad_rhs(rho + 0.5 * dt * k2, model)
    k4 = lindblad_rhs(rho + dt * k3, model)
    return rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _integrate_to(rho: np.ndarray, model: LindbladModel, span: float, dt: float) -> np.ndarray:
    n_full = int(span / dt)
    for _ in range(n_full):
        rho = _rk4_step(rho, model, dt)
    rem = span - n_full * dt
    if rem > 1e-12 * max(dt, 1.0):
        rho = _rk4_step(rho, model, rem)
    return rho


def evolve_lindblad(
    rho0: np.ndarray, model: LindbladModel, t: float, dt: float = DEFAULT_DT
) -> np.ndarray:
    """Integrate the master equation to time t with fixed-step RK4.

    The final partial step is shortened to land exactly on t; the result is
    re-Hermitized once at the end (never in the loop, so integrator drift
    stays visible).
    """
    return evolve_lindblad_series(rho0, model, np.array([t]), dt)[0]


def evolve_lindblad_series(
    rho0: np.ndarray, model: LindbladModel, times: np.ndarray, dt: float = DEFAULT_DT
) -> np.ndarray:
    """Single integration pass recording rho at each requested time (ascending)."""
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times grid is empty")
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValueError("times must be nonnegative and ascending")
    if dt <= 0:
        raise ValueError("dt must be positive")
    rho = np.asarray(rho0, dtype=complex).copy()
    out = np.empty((times.size, *rho.shape), dtype=complex)
    t_prev = 0.0
    for k, t_k in enumerate(times):
        rho = _integrate_to(rho, model, t_k - t_prev, dt)
        out[k] = 0.5 * (rho + rho.conj().T)
        t_prev = t_k
    return out


def _require_normalized(psi: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if abs(norm_squared(psi) - 1.0) > atol:
        raise ValueError(f"state must be normalized, |psi|^2 = {norm_squared(psi)}")
    return psi


def propagate_nonhermitian(
    psi0: np.ndarray, h_eff: EffectiveHamiltonian, t: float
) -> tuple[np.ndarray, float]:
    """Exact no-jump conditioned state at time t and its survival probability.

    phi = exp(-i H_eff t) psi0 decays in norm; survival = |phi|^2 is the
    probability that no jump into |g> occurred, and phi/|phi| is the exact
    solution of the norm-preserving nonlinear evolution.
    """
    phi = matrix_exponential(h_eff.matrix, t) @ _require_normalized(psi0)
    survival = norm_squared(phi)
    if survival < SURVIVAL_FLOOR:
        raise PostselectionError(f"survival probability underflow at t={t}")
    return phi / np.sqrt(survival), survival


def anti_hermitian_decay_part(h_eff: EffectiveHamiltonian) -> np.ndarray:
    """The Hermitian decay operator G with H_eff = H_herm - i*G; G = i(H_eff - H_eff^dag)/2."""
    m = h_eff.matrix
    return 0.5j * (m - m.conj().T)


def integrate_nonlinear_schrodinger(
    psi0: np.ndarray, h_eff: EffectiveHamiltonian, t: float, dt: float = DEFAULT_DT
) -> np.ndarray:
    """RK4 on i d/dt psi = (H_eff + i <psi|G|psi>) psi, without renormalizing.

    The state-dependent term cancels the norm decay, so the norm drift of the
    result measures integrator error directly.  Cross-validates the closed
    form in propagate_nonhermitian.
    """
    decay = anti_hermitian_decay_part(h_eff)
    gen = -1j * h_eff.matrix

    def rhs(psi: np.ndarray) -> np.ndarray:
        return gen @ psi + np.vdot(psi, decay @ psi) * psi

    psi = _require_normalized(psi0).copy()
    remaining = t
    while remaining > 1e-12 * max(dt, 1.0):
        h = min(dt, remaining)
        k1 = rhs(psi)
        k2 = rhs(psi + 0.5 * h * k1)
        k3 = rhs(psi + 0.5 * h * k2)
        k4 = rhs(psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        remaining -= h
    return psi


def conditional_ef_state(rho3: np.ndarray) -> tuple[np.ndarray, float]:
    """Renormalized (|e>, |f>) block of a qutrit state, conditioned on not-|g>.

    success = 1 - <g|rho|g> is the postselection probability; raises when the
    conditioned ensemble is (numerically) empty.
    """
    success = float(1.0 - rho3[0, 0].real)
    if success < SUCCESS_FLOOR:
        raise PostselectionError("postselected ensemble is empty (all population in |g>)")
    return rho3[1:, 1:] / success, success


def _grid(horizon: float, dt: float) -> np.ndarray:
    if horizon < 0 or dt <= 0:
        raise ValueError("horizon must be >= 0 and dt > 0")
    n_full = int(horizon / dt)
    times = [k * dt for k in range(n_full + 1)]
    if horizon - n_full * dt > 1e-12 * max(dt, 1.0):
        times.append(horizon)
    return np.array(times)


def sample_jump_trajectory(
    psi0: np.ndarray,
    model: LindbladModel,
    horizon: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
) -> TrajectoryRecord:
    """One Monte Carlo wavefunction trajectory, deterministic given the seed.

    Norm-threshold (waiting time) sampling: the unnormalized state evolves
    under the no-jump generator until its squared norm falls below a pre-drawn
    uniform threshold; then a channel fires with probability proportional to
    <psi|L^dag L|psi>, the state resets to the normalized L psi, and a fresh
    threshold is drawn.  The record is postselected iff the dissipator
    labeled "e" (the decay into |g>) never fired.
    """
    rng = np.random.default_rng(seed)
    times = _grid(horizon, dt)
    gen = model.no_jump_generator()
    props = {}  # step-size -> propagator; the uniform grid has few distinct steps

    psi = _require_normalized(psi0).copy()
    states = np.empty((times.size, psi.size), dtype=complex)
    states[0] = psi / np.sqrt(norm_squared(psi))
    jumps: list[tuple[float, str]] = []
    threshold = rng.uniform()

    for k in range(1, times.size):
        step = times[k] - times[k - 1]
        if step not in props:
            props[step] = matrix_exponential(gen, step)
        psi = props[step] @ psi
        if norm_squared(psi) < threshold:
            psi, label = _apply_jump(psi, model, rng)
            jumps.append((float(times[k]), label))
            threshold = rng.uniform()
        states[k] = psi / np.sqrt(norm_squared(psi))

    return TrajectoryRecord(
        times=times,
        states=states,
        jumps=tuple(jumps),
        postselected=not any(label == "e" for _, label in jumps),
    )


def _apply_jump(
    psi: np.ndarray, model: LindbladModel, rng: np.random.Generator
) -> tuple[np.ndarray, str]:
    weights = np.array([norm_squared(d.operator @ psi) for d in model.dissipators])
    total = weights.sum()
    if total <= 0:
        raise RuntimeError("jump fired with zero total jump rate")
    u = rng.uniform() * total
    idx = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    idx = min(idx, len(weights) - 1)
    jumped = model.dissipators[idx].operator @ psi
    return jumped / np.sqrt(norm_squared(jumped)), model.dissipators[idx].label


@dataclass(frozen=True)
class JumpEnsembleStats:
    """Reductions over a seeded trajectory ensemble at the recording grid."""

    times: np.ndarray
    n_traj: int
    postselected: np.ndarray    # (n_traj,) bool
    jump_counts: np.ndarray     # (n_traj,) int
    mean_rho: np.ndarray        # (n_times, dim, dim), over all trajectories
    sem_rho: np.ndarray         # complex: standard errors of Re and Im parts
    kept_counts: np.ndarray     # (n_times,) trajectories with no e-jump by t
    bloch_mean: np.ndarray      # (n_times, 3) conditioned <sigma_x,y,z>
    bloch_sem: np.ndarray       # (n_times, 3)

    @property
    def success_rate(self) -> float:
        return float(np.mean(self.postselected))


def sample_jump_ensemble(
    psi0: np.ndarray,
    model: LindbladModel,
    horizon: float,
    dt: float = DEFAULT_DT,
    seed: int = 0,
    n_traj: int = 1000,
    record_times: np.ndarray | None = None,
) -> JumpEnsembleStats:
    """Vectorized ensemble of jump trajectories.

    Trajectory i consumes the random stream seeded with derive_seed(seed, i)
    in the same draw order as sample_jump_trajectory, so the ensemble is
    reproducible and agrees with per-trajectory runs.  record_times (default:
    the full step grid) are snapped to the nearest integration step.
    """
    times = _grid(horizon, dt)
    if record_times is None:
        record_idx = np.arange(times.size)
    else:
        record_idx = np.array(
            sorted({int(round(t / dt)) for t in np.asarray(record_times, dtype=float)})
        )
        if record_idx[0] < 0 or record_idx[-1] >= times.size:
            raise ValueError("record_times outside the [0, horizon] grid")
    rec_times = times[record_idx]
    rec_positions = {int(i): k for k, i in enumerate(record_idx)}

    gen = model.no_jump_generator()
    props = {}
    dim = psi0.size

    rngs = [np.random.default_rng(derive_seed(seed, i)) for i in range(n_traj)]
    states = np.tile(_require_normalized(psi0), (n_traj, 1))
    thresholds = np.array([r.uniform() for r in rngs])
    e_jump_step = np.full(n_traj, np.iinfo(np.int64).max, dtype=np.int64)
    jump_counts = np.zeros(n_traj, dtype=np.int64)

    n_rec = rec_times.size
    sum_rho = np.zeros((n_rec, dim, dim), dtype=complex)
    sumsq_re = np.zeros((n_rec, dim, dim))
    sumsq_im = np.zeros((n_rec, dim, dim))
    kept_counts = np.zeros(n_rec, dtype=np.int64)
    sum_bloch = np.zeros((n_rec, 3))
    sumsq_bloch = np.zeros((n_rec, 3))

    def record(pos: int, step_index: int) -> None:
        norms = np.sqrt(np.sum(np.abs(states) ** 2, axis=1))
        normed = states / norms[:, None]
        outer = np.einsum("ni,nj->nij", normed, normed.conj())
        sum_rho[pos] += outer.sum(axis=0)
        sumsq_re[pos] += np.sum(outer.real**2, axis=0)
        sumsq_im[pos] += np.sum(outer.imag**2, axis=0)
        kept = e_jump_step > step_index
        kept_counts[pos] = kept.sum()
        if kept.any() and dim == 3:
            ef = normed[kept][:, 1:]
            ef_norm = np.sqrt(np.sum(np.abs(ef) ** 2, axis=1))
            ef = ef[ef_norm > 1e-15] / ef_norm[ef_norm > 1e-15, None]
            cross = ef[:, 0].conj() * ef[:, 1]
            bloch = np.stack(
                [2 * cross.real, 2 * cross.imag, np.abs(ef[:, 0]) ** 2 - np.abs(ef[:, 1]) ** 2],
                axis=1,
            )
            sum_bloch[pos] = bloch.sum(axis=0)
            sumsq_bloch[pos] = (bloch**2).sum(axis=0)

    if 0 in rec_positions:
        record(rec_positions[0], 0)

    for k in range(1, times.size):
        step = times[k] - times[k - 1]
        if step not in props:
            props[step] = matrix_exponential(gen, step)
        states = states @ props[step].T
        norms2 = np.sum(np.abs(states) ** 2, axis=1)
        for i in np.nonzero(norms2 < thresholds)[0]:
            psi_i, label = _apply_jump(states[i], model, rngs[i])
            states[i] = psi_i
            thresholds[i] = rngs[i].uniform()
            jump_counts[i] += 1
            if label == "e":
                e_jump_step[i] = min(e_jump_step[i], k)
        if k in rec_positions:
            record(rec_positions[k], k)

    mean_rho = sum_rho / n_traj
    var_re = np.maximum(sumsq_re / n_traj - mean_rho.real**2, 0.0)
    var_im = np.maximum(sumsq_im / n_traj - mean_rho.imag**2, 0.0)
    sem_rho = (np.sqrt(var_re) + 1j * np.sqrt(var_im)) / np.sqrt(n_traj)

    counts = np.maximum(kept_counts, 1)
    bloch_mean = sum_bloch / counts[:, None]
    bloch_var = np.maximum(sumsq_bloch / counts[:, None] - bloch_mean**2, 0.0)
    bloch_sem = np.sqrt(bloch_var) / np.sqrt(counts[:, None])

    return JumpEnsembleStats(
        times=rec_times,
        n_traj=n_traj,
        postselected=e_jump_step == np.iinfo(np.int64).max,
        jump_counts=jump_counts,
        mean_rho=mean_rho,
        sem_rho=sem_rho,
        kept_counts=kept_counts,
        bloch_mean=bloch_mean,
        bloch_sem=bloch_sem,
    )


def embed_ef_state(psi_ef: np.ndarray) -> np.ndarray:
    """Lift a two-level (|e>, |f>) ket into the qutrit space with zero |g> amplitude."""
    psi = np.zeros(3, dtype=complex)
    psi[1:] = psi_ef
    return psi


def embed_ef_density(rho_ef: np.ndarray) -> np.ndarray:
    """Lift a two-level density matrix into the qutrit space."""
    rho = np.zeros((3, 3), dtype=complex)
    rho[1:, 1:] = rho_ef
    return rho


def projector(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def initial_ket(label: str) -> np.ndarray:
    """Named preparations on the (|e>, |f>) manifold: e, f, +x, -x, +y, -y."""
    table = {
        "e": np.array([1.0, 0.0]),
        "f": np.array([0.0, 1.0]),
        "+x": np.array([1.0, 1.0]) / np.sqrt(2),
        "-x": np.array([1.0, -1.0]) / np.sqrt(2),
        "+y": np.array([1.0, 1.0j]) / np.sqrt(2),
        "-y": np.array([1.0, -1.0j]) / np.sqrt(2),
    }
    if label not in table:
        raise ValueError(f"unknown initial state {label!r}")
    return table[label].astype(complex)
