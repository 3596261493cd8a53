import math

import numpy as np
import pytest

from nojump.qcore import PostselectionError, SystemParams, basis_ket, norm_squared
from nojump import dynamics
from nojump.dynamics import (
    build_effective_hamiltonian,
    build_three_level_model,
    conditional_ef_state,
    embed_ef_density,
    embed_ef_state,
    evolve_lindblad,
    evolve_lindblad_series,
    initial_ket,
    integrate_nonlinear_schrodinger,
    lindblad_rhs,
    projector,
    propagate_nonhermitian,
    pt_decompose,
    sample_jump_ensemble,
    sample_jump_trajectory,
)

PARAMS = SystemParams(gamma_e=0.91, gamma_f=0.057, J=0.24, Delta=0.0)


def test_effective_hamiltonian_matrix():
    h = build_effective_hamiltonian(SystemParams(gamma_e=0.0, gamma_f=0.0, J=1.0))
    assert np.array_equal(h.matrix, [[0, 1], [1, 0]])

    h = build_effective_hamiltonian(PARAMS)
    assert np.array_equal(h.matrix, [[-0.455j, 0.24], [0.24, 0.0]])
    assert np.trace(h.matrix) == PARAMS.Delta - 0.5j * PARAMS.gamma_e


def test_effective_hamiltonian_rejects_mismatched_matrix():
    with pytest.raises(ValueError, match="effective form"):
        dynamics.EffectiveHamiltonian(matrix=np.eye(2, dtype=complex), params=PARAMS)


def test_pt_decompose():
    h = build_effective_hamiltonian(PARAMS)
    shift, h_pt = pt_decompose(h)
    assert shift == -0.2275j
    assert np.array_equal(shift * np.eye(2) + h_pt, h.matrix)
    assert h_pt[1, 1] == 0.25j * PARAMS.gamma_e

    h0 = build_effective_hamiltonian(SystemParams(gamma_e=0.0, gamma_f=0.0, J=0.3))
    shift0, h_pt0 = pt_decompose(h0)
    assert shift0 == 0.0
    assert np.array_equal(h_pt0, h0.matrix)


def test_three_level_model_structure():
    model = build_three_level_model(PARAMS)
    h = model.hamiltonian
    assert h[0, 0] == 0 and np.all(h[0, 1:] == 0) and np.all(h[1:, 0] == 0)
    assert h[1, 2] == h[2, 1] == PARAMS.J
    assert h[1, 1] == PARAMS.Delta
    l_e, l_f = (d.operator for d in model.dissipators)
    ratio = np.sum(np.abs(l_f) ** 2) / np.sum(np.abs(l_e) ** 2)
    assert abs(ratio - PARAMS.gamma_f / PARAMS.gamma_e) < 1e-15


def test_lindblad_rhs_dark_state():
    model = build_three_level_model(PARAMS)
    rho_g = projector(basis_ket("g", 3))
    assert np.max(np.abs(lindblad_rhs(rho_g, model))) == 0.0


def test_lindblad_rhs_pure_decay_rates():
    model = build_three_level_model(SystemParams(gamma_e=0.91, gamma_f=0.3, J=0.0))
    drho = lindblad_rhs(projector(basis_ket("e", 3)), model)
    assert abs(drho[1, 1].real + 0.91) < 1e-14
    assert abs(drho[0, 0].real - 0.91) < 1e-14
    drho = lindblad_rhs(projector(basis_ket("f", 3)), model)
    assert abs(drho[2, 2].real + 0.3) < 1e-14
    assert abs(drho[1, 1].real - 0.3) < 1e-14


def test_lindblad_rhs_traceless():
    rng = np.random.default_rng(2)
    model = build_three_level_model(PARAMS)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    assert abs(np.trace(lindblad_rhs(rho, model))) < 1e-14


def test_evolve_lindblad_identity_at_t0():
    rho0 = projector(basis_ket("e", 3))
    out = evolve_lindblad(rho0, build_three_level_model(PARAMS), 0.0)
    assert np.max(np.abs(out - rho0)) < 1e-15


def test_evolve_lindblad_exponential_decay():
    model = build_three_level_model(SystemParams(gamma_e=0.91, gamma_f=0.0, J=0.0))
    rho = evolve_lindblad(projector(basis_ket("e", 3)), model, 2.5)
    assert abs(rho[1, 1].real - math.exp(-0.91 * 2.5)) < 1e-9


def test_evolve_lindblad_rabi_oscillation():
    model = build_three_level_model(SystemParams(gamma_e=0.0, gamma_f=0.0, J=0.4))
    times = np.array([0.7, 1.9, 3.0])
    rhos = evolve_lindblad_series(projector(basis_ket("e", 3)), model, times)
    for t, rho in zip(times, rhos):
        assert abs(rho[2, 2].real - math.sin(0.4 * t) ** 2) < 1e-9


def test_evolve_lindblad_trace_and_positivity_long_horizon():
    model = build_three_level_model(PARAMS)
    rho0 = projector(embed_ef_state(initial_ket("+x")))
    rho = evolve_lindblad(rho0, model, 20.0)
    assert abs(np.trace(rho).real - 1.0) < 1e-9
    assert np.linalg.eigvalsh(rho).min() > -1e-8


def test_evolve_lindblad_is_linear_map():
    model = build_three_level_model(SystemParams(gamma_e=0.91, gamma_f=0.057, J=0.5))
    rho_a = projector(embed_ef_state(initial_ket("+x")))
    rho_b = projector(embed_ef_state(initial_ket("f")))
    alpha = 0.3
    mixed = evolve_lindblad(alpha * rho_a + (1 - alpha) * rho_b, model, 3.0)
    separate = alpha * evolve_lindblad(rho_a, model, 3.0) + (1 - alpha) * evolve_lindblad(
        rho_b, model, 3.0
    )
    assert np.max(np.abs(mixed - separate)) < 1e-9


def test_conditioned_map_is_nonlinear():
    # The conditioned-and-renormalized map must violate the same identity.
    model = build_three_level_model(SystemParams(gamma_e=0.91, gamma_f=0.057, J=0.5))
    rho_a = projector(embed_ef_state(initial_ket("e")))
    rho_b = projector(embed_ef_state(initial_ket("f")))
    t = 3.0
    mixed, _ = conditional_ef_state(evolve_lindblad(0.5 * rho_a + 0.5 * rho_b, model, t))
    cond_a, _ = conditional_ef_state(evolve_lindblad(rho_a, model, t))
    cond_b, _ = conditional_ef_state(evolve_lindblad(rho_b, model, t))
    assert np.max(np.abs(mixed - 0.5 * cond_a - 0.5 * cond_b)) > 1e-3


def test_propagate_nonhermitian_unitary_limit():
    h = build_effective_hamiltonian(SystemParams(gamma_e=0.0, gamma_f=0.0, J=0.4))
    for t in (0.5, 3.0, 10.0):
        _, survival = propagate_nonhermitian(initial_ket("+x"), h, t)
        assert abs(survival - 1.0) < 1e-12


def test_propagate_nonhermitian_dark_state():
    h = build_effective_hamiltonian(SystemParams(gamma_e=0.91, gamma_f=0.0, J=0.0))
    psi, survival = propagate_nonhermitian(initial_ket("f"), h, 5.0)
    assert abs(survival - 1.0) < 1e-12
    assert np.max(np.abs(psi - initial_ket("f"))) < 1e-12


def test_propagate_nonhermitian_full_transfer_time():
    # The conditioned |e> population vanishes when tan(J't) = 4J'/gamma.
    gamma, j = 0.91, 0.24
    j_prime = math.sqrt(j**2 - gamma**2 / 16)
    t_star = math.atan(4 * j_prime / gamma) / j_prime
    h = build_effective_hamiltonian(SystemParams(gamma_e=gamma, gamma_f=0.0, J=j))
    psi, _ = propagate_nonhermitian(initial_ket("e"), h, t_star)
    assert abs(psi[1]) ** 2 > 1.0 - 1e-12
    assert abs(t_star - 4.2405) < 1e-4


def test_propagate_nonhermitian_underflow():
    h = build_effective_hamiltonian(SystemParams(gamma_e=5.0, gamma_f=0.0, J=0.0))
    with pytest.raises(PostselectionError):
        propagate_nonhermitian(initial_ket("e"), h, 400.0)


def test_propagation_rejects_unnormalized_state():
    h = build_effective_hamiltonian(PARAMS)
    with pytest.raises(ValueError, match="normalized"):
        propagate_nonhermitian(np.array([1.0, 1.0]), h, 1.0)
    with pytest.raises(ValueError, match="normalized"):
        sample_jump_trajectory(np.array([0.5, 0.0, 0.0]),
                               build_three_level_model(PARAMS), 1.0)


def test_anti_hermitian_decay_part_is_diagonal_loss():
    # For the standard effective Hamiltonian the decay operator is
    # diag(gamma_e/2, 0); the general formula must reproduce it.
    h = build_effective_hamiltonian(PARAMS)
    decay = dynamics.anti_hermitian_decay_part(h)
    assert np.allclose(decay, np.diag([PARAMS.gamma_e / 2, 0.0]), atol=1e-15)
    assert np.max(np.abs(decay - decay.conj().T)) < 1e-15


def test_nonlinear_integrator_matches_unitary_limit():
    params = SystemParams(gamma_e=0.0, gamma_f=0.0, J=0.4)
    h = build_effective_hamiltonian(params)
    psi = integrate_nonlinear_schrodinger(initial_ket("e"), h, 2.0, dt=1e-3)
    expected, _ = propagate_nonhermitian(initial_ket("e"), h, 2.0)
    overlap = abs(np.vdot(expected, psi / np.sqrt(norm_squared(psi))))
    assert overlap > 1 - 1e-10


def test_nonlinear_integrator_fourth_order_convergence():
    h = build_effective_hamiltonian(PARAMS)
    exact, _ = propagate_nonhermitian(initial_ket("e"), h, 2.0)

    def error(dt):
        psi = integrate_nonlinear_schrodinger(initial_ket("e"), h, 2.0, dt=dt)
        psi = psi / np.sqrt(norm_squared(psi))
        return np.max(np.abs(psi - exact))

    ratio = error(0.08) / error(0.04)
    assert 10 < ratio < 24   # ~16x for a 4th-order scheme


def test_nonlinear_integrator_agrees_with_closed_form():
    h = build_effective_hamiltonian(PARAMS)
    psi = integrate_nonlinear_schrodinger(initial_ket("e"), h, 6.0, dt=1e-3)
    drift = abs(norm_squared(psi) - 1.0)
    assert drift < 6 * 1e-8   # < 1e-8 per unit time
    expected, _ = propagate_nonhermitian(initial_ket("e"), h, 6.0)
    overlap = abs(np.vdot(expected, psi / np.sqrt(norm_squared(psi))))
    assert overlap > 1 - 1e-6


def test_survival_matches_lindblad_ground_population():
    params = SystemParams(gamma_e=0.91, gamma_f=0.0, J=0.24)
    h = build_effective_hamiltonian(params)
    model = build_three_level_model(params)
    rho = evolve_lindblad(projector(embed_ef_state(initial_ket("e"))), model, 4.0)
    _, survival = propagate_nonhermitian(initial_ket("e"), h, 4.0)
    assert abs(survival - (1.0 - rho[0, 0].real)) < 1e-7


def test_conditional_ef_state_block_renormalization():
    rho_ef, success = conditional_ef_state(np.diag([0.5, 0.25, 0.25]).astype(complex))
    assert success == 0.5
    assert np.allclose(rho_ef, np.diag([0.5, 0.5]))

    rho_ef, success = conditional_ef_state(projector(basis_ket("e", 3)))
    assert success == 1.0
    assert np.allclose(rho_ef, np.diag([1.0, 0.0]))

    with pytest.raises(PostselectionError):
        conditional_ef_state(projector(basis_ket("g", 3)))


@pytest.mark.parametrize("label", ["e", "+x", "+y"])
def test_no_jump_equivalence_oracle(label):
    # With gamma_f = 0, conditioning the Lindblad solution on not-|g> must
    # reproduce the pure non-Hermitian propagation exactly.
    params = SystemParams(gamma_e=0.7, gamma_f=0.0, J=0.3, Delta=0.1)
    model = build_three_level_model(params)
    h = build_effective_hamiltonian(params)
    psi0 = initial_ket(label)
    for t in (0.5, 2.0, 6.0):
        rho3 = evolve_lindblad(projector(embed_ef_state(psi0)), model, t)
        rho_ef, success = conditional_ef_state(rho3)
        psi, survival = propagate_nonhermitian(psi0, h, t)
        assert np.max(np.abs(rho_ef - projector(psi))) < 1e-6
        assert abs(success - survival) < 1e-7


def test_jump_trajectory_no_dissipation():
    model = build_three_level_model(SystemParams(gamma_e=0.0, gamma_f=0.0, J=0.4))
    rec = sample_jump_trajectory(embed_ef_state(initial_ket("e")), model, 3.0, seed=5)
    assert rec.jump_count == 0
    assert rec.postselected
    assert np.all(np.abs(np.sum(np.abs(rec.states) ** 2, axis=1) - 1.0) < 1e-10)


def test_jump_trajectory_deterministic_given_seed():
    model = build_three_level_model(PARAMS)
    a = sample_jump_trajectory(embed_ef_state(initial_ket("e")), model, 4.0, seed=11)
    b = sample_jump_trajectory(embed_ef_state(initial_ket("e")), model, 4.0, seed=11)
    assert a.jumps == b.jumps
    assert np.array_equal(a.states, b.states)


def test_jump_survival_fraction_poisson_decay():
    # J = 0: the no-jump fraction by time t is exp(-gamma_e t).
    params = SystemParams(gamma_e=0.91, gamma_f=0.0, J=0.0)
    model = build_three_level_model(params)
    n = 10_000
    stats = sample_jump_ensemble(
        embed_ef_state(initial_ket("e")), model, 1.0, seed=21, n_traj=n,
        record_times=np.array([1.0]),
    )
    p = math.exp(-0.91)
    assert abs(stats.success_rate - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_ensemble_mean_matches_lindblad():
    model = build_three_level_model(PARAMS)
    times = np.array([0.0, 1.0, 2.0, 4.0])
    stats = sample_jump_ensemble(
        embed_ef_state(initial_ket("e")), model, 4.0, seed=3, n_traj=3000,
        record_times=times,
    )
    rhos = evolve_lindblad_series(projector(embed_ef_state(initial_ket("e"))), model, times)
    for k in range(times.size):
        diff = np.abs(stats.mean_rho[k] - rhos[k])
        band = 3 * (np.abs(stats.sem_rho[k].real) + np.abs(stats.sem_rho[k].imag)) + 1e-9
        assert np.all(diff <= band + np.abs(rhos[k]) * 1e-6)


def test_ensemble_agrees_with_scalar_trajectories():
    params = SystemParams(gamma_e=0.91, gamma_f=0.3, J=0.3)
    model = build_three_level_model(params)
    psi0 = embed_ef_state(initial_ket("e"))
    n = 40
    stats = sample_jump_ensemble(psi0, model, 2.0, seed=77, n_traj=n,
                                 record_times=np.array([2.0]))
    finals = []
    for i in range(n):
        rec = sample_jump_trajectory(psi0, model, 2.0, seed=dynamics.derive_seed(77, i))
        assert rec.postselected == stats.postselected[i]
        assert rec.jump_count == stats.jump_counts[i]
        finals.append(projector(rec.states[-1]))
    assert np.max(np.abs(np.mean(finals, axis=0) - stats.mean_rho[-1])) < 1e-10


def test_jump_times_sorted_within_horizon():
    model = build_three_level_model(SystemParams(gamma_e=2.0, gamma_f=0.5, J=0.5))
    rec = sample_jump_trajectory(embed_ef_state(initial_ket("+x")), model, 5.0, seed=9)
    jump_times = [t for t, _ in rec.jumps]
    assert jump_times == sorted(jump_times)
    assert all(0 < t <= 5.0 for t in jump_times)
    assert rec.postselected == ("e" not in [c for _, c in rec.jumps])


def test_embed_helpers():
    psi = embed_ef_state(initial_ket("+y"))
    assert psi[0] == 0 and abs(norm_squared(psi) - 1) < 1e-15
    rho = embed_ef_density(np.eye(2) / 2)
    assert rho[0, 0] == 0 and abs(np.trace(rho) - 1) < 1e-15
