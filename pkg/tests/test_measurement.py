import io

import numpy as np
import pytest

from nojump.qcore import PostselectionError, basis_ket
from nojump.dynamics import embed_ef_density, initial_ket, projector
from nojump.measurement import (
    RAW_ASSIGNMENT_PROBS,
    ConfusionMatrix,
    IngestError,
    apply_confusion,
    default_confusion_matrix,
    ibu_correct,
    read_counts_csv,
    reconstruct_density,
    reconstruct_diag3,
    renormalization_factor,
    renormalize_subensemble,
    sample_counts,
    simulate_tomography,
    tomography_rotation,
    write_counts_csv,
)


def test_raw_assignment_probs_verbatim():
    assert RAW_ASSIGNMENT_PROBS[0][0] == 0.993
    assert RAW_ASSIGNMENT_PROBS[1][0] == 0.123
    row_sums = [sum(r) for r in RAW_ASSIGNMENT_PROBS]
    assert np.allclose(row_sums, [1.001, 1.000, 0.999], atol=1e-12)


def test_default_confusion_matrix_row_normalized():
    beta = default_confusion_matrix().beta
    assert np.allclose(beta.sum(axis=1), 1.0, atol=1e-15)
    assert np.allclose(beta[0], np.array([0.993, 0.003, 0.005]) / 1.001)
    assert np.all(np.diag(beta) > 0.5)


def test_confusion_matrix_rejects_bad_rows():
    with pytest.raises(ValueError):
        ConfusionMatrix.from_raw([[0.9, 0.2, 0.2], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(ValueError):
        ConfusionMatrix(beta=np.array([[0.4, 0.3, 0.3], [0, 1, 0], [0, 0, 1]]))


def test_apply_confusion():
    p = np.array([0.2, 0.5, 0.3])
    assert np.array_equal(apply_confusion(p, ConfusionMatrix.identity()), p)

    beta = default_confusion_matrix()
    out = apply_confusion(np.array([1.0, 0.0, 0.0]), beta)
    assert np.allclose(out, np.array([0.993, 0.003, 0.005]) / 1.001)
    assert abs(out.sum() - 1.0) < 1e-12

    rng = np.random.default_rng(8)
    p = rng.dirichlet(np.ones(3))
    assert abs(apply_confusion(p, beta).sum() - 1.0) < 1e-12


def test_sample_counts_edge_cases():
    assert np.array_equal(sample_counts(np.array([0.2, 0.5, 0.3]), 0, seed=1), [0, 0, 0])
    assert np.array_equal(sample_counts(np.array([1.0, 0.0, 0.0]), 100, seed=1), [100, 0, 0])


def test_sample_counts_deterministic_and_unbiased():
    p = np.array([0.2, 0.5, 0.3])
    a = sample_counts(p, 10**6, seed=42)
    assert np.array_equal(a, sample_counts(p, 10**6, seed=42))
    freq = a / 10**6
    sigma = np.sqrt(p * (1 - p) / 10**6)
    assert np.all(np.abs(freq - p) < 5 * sigma)


def test_ibu_identity_beta_is_fixed_point():
    observed = np.array([0.3, 0.45, 0.25])
    out = ibu_correct(observed, ConfusionMatrix.identity(), n_iter=1)
    assert np.allclose(out, observed, atol=1e-15)


def test_ibu_roundtrip_recovers_truth():
    beta = default_confusion_matrix()
    p_true = np.array([0.2, 0.5, 0.3])
    observed = apply_confusion(p_true, beta)
    recovered = ibu_correct(observed, beta, n_iter=50)
    assert np.max(np.abs(recovered - p_true)) < 1e-6
    assert abs(recovered.sum() - 1.0) < 1e-12


def test_ibu_true_prior_is_fixed_point():
    beta = default_confusion_matrix()
    p_true = np.array([0.25, 0.35, 0.4])
    observed = apply_confusion(p_true, beta)
    out = ibu_correct(observed, beta, n_iter=1, prior=p_true)
    assert np.max(np.abs(out - p_true)) < 1e-12


def test_ibu_requires_positive_prior():
    with pytest.raises(ValueError):
        ibu_correct(np.array([0.3, 0.3, 0.4]), ConfusionMatrix.identity(),
                    prior=np.array([0.0, 0.5, 0.5]))


def test_ibu_inconsistent_model_raises():
    # A validated ConfusionMatrix cannot produce a zero predicted probability
    # (diagonal dominance forbids zero columns), so bypass construction to
    # exercise the guard: beta never assigns outcome g, yet g was observed.
    bad = object.__new__(ConfusionMatrix)
    object.__setattr__(bad, "beta", np.array([
        [0.0, 0.505, 0.495],
        [0.0, 0.9, 0.1],
        [0.0, 0.1, 0.9],
    ]))
    with pytest.raises(ValueError, match="zero predicted"):
        ibu_correct(np.array([0.5, 0.25, 0.25]), bad)


def test_tomography_rotations_unitary():
    for axis in ("x", "y", "z"):
        r = tomography_rotation(axis)
        assert np.max(np.abs(r.conj().T @ r - np.eye(3))) < 1e-12
        assert r[0, 0] == 1.0


def test_tomography_rotation_maps_axis_states():
    r = tomography_rotation("x")
    plus_x = np.array([0, 1, 1]) / np.sqrt(2)
    assert abs(abs((r @ plus_x)[1]) - 1.0) < 1e-12
    assert np.array_equal(tomography_rotation("z"), np.eye(3))
    r = tomography_rotation("y")
    plus_y = np.array([0, 1, 1j]) / np.sqrt(2)
    assert abs(abs((r @ plus_y)[1]) - 1.0) < 1e-12


def test_simulate_tomography_ground_state():
    rec = simulate_tomography(projector(basis_ket("g", 3)), "x",
                              ConfusionMatrix.identity(), shots=500, seed=3)
    assert np.array_equal(rec.counts, [500, 0, 0])


def test_simulate_tomography_exact_mode():
    rho = embed_ef_density(projector(initial_ket("+x")))
    rec = simulate_tomography(rho, "x", ConfusionMatrix.identity(), shots=0)
    assert rec.exact
    assert np.allclose(rec.frequencies(), [0.0, 1.0, 0.0], atol=1e-12)

    rho = embed_ef_density(np.eye(2) / 2)
    rec = simulate_tomography(rho, "z", ConfusionMatrix.identity(), shots=0)
    assert np.allclose(rec.frequencies(), [0.0, 0.5, 0.5], atol=1e-12)


def test_renormalize_subensemble():
    assert renormalize_subensemble(np.array([0.0, 0.6, 0.4])) == (0.6, 0.4, 1.0)
    plus, minus, success = renormalize_subensemble(np.array([0.5, 0.3, 0.2]))
    assert (round(plus, 12), round(minus, 12), success) == (0.6, 0.4, 0.5)
    with pytest.raises(PostselectionError):
        renormalize_subensemble(np.array([1.0, 0.0, 0.0]))


def test_reconstruct_density_pure_z():
    rho = reconstruct_density((0.5, 0.5), (0.5, 0.5), (1.0, 0.0))
    assert np.allclose(rho, np.diag([1.0, 0.0]))   # +z is |e>


def test_reconstruct_density_maximally_mixed():
    rho = reconstruct_density((0.5, 0.5), (0.5, 0.5), (0.5, 0.5))
    assert np.allclose(rho, np.eye(2) / 2)


def test_reconstruct_density_projects_overunit_bloch():
    rho = reconstruct_density((1.0, 0.0), (1.0, 0.0), (1.0, 0.0))
    evals = np.linalg.eigvalsh(rho)
    assert evals.min() > -1e-12
    assert abs(np.trace(rho).real - 1.0) < 1e-12


def test_reconstruct_density_valid_for_arbitrary_noisy_pairs():
    # Shot noise can hand the reconstruction any triple of normalized pairs;
    # the output must always be a physical state.
    rng = np.random.default_rng(31)
    for _ in range(200):
        pairs = []
        for _ in range(3):
            plus = rng.uniform()
            pairs.append((plus, 1.0 - plus))
        rho = reconstruct_density(*pairs)
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-15
        assert np.linalg.eigvalsh(rho).min() > -1e-12
        assert abs(np.trace(rho).real - 1.0) < 1e-12


def test_tomography_roundtrip_exact_identity_beta():
    rng = np.random.default_rng(17)
    beta = ConfusionMatrix.identity()
    for _ in range(25):
        v = rng.normal(size=2) + 1j * rng.normal(size=2)
        psi = v / np.linalg.norm(v)
        rho3 = embed_ef_density(projector(psi))
        pairs = {}
        for axis in ("x", "y", "z"):
            rec = simulate_tomography(rho3, axis, beta, shots=0)
            p = ibu_correct(rec.frequencies(), beta)
            pairs[axis] = renormalize_subensemble(p)[:2]
        rho_hat = reconstruct_density(pairs["x"], pairs["y"], pairs["z"])
        fidelity = np.vdot(psi, rho_hat @ psi).real
        assert fidelity > 1 - 1e-10


def test_reconstruct_diag3():
    rho = reconstruct_diag3(np.array([0.3, 0.3, 0.4]))
    assert np.array_equal(rho, np.diag([0.3, 0.3, 0.4]))
    assert np.array_equal(reconstruct_diag3(np.array([1.0, 0, 0])),
                          projector(basis_ket("g", 3)))
    assert abs(np.trace(rho) - 1.0) < 1e-15


def test_renormalization_factor():
    assert renormalization_factor(0.0) == 1.0
    assert renormalization_factor(0.5) == 2.0
    assert abs(renormalization_factor(0.9) - 10.0) < 1e-12
    with pytest.raises(ValueError):
        renormalization_factor(1.0)


def test_counts_csv_roundtrip(tmp_path):
    rho = embed_ef_density(projector(initial_ket("+y")))
    records = [
        simulate_tomography(rho, axis, default_confusion_matrix(), shots=2048, seed=k)
        for k, axis in enumerate(("x", "y", "z"))
    ]
    path = tmp_path / "counts.csv"
    write_counts_csv(path, records)
    back = read_counts_csv(path)
    assert [r.axis for r in back] == ["x", "y", "z"]
    for a, b in zip(records, back):
        assert a.shots == b.shots
        assert np.array_equal(a.counts, b.counts)


def test_counts_csv_rejects_bad_data():
    with pytest.raises(IngestError, match="missing column"):
        read_counts_csv(io.StringIO("axis,shots,n_g\nx,10,10\n"))
    with pytest.raises(IngestError, match="row 2"):
        read_counts_csv(io.StringIO("axis,shots,n_g,n_plus,n_minus\nx,0,0,0,0\n"))
    with pytest.raises(IngestError, match="row 2"):
        read_counts_csv(io.StringIO("axis,shots,n_g,n_plus,n_minus\nx,10,3,3,3\n"))
    with pytest.raises(IngestError, match="row 3"):
        read_counts_csv(io.StringIO(
            "axis,shots,n_g,n_plus,n_minus\nx,10,4,3,3\nq,10,4,3,3\n"))


def test_ibu_roundtrip_random_simplex_points():
    # Convergence is linear and slows near the simplex boundary: points with
    # a component at the 0.01 floor need ~150 iterations for 1e-6.
    beta = default_confusion_matrix()
    rng = np.random.default_rng(23)
    for _ in range(40):
        p = 0.97 * rng.dirichlet(np.ones(3)) + 0.01
        observed = apply_confusion(p, beta)
        assert np.max(np.abs(ibu_correct(observed, beta, n_iter=50) - p)) < 1e-3
        assert np.max(np.abs(ibu_correct(observed, beta, n_iter=150) - p)) < 1e-6
