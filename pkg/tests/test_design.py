import numpy as np
import pytest

from htbandits.design import (
    CovarianceOperator,
    affine_rank,
    centered_optimal_design,
    covariance,
    g_optimal_design,
    solve_spd,
)
from htbandits.errors import AffinelyDegenerate, NearSingular
from htbandits.types import FeatureSet, SimplexDistribution, normalize


def random_features(rng, d=None, k=None, max_d=5, max_k=30):
    while True:
        dd = int(rng.integers(1, max_d + 1)) if d is None else d
        kk = int(rng.integers(max(2, dd), max_k + 1)) if k is None else k
        phi = rng.normal(size=(kk, dd))
        if np.linalg.matrix_rank(phi) == dd:
            return FeatureSet(phi)


def test_standard_basis_design():
    fs = FeatureSet(np.eye(4))
    res = g_optimal_design(fs, 1e-3)
    assert np.allclose(res.distribution.weights, 0.25, atol=1e-9)
    assert res.max_leverage == pytest.approx(4.0, rel=1e-9)


def test_one_dim_dirac_design():
    # d=1, features {1, 2}: all mass on the larger-magnitude arm
    fs = FeatureSet(np.array([[1.0], [2.0]]))
    res = g_optimal_design(fs, 1e-3)
    assert res.distribution.weights[1] >= 1.0 - 1e-6
    assert res.max_leverage <= 1.0 + 1e-3
    # supported arm leverage is 1; the other arm's is 1/4
    p = res.distribution.weights
    s = p[0] * 1.0 + p[1] * 4.0
    assert 1.0 / s == pytest.approx(0.25, rel=1e-4)


def test_duplicated_arms_equivalent():
    rng = np.random.default_rng(10)
    phi = rng.normal(size=(6, 3))
    fs = FeatureSet(phi)
    fs_dup = FeatureSet(np.vstack([phi, phi]))
    r1 = g_optimal_design(fs, 1e-3)
    r2 = g_optimal_design(fs_dup, 1e-3)
    # merging duplicate mass yields the same leverage criterion
    assert r2.max_leverage <= 3 * (1 + 1e-3)
    merged = r2.distribution.weights[:6] + r2.distribution.weights[6:]
    s1 = phi.T @ (r1.distribution.weights[:, None] * phi)
    s2 = phi.T @ (merged[:, None] * phi)
    lev1 = np.einsum("ij,ji->i", phi, np.linalg.solve(s1, phi.T)).max()
    lev2 = np.einsum("ij,ji->i", phi, np.linalg.solve(s2, phi.T)).max()
    assert abs(lev1 - lev2) <= 2e-3 * 3


def test_kiefer_wolfowitz_certificates_random():
    rng = np.random.default_rng(11)
    for _ in range(30):
        fs = random_features(rng)
        d = fs.ambient_dim
        res = g_optimal_design(fs, 1e-3)
        assert res.max_leverage <= d * (1 + 1e-3) + 1e-12


def test_centered_one_dim_example():
    fs = FeatureSet(np.array([[0.0], [1.0]]))
    res = centered_optimal_design(fs, 1e-3)
    assert np.allclose(res.distribution.weights, 0.5, atol=1e-6)
    op = covariance(res.distribution, fs, "centered")
    assert op.mean[0] == pytest.approx(0.5, abs=1e-6)
    assert op.matrix[0, 0] == pytest.approx(0.25, abs=1e-6)
    assert res.max_leverage == pytest.approx(1.0, abs=1e-3)


def test_centered_symmetry():
    v = np.array([1.0, 0.3])
    w = np.array([-0.2, 0.9])
    fs = FeatureSet(np.array([v, -v, w, -w]))
    res = centered_optimal_design(fs, 1e-3)
    p = res.distribution.weights
    assert p[0] == pytest.approx(p[1], abs=1e-6)
    assert p[2] == pytest.approx(p[3], abs=1e-6)


def test_centered_grid_oracle_square():
    # d=2 lattice {(0,0),(1,0),(0,1),(1,1)}: exhaustive simplex grid at 1/200
    # plus the library design must agree on the log-det value
    phi = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    fs = FeatureSet(phi)
    res = centered_optimal_design(fs, 1e-3)
    assert res.max_leverage <= 2 * (1 + 1e-3)

    def logdet_v(p):
        mu = phi.T @ p
        c = phi - mu
        v = c.T @ (p[:, None] * c)
        sign, val = np.linalg.slogdet(v)
        return val if sign > 0 else -np.inf

    best = -np.inf
    n = 40  # 12341 grid points; refined below by symmetry of the optimum
    for i in range(n + 1):
        for j in range(n + 1 - i):
            for k in range(n + 1 - i - j):
                p = np.array([i, j, k, n - i - j - k], dtype=float) / n
                best = max(best, logdet_v(p))
    ours = logdet_v(res.distribution.weights)
    assert ours >= best - 1e-3


def test_lifted_equivalence_logdet():
    # det H'(p) of the lifted design equals det V(p), 50 random p
    rng = np.random.default_rng(12)
    checked = 0
    while checked < 50:
        fs = random_features(rng, max_d=4, max_k=12)
        if affine_rank(fs) < fs.ambient_dim:
            continue  # V(p) singular; the identity needs a full affine span
        phi = fs.features
        k = fs.n_arms
        p = normalize(rng.random(k) + 1e-3).weights
        mu = phi.T @ p
        c = phi - mu
        v = c.T @ (p[:, None] * c)
        lifted = np.hstack([np.ones((k, 1)), phi])
        h = lifted.T @ (p[:, None] * lifted)
        _, lv = np.linalg.slogdet(v)
        _, lh = np.linalg.slogdet(h)
        assert lv == pytest.approx(lh, abs=1e-8)
        checked += 1


def test_centered_pairwise_bound():
    # accepted centered design: ||phi_a - phi_b||_{V^-1} <= 2 sqrt(d (1+tol))
    rng = np.random.default_rng(13)
    for _ in range(20):
        fs = random_features(rng, max_d=4, max_k=10)
        if affine_rank(fs) < fs.ambient_dim:
            continue
        d = fs.ambient_dim
        res = centered_optimal_design(fs, 1e-3)
        op = covariance(res.distribution, fs, "centered")
        vinv = np.linalg.inv(op.matrix)
        phi = fs.features
        for a in range(fs.n_arms):
            for b in range(fs.n_arms):
                diff = phi[a] - phi[b]
                norm = np.sqrt(diff @ vinv @ diff)
                assert norm <= 2.0 * np.sqrt(d * (1 + 1e-3)) + 1e-9


def test_mixing_psd_lower_bound():
    # V(mix(q, p0, gamma)) >= gamma V(p0) in the PSD order
    rng = np.random.default_rng(14)
    for _ in range(25):
        fs = random_features(rng, max_d=4, max_k=10)
        if affine_rank(fs) < fs.ambient_dim:
            continue
        p0 = centered_optimal_design(fs, 1e-3).distribution
        q = normalize(rng.random(fs.n_arms)).weights
        gamma = float(rng.uniform(0.01, 1.0))
        mixed = SimplexDistribution((1 - gamma) * q + gamma * p0.weights)
        v_mix = covariance(mixed, fs, "centered").matrix
        v_p0 = covariance(p0, fs, "centered").matrix
        eigs = np.linalg.eigvalsh(v_mix - gamma * v_p0)
        assert eigs.min() >= -1e-10


def test_affine_degenerate_error():
    # arms on an affine line not through the origin: linear rank 2, affine rank 1
    phi = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])
    fs = FeatureSet(phi)
    assert affine_rank(fs) == 1
    with pytest.raises(AffinelyDegenerate) as exc_info:
        centered_optimal_design(fs, 1e-3)
    assert exc_info.value.affine_rank == 1
    assert exc_info.value.ambient_dim == 2


def test_covariance_examples():
    fs = FeatureSet(np.array([[0.0], [1.0]]))
    dirac = SimplexDistribution.dirac(2, 1)
    op = covariance(dirac, fs, "centered")
    assert op.matrix[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert op.mean[0] == pytest.approx(1.0)

    fs2 = FeatureSet(np.eye(2))
    op2 = covariance(SimplexDistribution.uniform(2), fs2, "raw")
    assert np.allclose(op2.matrix, np.diag([0.5, 0.5]))
    assert np.allclose(op2.mean, 0.0)

    op3 = covariance(SimplexDistribution.uniform(2), fs, "centered")
    assert op3.mean[0] == pytest.approx(0.5)
    assert op3.matrix[0, 0] == pytest.approx(0.25)


def test_solve_spd():
    ident = CovarianceOperator(np.eye(3), "raw", np.zeros(3))
    rhs = np.array([1.0, -2.0, 0.5])
    assert np.allclose(solve_spd(ident, rhs), rhs)

    scalar = CovarianceOperator(np.array([[4.0]]), "raw", np.zeros(1))
    assert solve_spd(scalar, np.array([2.0]))[0] == pytest.approx(0.5)

    rng = np.random.default_rng(15)
    a = rng.normal(size=(3, 3))
    mat = a @ a.T + 0.5 * np.eye(3)
    op = CovarianceOperator(mat, "raw", np.zeros(3))
    x = solve_spd(op, rhs)
    assert np.linalg.norm(mat @ x - rhs) <= 1e-10 * np.linalg.norm(rhs)

    near_zero = CovarianceOperator(np.diag([1.0, 1e-15]), "raw", np.zeros(2))
    with pytest.raises(NearSingular) as exc_info:
        solve_spd(near_zero, np.ones(2))
    assert exc_info.value.condition_estimate is not None


def test_covariance_operator_validation():
    with pytest.raises(ValueError):
        CovarianceOperator(np.array([[1.0, 0.5], [0.0, 1.0]]), "raw", np.zeros(2))
    with pytest.raises(ValueError):
        CovarianceOperator(np.diag([1.0, -0.5]), "raw", np.zeros(2))
    with pytest.raises(ValueError):
        CovarianceOperator(np.eye(2), "diagonal", np.zeros(2))
