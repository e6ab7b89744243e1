import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

import linbayes as lb
from linbayes.fem import MassSpace
from linbayes.models.linear import random_linear_model

import oracles


class _ScalarPrior:
    """One-dimensional stand-in: mass 1, stiffness a, covariance 1/a^2."""

    def __init__(self, a):
        self.a = a
        self.mspace = MassSpace(sp.csr_matrix(np.array([[1.0]])))
        self.mean = np.zeros(1)
        self.n = 1

    def apply_covariance(self, v):
        return np.asarray(v, float) / self.a**2

    def apply_covariance_sqrt(self, v):
        return np.asarray(v, float) / self.a

    def pointwise_variance(self, pts):
        return np.full(np.atleast_2d(pts).shape[0], 1.0 / self.a**2)


def _assembled_problem(q=12, seed=7):
    mesh = lb.build_mesh(2, (6, 6), ((0.0, 1.0), (0.0, 1.0)))
    prior = lb.build_prior(mesh, 2.0, lb.AnisotropySpec.isotropic(0.05))
    model = random_linear_model(prior.mspace, q=q, noise_sigma=0.05, seed=seed)
    return prior, model


# --- prior-preconditioned Hessian action --------------------------------------


def test_preconditioned_hessian_zero():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    assert np.all(action(np.zeros(prior.n)) == 0.0)


def test_preconditioned_hessian_symmetric():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    rng = np.random.default_rng(0)
    for _ in range(10):
        u, v = rng.standard_normal(prior.n), rng.standard_normal(prior.n)
        lhs = prior.mspace.inner(action(u), v)
        rhs = prior.mspace.inner(u, action(v))
        assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), abs(rhs))


def test_preconditioned_hessian_dense_oracle():
    prior, model = _assembled_problem()
    mass = prior.mspace.matrix.toarray()
    stiff = prior.stiffness.toarray()
    kinv = np.linalg.inv(stiff)
    dense = kinv @ mass @ oracles.misfit_hessian_dense(
        model.operator, mass, model.noise_sigma) @ kinv @ mass
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    v = np.random.default_rng(1).standard_normal(prior.n)
    assert np.linalg.norm(action(v) - dense @ v) <= 1e-9 * np.linalg.norm(dense @ v)


# --- Lanczos ---------------------------------------------------------------------


def test_lanczos_matches_dense_generalized_eigensolve():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    eig = lb.lanczos_eigs(action, prior.mspace, r_max=prior.n, eig_tol=1e-10,
                          trunc_threshold=0.0, seed=0)
    vals, _ = oracles.preconditioned_hessian_eigs_dense(
        model.operator, prior.mspace.matrix.toarray(),
        prior.stiffness.toarray(), model.noise_sigma)
    r = model.q       # the misfit Hessian has rank q
    assert eig.rank >= r
    assert np.all(np.abs(eig.lambdas[:r] - vals[:r]) <= 1e-8 * np.abs(vals[:r]))
    mass = prior.mspace.matrix.toarray()
    gram = eig.vectors.T @ mass @ eig.vectors
    assert np.max(np.abs(gram - np.eye(eig.rank))) <= 1e-8


def test_lanczos_residuals_within_tolerance():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    eig = lb.lanczos_eigs(action, prior.mspace, r_max=20, eig_tol=1e-8,
                          trunc_threshold=0.1, seed=1)
    top = max(eig.lambdas[0], 1.0)
    assert np.all(eig.residual_norms <= 1e-8 * top)
    # true residuals agree with the estimates
    for k in range(eig.rank):
        v = eig.vectors[:, k]
        res = action(v) - eig.lambdas[k] * v
        assert prior.mspace.norm(res) <= 1e-7 * top


def test_lanczos_zero_operator_empty():
    prior, _ = _assembled_problem()
    eig = lb.lanczos_eigs(lambda v: np.zeros_like(v), prior.mspace, r_max=10)
    assert eig.rank == 0
    assert eig.diagnostic != ""


def test_lanczos_deterministic_per_seed():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    a = lb.lanczos_eigs(action, prior.mspace, r_max=10, seed=5)
    b = lb.lanczos_eigs(action, prior.mspace, r_max=10, seed=5)
    assert np.array_equal(a.lambdas, b.lambdas)
    assert np.array_equal(a.vectors, b.vectors)


def test_lanczos_scalar_problem():
    # one unknown: single eigenvalue h / a^2
    a, h = 3.0, 5.0
    scalar = _ScalarPrior(a)
    eig = lb.lanczos_eigs(lambda v: (h / a**2) * v, scalar.mspace, r_max=1,
                          trunc_threshold=0.0)
    assert eig.rank == 1
    assert np.isclose(eig.lambdas[0], h / a**2, rtol=1e-12)


def test_lanczos_incomplete_flag():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    eig = lb.lanczos_eigs(action, prior.mspace, r_max=2, eig_tol=1e-8,
                          trunc_threshold=0.1, seed=0, max_iters=4)
    assert eig.spectrum_incomplete


def test_lanczos_rejects_bad_rank(prior2d):
    with pytest.raises(ValueError):
        lb.lanczos_eigs(lambda v: v, prior2d.mspace, r_max=0)


# --- truncation error bound -------------------------------------------------------


def test_truncation_bound_values():
    assert lb.truncation_error_bound([]) == 0.0
    assert lb.truncation_error_bound([1.0]) == 0.5
    assert np.isclose(lb.truncation_error_bound([3.0, 1.0]), 1.25)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1e6), max_size=8))
def test_truncation_bound_formula(lams):
    expected = sum(x / (x + 1.0) for x in lams)
    assert np.isclose(lb.truncation_error_bound(lams), expected, rtol=1e-12)


# --- posterior covariance action -----------------------------------------------


def _lowrank_full(prior, model, m_map=None, threshold=0.0):
    action = lb.prior_preconditioned_hessian(
        prior, model, np.zeros(prior.n) if m_map is None else m_map)
    eig = lb.lanczos_eigs(action, prior.mspace, r_max=prior.n, eig_tol=1e-10,
                          trunc_threshold=threshold, seed=0)
    return lb.LowRankPosterior(prior, np.zeros(prior.n) if m_map is None else m_map,
                               eig)


def test_rank_zero_posterior_is_prior():
    prior, _ = _assembled_problem()
    empty = lb.EigenDecomposition(lambdas=np.zeros(0),
                                  vectors=np.zeros((prior.n, 0)),
                                  residual_norms=np.zeros(0))
    lrp = lb.LowRankPosterior(prior, prior.mean, empty)
    v = np.random.default_rng(2).standard_normal(prior.n)
    assert np.allclose(lrp.apply_covariance(v), prior.apply_covariance(v))
    var_post = lrp.pointwise_variance(prior.mesh.node_coords[:5])
    var_prior = prior.pointwise_variance(prior.mesh.node_coords[:5])
    assert np.allclose(var_post, var_prior)


def test_posterior_covariance_scalar_case():
    # covariance 1/(a^2 + h): the rank-one correction reproduces it exactly
    a, h = 2.0, 7.0
    scalar = _ScalarPrior(a)
    lam = h / a**2
    eig = lb.EigenDecomposition(lambdas=np.array([lam]),
                                vectors=np.ones((1, 1)),
                                residual_norms=np.zeros(1))
    lrp = lb.LowRankPosterior(scalar, np.zeros(1), eig)
    got = lrp.apply_covariance(np.ones(1))[0]
    assert np.isclose(got, 1.0 / (a**2 + h), rtol=1e-12)


def test_posterior_covariance_dense_oracle():
    prior, model = _assembled_problem()
    lrp = _lowrank_full(prior, model)
    dense = oracles.gamma_post_dense(model.operator, prior.mspace.matrix.toarray(),
                                     prior.stiffness.toarray(), model.noise_sigma)
    applied = lrp.apply_covariance(np.eye(prior.n))
    err = np.linalg.norm(applied - dense, "fro") / np.linalg.norm(dense, "fro")
    assert err <= 1e-7


def test_posterior_covariance_self_adjoint():
    prior, model = _assembled_problem()
    lrp = _lowrank_full(prior, model)
    rng = np.random.default_rng(3)
    for _ in range(10):
        u, v = rng.standard_normal(prior.n), rng.standard_normal(prior.n)
        lhs = prior.mspace.inner(lrp.apply_covariance(u), v)
        rhs = prior.mspace.inner(u, lrp.apply_covariance(v))
        assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), abs(rhs))
        assert prior.mspace.inner(lrp.apply_covariance(u), u) > 0


def test_woodbury_identity_dense():
    # (I + V L V*)^-1 = I - V D V* with weighted-orthonormal V
    prior, model = _assembled_problem()
    mass = prior.mspace.matrix.toarray()
    vals, vecs = oracles.preconditioned_hessian_eigs_dense(
        model.operator, mass, prior.stiffness.toarray(), model.noise_sigma)
    vals = np.clip(vals, 0.0, None)
    v_adj = vecs.T @ mass
    lhs = np.linalg.inv(np.eye(prior.n) + vecs @ np.diag(vals) @ v_adj)
    rhs = np.eye(prior.n) - vecs @ np.diag(vals / (vals + 1.0)) @ v_adj
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


# --- sampling factor -----------------------------------------------------------


def test_sampling_factor_scalar_case():
    a, h = 2.0, 7.0
    scalar = _ScalarPrior(a)
    lam = h / a**2
    eig = lb.EigenDecomposition(lambdas=np.array([lam]),
                                vectors=np.ones((1, 1)),
                                residual_norms=np.zeros(1))
    lrp = lb.LowRankPosterior(scalar, np.zeros(1), eig)
    factor = lrp.sampling_factor().apply(np.ones(1))[0]
    assert np.isclose(factor, 1.0 / (a * np.sqrt(lam + 1.0)), rtol=1e-12)
    assert np.isclose(factor**2, 1.0 / (a**2 + h), rtol=1e-12)


def test_sampling_factor_zero_modes_matches_prior():
    prior, _ = _assembled_problem()
    empty = lb.EigenDecomposition(lambdas=np.zeros(0),
                                  vectors=np.zeros((prior.n, 0)),
                                  residual_norms=np.zeros(0))
    lrp = lb.LowRankPosterior(prior, prior.mean, empty)
    nhat = np.random.default_rng(4).standard_normal(prior.n)
    via_factor = lrp.sampling_factor().apply(nhat)
    direct = prior.apply_covariance_sqrt(prior.mspace.apply_lumped_sqrt(nhat, -0.5))
    assert np.allclose(via_factor, direct)


def test_sampling_factor_dense_identity():
    prior, model = _assembled_problem()
    lrp = _lowrank_full(prior, model)
    mass = prior.mspace.matrix.toarray()
    factor = lrp.sampling_factor(exact_mass_sqrt=True).apply(np.eye(prior.n))
    lhs = factor @ factor.T @ mass
    dense = oracles.gamma_post_dense(model.operator, mass,
                                     prior.stiffness.toarray(), model.noise_sigma)
    assert np.linalg.norm(lhs - dense, "fro") <= 1e-7 * np.linalg.norm(dense, "fro")


def test_sample_zero_noise_returns_map():
    prior, model = _assembled_problem()
    m_map = np.random.default_rng(5).standard_normal(prior.n)
    lrp = _lowrank_full(prior, model, m_map=m_map)
    assert np.allclose(lrp.sample(np.zeros(prior.n)), m_map)


# --- pointwise variance ---------------------------------------------------------


def test_posterior_variance_never_exceeds_prior():
    prior, model = _assembled_problem()
    lrp = _lowrank_full(prior, model, threshold=0.1)
    pts = prior.mesh.node_coords
    post = lrp.pointwise_variance(pts)
    pri = prior.pointwise_variance(pts)
    assert np.all(post <= pri + 1e-12)
    assert np.all(post >= 0.0)


def test_posterior_variance_dense_oracle():
    prior, model = _assembled_problem()
    lrp = _lowrank_full(prior, model)
    mass = prior.mspace.matrix.toarray()
    dense = oracles.gamma_post_dense(model.operator, mass,
                                     prior.stiffness.toarray(), model.noise_sigma)
    nodal = np.diag(dense @ np.linalg.inv(mass))
    got = lrp.pointwise_variance(prior.mesh.node_coords)
    assert np.allclose(got, nodal, rtol=1e-7)


def test_posterior_variance_monotone_in_rank():
    prior, model = _assembled_problem()
    action = lb.prior_preconditioned_hessian(prior, model, np.zeros(prior.n))
    eig = lb.lanczos_eigs(action, prior.mspace, r_max=prior.n, eig_tol=1e-10,
                          trunc_threshold=0.0, seed=0)
    pts = prior.mesh.node_coords[::5]
    previous = prior.pointwise_variance(pts)
    for r in (1, 3, 6, eig.rank):
        sub = lb.EigenDecomposition(lambdas=eig.lambdas[:r],
                                    vectors=eig.vectors[:, :r],
                                    residual_norms=eig.residual_norms[:r])
        var = lb.LowRankPosterior(prior, np.zeros(prior.n), sub).pointwise_variance(pts)
        assert np.all(var <= previous + 1e-12)
        previous = var
