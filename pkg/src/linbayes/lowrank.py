"""Low-rank posterior covariance from the prior-preconditioned misfit Hessian.

The data-misfit Hessian, symmetrized by the prior square root on both sides,
is a compact self-adjoint positive operator in the mass-weighted inner
product; its dominant eigenpairs are computed matrix-free by Lanczos
iteration in that inner product with full reorthogonalization.  With
eigenvalues lam_i and weighted-orthonormal eigenvectors v_i, writing
``d_i = lam_i / (lam_i + 1)`` and ``p_i = 1/sqrt(lam_i + 1) - 1``:

* posterior covariance action:  prior covariance minus
  ``tv_r diag(d) tv_r^T M`` where ``tv_r`` are the prior-sqrt-mapped vectors;
* truncation error of dropping a tail is of the order ``sum d_i`` over it;
* a square-root factor for sampling is
  ``prior_sqrt (V_r diag(p) V_r^T M + I) M^{-1/2}``, satisfying
  ``L L^T M = posterior covariance``;
* the pointwise variance field is the prior one minus
  ``sum_i d_i (Phi(x)^T tv_i)^2``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .fem import MassSpace
from .models.base import ForwardModel
from .prior import PriorModel


def prior_preconditioned_hessian(prior: PriorModel, model: ForwardModel, m):
    """Return the action v -> prior_sqrt(H_misfit(prior_sqrt(v))) at point m."""
    m = np.asarray(m, dtype=float)

    def action(v):
        u = prior.apply_covariance_sqrt(v)
        u = model.gauss_newton_hessian_action(m, u)
        return prior.apply_covariance_sqrt(u)

    return action


@dataclass
class EigenDecomposition:
    """Converged dominant eigenpairs, weighted-orthonormal columns.

    ``residual_norms`` holds the Lanczos residual estimates per kept pair;
    ``discarded`` the converged eigenvalues that fell below the retention
    threshold (they quantify the truncation error); ``spectrum_incomplete``
    flags that the retained-rank cap was hit while eigenvalues above the
    threshold may remain uncaptured.
    """

    lambdas: np.ndarray
    vectors: np.ndarray
    residual_norms: np.ndarray
    discarded: np.ndarray = field(default_factory=lambda: np.zeros(0))
    spectrum_incomplete: bool = False
    iterations: int = 0
    diagnostic: str = ""

    @property
    def rank(self) -> int:
        return self.lambdas.shape[0]


def truncation_error_bound(discarded_lambdas) -> float:
    """``sum lam / (lam + 1)`` over a discarded set of eigenvalues."""
    lams = np.asarray(discarded_lambdas, dtype=float)
    if lams.size == 0:
        return 0.0
    return float(np.sum(lams / (lams + 1.0)))


def lanczos_eigs(operator, mspace: MassSpace, r_max: int, eig_tol: float = 1e-6,
                 trunc_threshold: float = 0.1, seed: int = 0,
                 max_iters: int = None) -> EigenDecomposition:
    """Dominant eigenpairs of a self-adjoint PSD operator in the weighted
    inner product.

    Runs Lanczos with full reorthogonalization from a seeded random start
    vector (deterministic per seed).  A Ritz pair counts as converged when
    its residual estimate drops below ``eig_tol * max(lam_1, 1)``.  Iteration
    stops once every eigenvalue at or above ``trunc_threshold`` has converged
    and at least one converged value lies below the threshold (the retained
    part of the spectrum is then fully captured), on Krylov breakdown, or at
    the iteration cap.  At most ``r_max`` pairs are retained.
    """
    n = mspace.n
    if not 1 <= r_max <= n:
        raise ValueError(f"r_max must lie in [1, {n}], got {r_max}")
    if max_iters is None:
        max_iters = min(n, 2 * r_max + 30)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    q /= mspace.norm(q)

    basis = [q]
    mq = [mspace.matrix @ q]
    alphas = []
    betas = []
    breakdown = False
    scale = None

    def ritz(j):
        tri = np.array(alphas[:j])
        off = np.array(betas[: j - 1]) if j > 1 else np.zeros(0)
        if j == 1:
            vals = tri.copy()
            vecs = np.ones((1, 1))
        else:
            vals, vecs = scipy.linalg.eigh_tridiagonal(tri, off)
        order = np.argsort(vals)[::-1]
        return vals[order], vecs[:, order]

    j = 0
    beta_last = 0.0
    while j < max_iters:
        z = operator(basis[j])
        alpha = float(z @ mq[j])
        alphas.append(alpha)
        z = z - alpha * basis[j]
        if j > 0:
            z = z - betas[j - 1] * basis[j - 1]
        # full reorthogonalization, twice for safety
        for _ in range(2):
            for qi, mqi in zip(basis, mq):
                z = z - (z @ mqi) * qi
        j += 1
        if scale is None:
            scale = max(abs(alpha), 1.0)
        beta = mspace.norm(z)
        beta_last = beta
        vals, vecs = ritz(j)
        top = max(vals[0], 1.0) if vals.size else 1.0
        residuals = beta * np.abs(vecs[-1, :])
        converged = residuals <= eig_tol * top
        above = vals >= trunc_threshold
        captured = bool(np.all(converged[above])) and bool(np.any(~above & converged))
        if beta <= 1e-13 * scale:
            breakdown = True
            break
        if captured:
            break
        if j >= max_iters:
            break
        betas.append(beta)
        q_next = z / beta
        basis.append(q_next)
        mq.append(mspace.matrix @ q_next)

    vals, vecs = ritz(j)
    top = max(vals[0], 1.0) if vals.size else 1.0
    residuals = (0.0 if breakdown else beta_last) * np.abs(vecs[-1, :])
    converged = residuals <= eig_tol * top

    keep = converged & (vals >= trunc_threshold)
    keep_idx = np.flatnonzero(keep)
    capped = keep_idx.size > r_max
    keep_idx = keep_idx[:r_max]
    discarded = vals[converged & (vals < trunc_threshold)]

    diag = ""
    if keep_idx.size == 0:
        diag = ("Krylov breakdown before any retained eigenpair converged"
                if breakdown else "no eigenvalue reached the retention threshold")
        return EigenDecomposition(
            lambdas=np.zeros(0), vectors=np.zeros((n, 0)),
            residual_norms=np.zeros(0), discarded=np.asarray(discarded),
            spectrum_incomplete=not breakdown and not np.any(converged & ~keep),
            iterations=j, diagnostic=diag)

    qmat = np.stack(basis, axis=1)  # (n, j)
    vectors = qmat @ vecs[:, keep_idx]
    lambdas = np.clip(vals[keep_idx], 0.0, None)

    incomplete = capped or (not breakdown and not bool(
        np.any(converged & (vals < trunc_threshold))))
    if incomplete:
        diag = ("rank or iteration cap reached with spectrum above the "
                "threshold possibly uncaptured")
    return EigenDecomposition(
        lambdas=lambdas, vectors=vectors,
        residual_norms=residuals[keep_idx],
        discarded=np.asarray(discarded, dtype=float),
        spectrum_incomplete=incomplete, iterations=j, diagnostic=diag)


class SamplingFactor:
    """Applicable square-root factor of the low-rank posterior covariance."""

    def __init__(self, lowrank: "LowRankPosterior", exact_mass_sqrt: bool = False):
        self.lowrank = lowrank
        self.exact_mass_sqrt = exact_mass_sqrt

    def apply(self, nhat) -> np.ndarray:
        lrp = self.lowrank
        mspace = lrp.prior.mspace
        w = mspace.apply_mass_sqrt(np.asarray(nhat, float), -0.5,
                                   exact=self.exact_mass_sqrt)
        if lrp.rank > 0:
            coeff = lrp.vectors.T @ (mspace.matrix @ w)
            shrink = lrp.p_diag[:, None] * coeff if w.ndim == 2 else lrp.p_diag * coeff
            w = w + lrp.vectors @ shrink
        return lrp.prior.apply_covariance_sqrt(w)


class LowRankPosterior:
    """Linearized posterior: MAP mean plus prior-minus-low-rank covariance."""

    def __init__(self, prior: PriorModel, m_map, eig: EigenDecomposition):
        self.prior = prior
        self.m_map = np.asarray(m_map, dtype=float)
        self.eig = eig
        self.lambdas = eig.lambdas
        self.vectors = eig.vectors
        self.d_diag = eig.lambdas / (eig.lambdas + 1.0) if eig.rank else np.zeros(0)
        self.p_diag = (1.0 / np.sqrt(eig.lambdas + 1.0) - 1.0) if eig.rank else np.zeros(0)
        # prior-sqrt images of the eigenvectors, one elliptic solve per column
        self.tilde_vectors = (prior.apply_covariance_sqrt(eig.vectors)
                              if eig.rank else np.zeros((prior.n, 0)))

    @property
    def rank(self) -> int:
        return self.eig.rank

    def apply_covariance(self, v) -> np.ndarray:
        """Posterior covariance action: prior action minus the data-informed
        rank-r correction."""
        v = np.asarray(v, dtype=float)
        out = self.prior.apply_covariance(v)
        if self.rank > 0:
            coeff = self.tilde_vectors.T @ (self.prior.mspace.matrix @ v)
            scaled = self.d_diag[:, None] * coeff if v.ndim == 2 else self.d_diag * coeff
            out = out - self.tilde_vectors @ scaled
        return out

    def sampling_factor(self, exact_mass_sqrt: bool = False) -> SamplingFactor:
        return SamplingFactor(self, exact_mass_sqrt=exact_mass_sqrt)

    def sample(self, nhat, exact_mass_sqrt: bool = False) -> np.ndarray:
        """MAP point plus the square-root factor applied to standard normals."""
        nhat = np.asarray(nhat, dtype=float)
        shift = self.sampling_factor(exact_mass_sqrt).apply(nhat)
        return self.m_map[:, None] + shift if nhat.ndim == 2 else self.m_map + shift

    def pointwise_variance(self, points) -> np.ndarray:
        """Prior variance minus the per-point variance reduction; clamped at
        zero if round-off drives it negative."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.prior.pointwise_variance(pts)
        if self.rank > 0:
            for i, x in enumerate(pts):
                phi = self.prior.mesh.basis_eval(x)
                out[i] -= float(self.d_diag @ (self.tilde_vectors.T @ phi) ** 2)
        if np.any(out < 0):
            floor = float(np.min(out))
            if floor < -1e-10 * max(1.0, float(np.max(np.abs(out)))):
                warnings.warn(f"posterior variance clipped at zero (min {floor:.3e})")
            out = np.clip(out, 0.0, None)
        return out
