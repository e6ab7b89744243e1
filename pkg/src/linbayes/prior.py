"""Gaussian field prior with a squared-inverse-elliptic covariance.

The covariance never exists as a matrix: it acts through solves with the
elliptic stiffness matrix K and multiplications by the mass matrix M,

* covariance action:        ``K^-1 M K^-1 M``   (two elliptic solves)
* covariance square root:   ``K^-1 M``
* precision action:         ``M^-1 K M^-1 K``
* sampling:                 ``mean + K^-1 M^{1/2} nhat``

All four are self-adjoint in the M-weighted inner product.  ``M^{1/2}`` uses
the lumped mass diagonal by default; an exact dense square root is available
at small n so tests can isolate the lumping error.
"""

from __future__ import annotations

import numpy as np

from .fem import (AnisotropySpec, MassSpace, Mesh, assemble_mass,
                  assemble_prior_stiffness, solve_spd)


class PriorModel:
    """Gaussian prior over nodal coefficient vectors.

    Immutable after construction; every operation is a pure function of its
    arguments (callers own random-number state).
    """

    def __init__(self, mesh: Mesh, mspace: MassSpace, stiffness, mean,
                 alpha, anisotropy: AnisotropySpec, solve_tol=1e-12):
        self.mesh = mesh
        self.mspace = mspace
        self.stiffness = stiffness.tocsr()
        self.mean = np.asarray(mean, dtype=float)
        self.alpha = float(alpha)
        self.anisotropy = anisotropy
        self.solve_tol = solve_tol
        if self.mean.shape != (mspace.n,):
            raise ValueError(f"mean has shape {self.mean.shape}, expected ({mspace.n},)")

    @property
    def n(self) -> int:
        return self.mspace.n

    def solve_stiffness(self, rhs):
        return solve_spd(self.stiffness, rhs, tol=self.solve_tol)

    def apply_covariance(self, v) -> np.ndarray:
        """Covariance action ``K^-1 M K^-1 M v`` (columnwise for 2-D input)."""
        m = self.mspace.matrix
        return self.solve_stiffness(m @ self.solve_stiffness(m @ np.asarray(v, float)))

    def apply_covariance_sqrt(self, v) -> np.ndarray:
        """Square-root action ``K^-1 M v``; composing it twice gives the covariance."""
        return self.solve_stiffness(self.mspace.matrix @ np.asarray(v, float))

    def apply_precision(self, v) -> np.ndarray:
        """Precision action ``M^-1 K M^-1 K v``."""
        k = self.stiffness
        return self.mspace.solve(k @ self.mspace.solve(k @ np.asarray(v, float)))

    def log_density(self, m) -> float:
        """Unnormalized log density ``-1/2 (m - mean)^T K M^-1 K (m - mean)``."""
        d = np.asarray(m, float) - self.mean
        t = self.stiffness @ d
        return -0.5 * float(t @ self.mspace.solve(t))

    def sample(self, nhat, exact_mass_sqrt=False) -> np.ndarray:
        """Draw ``mean + K^-1 M^{1/2} nhat`` from a standard-normal vector.

        ``nhat`` may hold several standard-normal columns; one sample per
        column is returned.
        """
        nhat = np.asarray(nhat, float)
        half = self.mspace.apply_mass_sqrt(nhat, 0.5, exact=exact_mass_sqrt)
        shift = self.solve_stiffness(half)
        return self.mean[:, None] + shift if nhat.ndim == 2 else self.mean + shift

    def pointwise_variance(self, points) -> np.ndarray:
        """Variance of the field at query points, one elliptic solve per point.

        At a node x_i this equals the (i, i) entry of ``K^-1 M K^-1``.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.empty(pts.shape[0])
        for i, x in enumerate(pts):
            w = self.solve_stiffness(self.mesh.basis_eval(x))
            out[i] = w @ (self.mspace.matrix @ w)
        return out

    def covariance_function(self, x, y) -> float:
        return covariance_function(self.apply_covariance, self.mesh, self.mspace, x, y)


def covariance_function(gamma_action, mesh: Mesh, mspace: MassSpace, x, y) -> float:
    """Discretized covariance function ``Phi(x)^T Gamma M^-1 Phi(y)``.

    ``gamma_action`` is any covariance action on the weighted space (prior or
    low-rank posterior); ``Phi(z)`` is the basis-evaluation vector at z.
    """
    phi_x = mesh.basis_eval(x)
    phi_y = mesh.basis_eval(y)
    return float(phi_x @ gamma_action(mspace.solve(phi_y)))


def build_prior(mesh: Mesh, alpha, anisotropy: AnisotropySpec, mean=None,
                solve_tol=1e-12, mspace: MassSpace = None) -> PriorModel:
    """Assemble mass and stiffness for a mesh and wrap them in a PriorModel."""
    if mspace is None:
        mspace = MassSpace(assemble_mass(mesh), solve_tol=solve_tol)
    stiffness = assemble_prior_stiffness(mesh, alpha, anisotropy)
    if mean is None:
        mean = np.zeros(mesh.n)
    return PriorModel(mesh, mspace, stiffness, mean, alpha, anisotropy,
                      solve_tol=solve_tol)
