"""Meshes, finite-element assembly, and mass-weighted linear algebra.

The parameter space is a continuous Lagrange finite-element space on a
uniform tensor-product mesh (1D intervals or 2D axis-aligned quads, (bi)linear
elements).  All inner products between nodal coefficient vectors are weighted
by the mass matrix M so that ``u^T M v`` approximates the L2 pairing of the
underlying fields; adjoints are always taken with respect to that weighted
inner product, which makes them differ from plain matrix transposes:

* an operator B mapping the weighted space to itself has adjoint ``M^-1 B^T M``,
* an operator F mapping the weighted space to Euclidean data has adjoint
  ``M^-1 F^T``,
* an operator V mapping Euclidean coefficients into the weighted space has
  adjoint ``V^T M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import SolverFailure

# 2-point Gauss rule on [-1, 1]: exact for cubics, hence for all products of
# (bi)linear basis functions on affine elements.
_GAUSS_PTS = np.array([-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)])
_GAUSS_WTS = np.array([1.0, 1.0])


def _shape_1d(xi):
    """Linear shape functions on [-1, 1], evaluated at points ``xi``."""
    xi = np.atleast_1d(xi)
    return np.stack([(1.0 - xi) / 2.0, (1.0 + xi) / 2.0], axis=-1)


# Derivatives of the 1D shape functions with respect to xi (constant).
_DSHAPE_1D = np.array([-0.5, 0.5])


@dataclass(frozen=True)
class Mesh:
    """Uniform tensor-product mesh with lexicographic node ordering.

    Nodes are in one-to-one correspondence with the Lagrange basis functions:
    ``basis_eval(node_coords[i])`` is the i-th unit vector.
    """

    dim: int
    node_coords: np.ndarray  # (n, dim)
    elements: np.ndarray     # (ne, 2) segments or (ne, 4) quads, CCW
    domain_bounds: tuple     # ((lo, hi), ...) per axis
    counts: tuple            # elements per axis

    @property
    def n(self) -> int:
        return self.node_coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def spacings(self) -> tuple:
        return tuple(
            (hi - lo) / c for (lo, hi), c in zip(self.domain_bounds, self.counts)
        )

    @property
    def measure(self) -> float:
        out = 1.0
        for lo, hi in self.domain_bounds:
            out *= hi - lo
        return out

    def contains(self, x) -> bool:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dim,):
            return False
        for xi, (lo, hi) in zip(x, self.domain_bounds):
            tol = 1e-10 * (hi - lo)
            if xi < lo - tol or xi > hi + tol:
                return False
        return True

    def _locate_axis(self, xi, axis):
        lo, hi = self.domain_bounds[axis]
        h = self.spacings[axis]
        idx = int(np.floor((xi - lo) / h))
        idx = min(max(idx, 0), self.counts[axis] - 1)
        local = 2.0 * (xi - (lo + idx * h)) / h - 1.0
        return idx, min(max(local, -1.0), 1.0)

    def basis_eval(self, x) -> np.ndarray:
        """Evaluate all Lagrange basis functions at a point of the domain.

        Returns the length-n vector (phi_1(x), ..., phi_n(x)); raises
        ValueError for points outside the domain.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.contains(x):
            raise ValueError(f"point {x} lies outside the domain {self.domain_bounds}")
        out = np.zeros(self.n)
        if self.dim == 1:
            el, xi = self._locate_axis(x[0], 0)
            out[el] = (1.0 - xi) / 2.0
            out[el + 1] = (1.0 + xi) / 2.0
        else:
            ex, xi = self._locate_axis(x[0], 0)
            ey, eta = self._locate_axis(x[1], 1)
            nx = self.counts[0] + 1
            base = ex + nx * ey
            nodes = (base, base + 1, base + 1 + nx, base + nx)
            vals = (
                (1 - xi) * (1 - eta) / 4.0,
                (1 + xi) * (1 - eta) / 4.0,
                (1 + xi) * (1 + eta) / 4.0,
                (1 - xi) * (1 + eta) / 4.0,
            )
            for idx, val in zip(nodes, vals):
                out[idx] = val
        return out


def build_mesh(dim, counts, bounds) -> Mesh:
    """Build a uniform mesh of the axis-aligned box ``bounds``.

    ``counts`` gives elements per axis (int for 1D, pair for 2D); nodes are
    ordered lexicographically with the x index varying fastest.
    """
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if np.isscalar(counts):
        counts = (int(counts),)
    counts = tuple(int(c) for c in counts)
    if len(counts) != dim:
        raise ValueError(f"expected {dim} element counts, got {counts}")
    if any(c < 1 for c in counts):
        raise ValueError(f"element counts must be >= 1, got {counts}")
    bounds = np.asarray(bounds, dtype=float)
    if bounds.ndim == 1:
        bounds = bounds[None, :]
    if bounds.shape != (dim, 2):
        raise ValueError(f"expected {dim} (lo, hi) bound pairs, got shape {bounds.shape}")
    if any(hi <= lo for lo, hi in bounds):
        raise ValueError(f"degenerate or inverted domain box {bounds.tolist()}")
    bounds_t = tuple((float(lo), float(hi)) for lo, hi in bounds)

    axes = [np.linspace(lo, hi, c + 1) for (lo, hi), c in zip(bounds_t, counts)]
    if dim == 1:
        coords = axes[0][:, None]
        idx = np.arange(counts[0])
        elements = np.stack([idx, idx + 1], axis=1)
    else:
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="xy")
        coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
        nx = counts[0] + 1
        ex, ey = np.meshgrid(np.arange(counts[0]), np.arange(counts[1]), indexing="xy")
        base = (ex + nx * ey).ravel()
        elements = np.stack([base, base + 1, base + 1 + nx, base + nx], axis=1)
    return Mesh(dim=dim, node_coords=coords, elements=elements.astype(np.int64),
                domain_bounds=bounds_t, counts=counts)


# ---------------------------------------------------------------------------
# anisotropy tensor


def radial_anisotropy_tensor(x, beta, theta, radius) -> np.ndarray:
    """Radially varying SPD tensor ``beta * (I - s(x) x x^T)``.

    The scalar profile is ``s(x) = (1-theta)/(radius*|x|^2) * (2|x| - |x|^2/radius)``
    away from the origin and 0 at the origin.  The radial eigenvalue shrinks
    from beta at the center to beta*theta at ``|x| = radius``, while tangential
    eigenvalues stay at beta, so correlation lengths are longer tangentially.
    Requires ``beta > 0`` and ``0 < theta <= 1``; points outside the ball of
    the given radius are rejected.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not 0.0 < theta <= 1.0:
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = x.shape[0]
    nx = float(np.linalg.norm(x))
    if nx > radius * (1.0 + 1e-12):
        raise ValueError(f"|x| = {nx} exceeds the modeled ball radius {radius}")
    eye = np.eye(d)
    if nx == 0.0:
        return beta * eye
    s = (1.0 - theta) / (radius * nx**2) * (2.0 * nx - nx**2 / radius)
    return beta * (eye - s * np.outer(x, x))


@dataclass(frozen=True)
class AnisotropySpec:
    """Diffusion tensor of the prior precision operator, per quadrature point.

    ``kind`` is "isotropic" (constant ``beta * I``) or "radial" (the radially
    anisotropic tensor above).  In 1D both kinds degenerate to the scalar beta.
    """

    kind: str
    beta: float
    theta: float = 1.0
    radius: float = 0.0

    def __post_init__(self):
        if self.kind not in ("isotropic", "radial"):
            raise ValueError(f"unknown anisotropy kind '{self.kind}'")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.kind == "radial":
            if not 0.0 < self.theta <= 1.0:
                raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
            if self.radius <= 0:
                raise ValueError(f"radius must be positive, got {self.radius}")

    @classmethod
    def isotropic(cls, beta):
        return cls(kind="isotropic", beta=float(beta))

    @classmethod
    def radial(cls, beta, theta, radius):
        return cls(kind="radial", beta=float(beta), theta=float(theta),
                   radius=float(radius))

    def tensor_at(self, x, dim) -> np.ndarray:
        if dim == 1 or self.kind == "isotropic":
            return self.beta * np.eye(dim)
        return radial_anisotropy_tensor(x, self.beta, self.theta, self.radius)


# ---------------------------------------------------------------------------
# assembly


def _quad_points_1d(mesh):
    """Physical quadrature points (ne, nq) and shape values for a 1D mesh."""
    h = mesh.spacings[0]
    left = mesh.node_coords[mesh.elements[:, 0], 0]
    xq = left[:, None] + (1.0 + _GAUSS_PTS[None, :]) * h / 2.0
    return xq, _shape_1d(_GAUSS_PTS), h


def _scatter(mesh, local):
    """Sum per-element local matrices (ne, a, a) into a CSR matrix."""
    conn = mesh.elements
    a = conn.shape[1]
    rows = np.repeat(conn, a, axis=1).ravel()
    cols = np.tile(conn, (1, a)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n, mesh.n))
    return mat.tocsr()


def assemble_mass(mesh: Mesh, coeff=None) -> sp.csr_matrix:
    """Assemble the mass matrix ``M_ij = int coeff(x) phi_i phi_j dx``.

    ``coeff`` is an optional nodal field (defaults to 1); the quadrature is
    exact for products of (bi)linear basis functions.  The result is
    symmetric positive definite.
    """
    if mesh.dim == 1:
        xq, phi, h = _quad_points_1d(mesh)
        jac = h / 2.0
        if coeff is None:
            cq = np.ones_like(xq)
        else:
            cq = np.asarray(coeff, float)[mesh.elements] @ phi.T
        local = np.einsum("q,eq,qa,qb->eab", _GAUSS_WTS * jac, cq, phi, phi)
    else:
        hx, hy = mesh.spacings
        jac = hx * hy / 4.0
        phi2, wts2 = _shape_quad()
        if coeff is None:
            cq = np.ones((mesh.n_elements, phi2.shape[0]))
        else:
            cq = np.asarray(coeff, float)[mesh.elements] @ phi2.T
        local = np.einsum("q,eq,qa,qb->eab", wts2 * jac, cq, phi2, phi2)
    local = 0.5 * (local + np.transpose(local, (0, 2, 1)))
    return _scatter(mesh, local)


def _shape_quad():
    """Bilinear shape values at the tensor 2x2 Gauss points of the quad."""
    pts = [(xi, eta) for eta in _GAUSS_PTS for xi in _GAUSS_PTS]
    vals = np.array([
        [(1 - xi) * (1 - eta) / 4.0,
         (1 + xi) * (1 - eta) / 4.0,
         (1 + xi) * (1 + eta) / 4.0,
         (1 - xi) * (1 + eta) / 4.0] for xi, eta in pts
    ])
    wts = np.array([wx * wy for wy in _GAUSS_WTS for wx in _GAUSS_WTS])
    return vals, wts


def _shape_quad_grads():
    """Reference gradients (nq, 4, 2) of the bilinear shape functions."""
    pts = [(xi, eta) for eta in _GAUSS_PTS for xi in _GAUSS_PTS]
    grads = np.array([
        [[-(1 - eta) / 4.0, -(1 - xi) / 4.0],
         [(1 - eta) / 4.0, -(1 + xi) / 4.0],
         [(1 + eta) / 4.0, (1 + xi) / 4.0],
         [-(1 + eta) / 4.0, (1 - xi) / 4.0]] for xi, eta in pts
    ])
    return grads


def assemble_prior_stiffness(mesh: Mesh, alpha, anisotropy: AnisotropySpec) -> sp.csr_matrix:
    """Assemble ``K_ij = alpha * int (Theta grad phi_i) . grad phi_j + phi_i phi_j dx``.

    This is the Galerkin matrix of the elliptic precision operator with a
    natural (zero-flux) boundary condition; on constant vectors the gradient
    term vanishes, so ``K c = alpha M c``.  The tensor is checked for
    symmetric positive definiteness at every quadrature point.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    grad = assemble_weighted_gradient_stiffness(mesh, anisotropy)
    mass = assemble_mass(mesh)
    out = alpha * (grad + mass)
    return out.tocsr()


def assemble_weighted_gradient_stiffness(mesh: Mesh, anisotropy: AnisotropySpec) -> sp.csr_matrix:
    """Assemble ``S_ij = int (Theta grad phi_i) . grad phi_j dx`` (no mass term)."""
    if mesh.dim == 1:
        xq, _, h = _quad_points_1d(mesh)
        jac = h / 2.0
        dphi = _DSHAPE_1D * (2.0 / h)  # physical derivatives, constant per element
        theta_q = np.empty_like(xq)
        for e in range(mesh.n_elements):
            for q in range(xq.shape[1]):
                theta_q[e, q] = float(anisotropy.tensor_at(xq[e, q:q + 1], 1)[0, 0])
        if np.any(theta_q <= 0):
            raise ValueError("anisotropy tensor is not positive at a quadrature point")
        wsum = (_GAUSS_WTS * jac) @ theta_q.T  # (ne,)
        local = wsum[:, None, None] * np.outer(dphi, dphi)[None, :, :]
    else:
        hx, hy = mesh.spacings
        jac = hx * hy / 4.0
        phi2, wts2 = _shape_quad()
        grads_ref = _shape_quad_grads()
        grads = grads_ref.copy()
        grads[:, :, 0] *= 2.0 / hx
        grads[:, :, 1] *= 2.0 / hy
        nq = phi2.shape[0]
        corners = mesh.node_coords[mesh.elements]  # (ne, 4, 2)
        xq = np.einsum("qa,ead->eqd", phi2, corners)
        theta_q = np.empty((mesh.n_elements, nq, 2, 2))
        for e in range(mesh.n_elements):
            for q in range(nq):
                theta_q[e, q] = anisotropy.tensor_at(xq[e, q], 2)
        evals = np.linalg.eigvalsh(theta_q.reshape(-1, 2, 2))
        if np.any(evals <= 0):
            raise ValueError("anisotropy tensor is not SPD at a quadrature point")
        local = np.einsum("q,eqcd,qad,qbc->eab", wts2 * jac, theta_q, grads, grads)
    local = 0.5 * (local + np.transpose(local, (0, 2, 1)))
    return _scatter(mesh, local)


# ---------------------------------------------------------------------------
# solves and the weighted inner-product algebra


def solve_spd(matrix, rhs, tol=1e-12, maxiter=None) -> np.ndarray:
    """Solve an SPD system by Jacobi-preconditioned conjugate gradients.

    Accepts a single right-hand side or a matrix of columns (solved
    simultaneously with per-column step sizes).  Returns x with
    ``|matrix x - rhs|_2 <= tol * |rhs|_2`` per column; deterministic for
    fixed inputs.  Raises SolverFailure (carrying the worst relative
    residual) if the iteration cap is reached first.
    """
    b = np.asarray(rhs, dtype=float)
    single = b.ndim == 1
    B = b[:, None].copy() if single else np.array(b, dtype=float)
    n = B.shape[0]
    if matrix.shape != (n, n):
        raise ValueError(f"matrix shape {matrix.shape} does not match rhs length {n}")
    if maxiter is None:
        maxiter = max(500, 20 * n)
    diag = np.asarray(matrix.diagonal(), dtype=float)
    if np.any(diag <= 0):
        raise ValueError("matrix diagonal has nonpositive entries; not SPD")
    dinv = 1.0 / diag

    bnorm = np.linalg.norm(B, axis=0)
    X = np.zeros_like(B)
    active = np.flatnonzero(bnorm > 0)
    if active.size == 0:
        return X[:, 0] if single else X

    R = B[:, active].copy()
    Z = dinv[:, None] * R
    P = Z.copy()
    rz = np.einsum("ij,ij->j", R, Z)
    targets = tol * bnorm[active]
    cols = active.copy()

    for _ in range(maxiter):
        Q = matrix @ P
        pq = np.einsum("ij,ij->j", P, Q)
        # pq > 0 for SPD systems unless a column has fully converged
        alpha = np.where(pq > 0, rz / np.where(pq > 0, pq, 1.0), 0.0)
        X[:, cols] += alpha * P
        R -= alpha * Q
        res = np.linalg.norm(R, axis=0)
        done = res <= targets
        if np.any(done):
            keep = ~done
            if not np.any(keep):
                return X[:, 0] if single else X
            cols = cols[keep]
            R = R[:, keep]
            P = P[:, keep]
            rz = rz[keep]
            targets = targets[keep]
        Z = dinv[:, None] * R
        rz_new = np.einsum("ij,ij->j", R, Z)
        beta = rz_new / np.where(rz > 0, rz, 1.0)
        rz = rz_new
        P = Z + beta * P

    worst = float(np.max(np.linalg.norm(R, axis=0) / targets * tol))
    raise SolverFailure(
        f"conjugate gradients did not reach tol={tol} within {maxiter} iterations "
        f"(relative residual {worst:.3e})", residual=worst)


class MassSpace:
    """The mass matrix together with its weighted inner-product machinery.

    Holds the lumped (row-sum) diagonal used for fast approximate square
    roots of M, and an optional dense symmetric square root for small test
    problems where lumping error must be excluded.
    """

    EXACT_SQRT_LIMIT = 500

    # The mass matrix is uniformly well conditioned, so a tight default
    # keeps adjoint identities near machine precision at negligible cost.
    def __init__(self, mass: sp.csr_matrix, solve_tol=1e-13):
        self.matrix = mass.tocsr()
        self.n = mass.shape[0]
        self.solve_tol = solve_tol
        self.lumped = np.asarray(mass.sum(axis=1)).ravel()
        if np.any(self.lumped <= 0):
            raise ValueError("lumped mass diagonal has nonpositive entries")
        self._eig_cache = None

    def inner(self, u, v) -> float:
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        if u.shape != (self.n,) or v.shape != (self.n,):
            raise ValueError(f"expected length-{self.n} vectors, got {u.shape} and {v.shape}")
        return float(u @ (self.matrix @ v))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def solve(self, rhs, tol=None):
        return solve_spd(self.matrix, rhs, tol=self.solve_tol if tol is None else tol)

    def apply_lumped_sqrt(self, v, power) -> np.ndarray:
        """Multiply componentwise by the lumped diagonal to the power +-1/2."""
        if power not in (0.5, -0.5):
            raise ValueError(f"power must be +0.5 or -0.5, got {power}")
        scale = self.lumped ** power
        v = np.asarray(v, float)
        return scale[:, None] * v if v.ndim == 2 else scale * v

    def _eig(self):
        if self._eig_cache is None:
            if self.n > self.EXACT_SQRT_LIMIT:
                raise ValueError(
                    f"exact mass square root is limited to n <= {self.EXACT_SQRT_LIMIT}")
            w, q = np.linalg.eigh(self.matrix.toarray())
            if np.any(w <= 0):
                raise ValueError("mass matrix is not positive definite")
            self._eig_cache = (w, q)
        return self._eig_cache

    def apply_exact_sqrt(self, v, power) -> np.ndarray:
        """Dense symmetric square root of M (test mode, small n only)."""
        if power not in (0.5, -0.5):
            raise ValueError(f"power must be +0.5 or -0.5, got {power}")
        w, q = self._eig()
        scaled = w ** power
        v = np.asarray(v, float)
        return q @ (scaled[:, None] * (q.T @ v)) if v.ndim == 2 else q @ (scaled * (q.T @ v))

    def apply_mass_sqrt(self, v, power, exact=False) -> np.ndarray:
        return self.apply_exact_sqrt(v, power) if exact else self.apply_lumped_sqrt(v, power)


def apply_adjoint(op: np.ndarray, kind: str, vec, mspace: MassSpace) -> np.ndarray:
    """Apply the mass-weighted adjoint of a dense operator to a vector.

    ``kind`` names the operator's mapping:

    * ``"weighted_to_weighted"``: adjoint is ``M^-1 op^T M`` (n -> n),
    * ``"weighted_to_euclidean"``: adjoint is ``M^-1 op^T`` (data -> n),
    * ``"euclidean_to_weighted"``: adjoint is ``op^T M`` (n -> coefficients).

    In every case ``(adjoint(y), x)`` in the domain inner product equals
    ``(y, op x)`` in the range inner product.
    """
    op = np.asarray(op, float)
    vec = np.asarray(vec, float)
    n = mspace.n
    if kind == "weighted_to_weighted":
        if op.shape != (n, n) or vec.shape != (n,):
            raise ValueError(f"shape mismatch: op {op.shape}, vec {vec.shape}, n={n}")
        return mspace.solve(op.T @ (mspace.matrix @ vec))
    if kind == "weighted_to_euclidean":
        if op.ndim != 2 or op.shape[1] != n or vec.shape != (op.shape[0],):
            raise ValueError(f"shape mismatch: op {op.shape}, vec {vec.shape}, n={n}")
        return mspace.solve(op.T @ vec)
    if kind == "euclidean_to_weighted":
        if op.ndim != 2 or op.shape[0] != n or vec.shape != (n,):
            raise ValueError(f"shape mismatch: op {op.shape}, vec {vec.shape}, n={n}")
        return op.T @ (mspace.matrix @ vec)
    raise ValueError(f"unknown adjoint kind '{kind}'")
