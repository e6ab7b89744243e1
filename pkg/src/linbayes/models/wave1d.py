"""1D first-order acoustic wave propagation with exact discrete adjoints.

State variables are the velocity v and the dilatation e on the same linear
finite-element mesh as the parameter (the wavespeed c), with lumped mass
matrices and classical four-stage Runge-Kutta time stepping:

    lumped(rho)   dv/dt = -C(c) e + g(t),    C(c)_ij = int rho c^2 phi_i' phi_j dx
    lumped(1)     de/dt =  D v,              D_ij    = int phi_i phi_j' dx

with e pinned to zero at both interval endpoints and zero initial conditions.
The wavespeed enters only through C(c).

The adjoint, incremental-forward and incremental-adjoint solvers are the
exact transposes/linearizations of the discrete time stepper (reverse-mode
differentiation through the Runge-Kutta stages), not discretizations of the
continuous adjoint equations.  This makes gradient and adjoint identities
hold to solver precision, so finite-difference checks pass at tight
tolerances.  Gradient contributions are accumulated stage by stage during the
reverse sweep, pairing adjoint stage values against forward stage values; the
second-order terms absent from the Gauss-Newton Hessian never arise because
the sweep is seeded with linearized data only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InvalidParameterError, StabilityError
from ..fem import _DSHAPE_1D, _GAUSS_WTS, MassSpace, Mesh, _quad_points_1d, assemble_mass
from .base import ForwardModel, ObservationSetup

_BLOWUP_FACTOR = 1e6


@dataclass(frozen=True)
class SourceSpec:
    """Smoothed point source: spatial Gaussian bump times a temporal Gaussian."""

    position: float
    width: float
    time_center: float
    time_std: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.time_std <= 0:
            raise ValueError("source width and time_std must be positive")

    def time_factor(self, t: float) -> float:
        return float(np.exp(-0.5 * ((t - self.time_center) / self.time_std) ** 2))


@dataclass(frozen=True)
class WaveConfig:
    mesh: Mesh
    final_time: float
    dt: float
    source: SourceSpec
    rho: object = 1.0          # scalar or nodal array
    cfl: float = 0.5

    def __post_init__(self):
        if self.mesh.dim != 1:
            raise ConfigError("the wave model runs on 1D meshes only")
        if self.final_time <= 0 or self.dt <= 0:
            raise ConfigError("final_time and dt must be positive")
        steps = self.final_time / self.dt
        if abs(steps - round(steps)) > 1e-8 * max(steps, 1.0):
            raise ConfigError(
                f"final_time/dt = {steps} must be an integer number of steps")
        if not 0.0 < self.cfl <= 0.5:
            raise ConfigError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        lo, hi = self.mesh.domain_bounds[0]
        if not lo <= self.source.position <= hi:
            raise ConfigError(
                f"source position {self.source.position} outside the domain")
        rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (self.mesh.n,))
        if np.any(rho <= 0):
            raise ConfigError("density must be strictly positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    def nodal_rho(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rho, dtype=float), (self.mesh.n,)).copy()


@dataclass
class StateHistory:
    """Per-step nodal fields of a (forward, adjoint, or incremental) solve.

    ``v`` holds the velocity-like variable, ``e`` the dilatation-like one;
    row k is the state at time k*dt regardless of sweep direction, so forward
    solves carry their initial condition in row 0 and backward solves carry
    their terminal condition in the last row.
    """

    v: np.ndarray   # (steps+1, n)
    e: np.ndarray   # (steps+1, n)
    dt: float

    @property
    def n_steps(self) -> int:
        return self.v.shape[0] - 1


@dataclass
class AdjointSolution:
    """Backward sweep output: the adjoint history plus the accumulated
    Euclidean wavespeed gradient (pair it with M^-1 for the weighted one)."""

    history: StateHistory
    param_gradient: np.ndarray


class _TriBand:
    """Tridiagonal matrix as three length-n bands, with fast slice matvecs.

    ``sub[i] = A[i, i-1]``, ``diag[i] = A[i, i]``, ``sup[i] = A[i, i+1]``.
    Every operator of the semi-discrete system is tridiagonal on the uniform
    1D mesh, and slice arithmetic beats sparse-matrix dispatch by an order of
    magnitude at these sizes.
    """

    __slots__ = ("sub", "diag", "sup")

    def __init__(self, sub, diag, sup):
        self.sub = sub
        self.diag = diag
        self.sup = sup

    def apply(self, x):
        out = self.diag * x
        out[1:] += self.sub[1:] * x[:-1]
        out[:-1] += self.sup[:-1] * x[1:]
        return out

    def apply_transpose(self, x):
        out = self.diag * x
        out[1:] += self.sup[:-1] * x[:-1]
        out[:-1] += self.sub[1:] * x[1:]
        return out

    def toarray(self):
        n = self.diag.shape[0]
        out = np.diag(self.diag)
        out += np.diag(self.sub[1:], -1)
        out += np.diag(self.sup[:-1], 1)
        return out


def _assemble_triband(n, local):
    """Scatter per-element 2x2 local matrices (ne, 2, 2) into bands; element
    l couples nodes l and l+1 on a uniform mesh."""
    sub = np.zeros(n)
    diag = np.zeros(n)
    sup = np.zeros(n)
    diag[:-1] += local[:, 0, 0]
    diag[1:] += local[:, 1, 1]
    sup[:-1] = local[:, 0, 1]
    sub[1:] = local[:, 1, 0]
    return _TriBand(sub, diag, sup)


class _Discretization:
    """Quadrature tables and fixed operators of the semi-discrete system."""

    def __init__(self, config: WaveConfig):
        mesh = config.mesh
        self.mesh = mesh
        self.n = mesh.n
        self.conn = mesh.elements
        xq, phi, h = _quad_points_1d(mesh)
        self.h = h
        self.phi = phi                      # (nq, 2) shape values
        self.wj = _GAUSS_WTS * h / 2.0      # quadrature weights * jacobian
        self.dphi = _DSHAPE_1D * 2.0 / h    # physical derivatives, constant

        rho = config.nodal_rho()
        self.rho = rho
        self.rho_q = rho[self.conn] @ phi.T  # (ne, nq)

        self.lumped_rho = np.asarray(assemble_mass(mesh, coeff=rho).sum(axis=1)).ravel()
        lumped_plain = np.asarray(assemble_mass(mesh).sum(axis=1)).ravel()
        self.inv_mrho = 1.0 / self.lumped_rho
        self.inv_me = np.zeros(self.n)
        self.inv_me[1:-1] = 1.0 / lumped_plain[1:-1]  # dilatation pinned at ends

        # D_ij = int phi_i phi_j' dx
        local = np.einsum("q,qa,b->ab", self.wj, phi, self.dphi)
        self.grad_pairing = _assemble_triband(
            self.n, np.broadcast_to(local, (self.conn.shape[0], 2, 2)))

        src = config.source
        bump = src.amplitude * np.exp(-0.5 * ((xq - src.position) / src.width) ** 2)
        load = np.zeros(self.n)
        np.add.at(load, self.conn.ravel(), ((self.wj[None, :] * bump) @ phi).ravel())
        self.source_v = self.inv_mrho * load
        self.time_factor = src.time_factor

    def wavespeed_coupling(self, c, dc=None) -> _TriBand:
        """``C(c)_ij = int rho c^2 phi_i' phi_j dx`` or, given ``dc``, its
        derivative ``int 2 rho c dc phi_i' phi_j dx``."""
        cq = np.asarray(c, float)[self.conn] @ self.phi.T
        if dc is None:
            coeff = self.rho_q * cq**2
        else:
            dcq = np.asarray(dc, float)[self.conn] @ self.phi.T
            coeff = 2.0 * self.rho_q * cq * dcq
        local = np.einsum("q,eq,a,qb->eab", self.wj, coeff, self.dphi, self.phi)
        return _assemble_triband(self.n, local)

    def rate(self, coupling, v, e):
        dv = -self.inv_mrho * coupling.apply(e)
        de = self.inv_me * self.grad_pairing.apply(v)
        return dv, de

    def rate_transpose(self, coupling, pv, pe):
        out_v = self.grad_pairing.apply_transpose(self.inv_me * pe)
        out_e = -coupling.apply_transpose(self.inv_mrho * pv)
        out_e[0] = 0.0
        out_e[-1] = 0.0
        return out_v, out_e

    def accumulate_wavespeed_gradient(self, c, w, e, out, scale=1.0):
        """``out_k += scale * int 2 rho c phi_k w' e dx`` by element quadrature."""
        wprime = (w[self.conn[:, 1]] - w[self.conn[:, 0]]) / self.h
        eq = e[self.conn] @ self.phi.T
        cq = np.asarray(c, float)[self.conn] @ self.phi.T
        contrib = (scale * 2.0) * (self.wj[None, :] * self.rho_q * cq
                                   * wprime[:, None] * eq)
        vals = contrib @ self.phi
        out[:-1] += vals[:, 0]
        out[1:] += vals[:, 1]


def _validate_wavespeed(config: WaveConfig, c, check_cfl):
    c = np.asarray(c, dtype=float)
    if c.shape != (config.mesh.n,):
        raise ValueError(f"wavespeed has shape {c.shape}, expected ({config.mesh.n},)")
    if np.any(c <= 0):
        raise InvalidParameterError("wavespeed must be strictly positive at all nodes")
    if check_cfl:
        h = config.mesh.spacings[0]
        limit = config.cfl * h / float(np.max(c))
        if config.dt > limit * (1.0 + 1e-12):
            raise ConfigError(
                f"dt = {config.dt} violates the stability bound {limit:.3e} "
                f"(cfl = {config.cfl}, h = {h}, max c = {float(np.max(c))})")
    return c


def _forward_stages(disc, coupling, v, e, t, dt):
    """Recompute the four Runge-Kutta stage states of one forward step."""
    tf = disc.time_factor
    src = disc.source_v
    k1v, k1e = disc.rate(coupling, v, e)
    k1v = k1v + tf(t) * src
    s2v, s2e = v + 0.5 * dt * k1v, e + 0.5 * dt * k1e
    k2v, k2e = disc.rate(coupling, s2v, s2e)
    k2v = k2v + tf(t + 0.5 * dt) * src
    s3v, s3e = v + 0.5 * dt * k2v, e + 0.5 * dt * k2e
    k3v, k3e = disc.rate(coupling, s3v, s3e)
    k3v = k3v + tf(t + 0.5 * dt) * src
    s4v, s4e = v + dt * k3v, e + dt * k3e
    k4v, k4e = disc.rate(coupling, s4v, s4e)
    k4v = k4v + tf(t + dt) * src
    stages = ((v, e), (s2v, s2e), (s3v, s3e), (s4v, s4e))
    rates = ((k1v, k1e), (k2v, k2e), (k3v, k3e), (k4v, k4e))
    return stages, rates


def _advance(v, e, rates, dt):
    (k1v, k1e), (k2v, k2e), (k3v, k3e), (k4v, k4e) = rates
    v_new = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    e_new = e + dt / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
    return v_new, e_new


def _check_blowup(v, e, driver_cum):
    if driver_cum <= 0.0:
        return
    norm = max(float(np.max(np.abs(v))), float(np.max(np.abs(e))))
    if norm > _BLOWUP_FACTOR * driver_cum:
        raise StabilityError(
            f"field norm {norm:.3e} exceeds {_BLOWUP_FACTOR:.0e} times the "
            f"integrated driver magnitude {driver_cum:.3e}")


def _forward_core(disc, config, c):
    coupling = disc.wavespeed_coupling(c)
    steps, dt = config.n_steps, config.dt
    vs = np.zeros((steps + 1, disc.n))
    es = np.zeros((steps + 1, disc.n))
    v = np.zeros(disc.n)
    e = np.zeros(disc.n)
    src_peak = float(np.max(np.abs(disc.source_v)))
    driver_cum = 0.0
    for k in range(steps):
        t = k * dt
        _, rates = _forward_stages(disc, coupling, v, e, t, dt)
        v, e = _advance(v, e, rates, dt)
        vs[k + 1] = v
        es[k + 1] = e
        driver_cum += dt * src_peak * disc.time_factor(t)
        _check_blowup(v, e, driver_cum)
    return StateHistory(v=vs, e=es, dt=dt), coupling


def solve_forward(config: WaveConfig, wavespeed, check_cfl=True) -> StateHistory:
    """Integrate the wave system from zero initial conditions."""
    c = _validate_wavespeed(config, wavespeed, check_cfl)
    disc = _Discretization(config)
    history, _ = _forward_core(disc, config, c)
    return history


def _require_partner(config, history, name):
    if history is None or history.v.shape != (config.n_steps + 1, config.mesh.n):
        raise ValueError(f"this solve requires the {name} history of the same "
                         f"configuration (shape ({config.n_steps + 1}, {config.mesh.n}))")


def _incremental_forward_core(disc, config, c, coupling, dc, forward):
    coupling_dot = disc.wavespeed_coupling(c, dc=dc)
    steps, dt = config.n_steps, config.dt
    vs = np.zeros((steps + 1, disc.n))
    es = np.zeros((steps + 1, disc.n))
    uv = np.zeros(disc.n)
    ue = np.zeros(disc.n)
    driver_cum = 0.0
    for k in range(steps):
        t = k * dt
        stages, _ = _forward_stages(disc, coupling, forward.v[k], forward.e[k], t, dt)
        srcs = [-disc.inv_mrho * coupling_dot.apply(se) for (_, se) in stages]
        k1v, k1e = disc.rate(coupling, uv, ue)
        k1v = k1v + srcs[0]
        s2v, s2e = uv + 0.5 * dt * k1v, ue + 0.5 * dt * k1e
        k2v, k2e = disc.rate(coupling, s2v, s2e)
        k2v = k2v + srcs[1]
        s3v, s3e = uv + 0.5 * dt * k2v, ue + 0.5 * dt * k2e
        k3v, k3e = disc.rate(coupling, s3v, s3e)
        k3v = k3v + srcs[2]
        s4v, s4e = uv + dt * k3v, ue + dt * k3e
        k4v, k4e = disc.rate(coupling, s4v, s4e)
        k4v = k4v + srcs[3]
        uv, ue = _advance(uv, ue, (((k1v, k1e), (k2v, k2e), (k3v, k3e), (k4v, k4e))), dt)
        vs[k + 1] = uv
        es[k + 1] = ue
        driver_cum += dt * float(np.max(np.abs(srcs[0])))
        _check_blowup(uv, ue, driver_cum)
    return StateHistory(v=vs, e=es, dt=dt)


def solve_incremental_forward(config: WaveConfig, wavespeed, direction,
                              forward: StateHistory) -> StateHistory:
    """Linearization of the forward solve in a wavespeed direction.

    Requires the forward history at the linearization point; the source is
    the derivative of the wavespeed coupling applied to the forward stages.
    """
    c = _validate_wavespeed(config, wavespeed, check_cfl=False)
    _require_partner(config, forward, "forward")
    dc = np.asarray(direction, dtype=float)
    if dc.shape != (config.mesh.n,):
        raise ValueError(f"direction has shape {dc.shape}, expected ({config.mesh.n},)")
    disc = _Discretization(config)
    coupling = disc.wavespeed_coupling(c)
    return _incremental_forward_core(disc, config, c, coupling, dc, forward)


def _reverse_sweep_core(disc, config, c, coupling, step_seeds, forward):
    steps, dt = config.n_steps, config.dt
    lam_v = step_seeds[steps].copy()
    lam_e = np.zeros(disc.n)
    vs = np.zeros((steps + 1, disc.n))
    es = np.zeros((steps + 1, disc.n))
    vs[steps] = lam_v
    grad = np.zeros(disc.n)
    driver_cum = float(np.max(np.abs(step_seeds[steps]), initial=0.0))
    weights = (dt / 6.0, dt / 3.0, dt / 3.0, dt / 6.0)
    # stage-state carries: s2 = u + dt/2 k1, s3 = u + dt/2 k2, s4 = u + dt k3
    carries = (0.5 * dt, 0.5 * dt, dt)
    for k in range(steps - 1, -1, -1):
        t = k * dt
        stages, _ = _forward_stages(disc, coupling, forward.v[k], forward.e[k], t, dt)
        kb = [(w * lam_v, w * lam_e) for w in weights]
        ub_v = lam_v.copy()
        ub_e = lam_e.copy()
        for stage in (3, 2, 1, 0):
            kb_v, kb_e = kb[stage]
            sb_v, sb_e = disc.rate_transpose(coupling, kb_v, kb_e)
            disc.accumulate_wavespeed_gradient(
                c, disc.inv_mrho * kb_v, stages[stage][1], grad, scale=-1.0)
            ub_v += sb_v
            ub_e += sb_e
            if stage > 0:
                pv, pe = kb[stage - 1]
                kb[stage - 1] = (pv + carries[stage - 1] * sb_v,
                                 pe + carries[stage - 1] * sb_e)
        lam_v = ub_v + step_seeds[k]
        lam_e = ub_e
        vs[k] = lam_v
        es[k] = lam_e
        driver_cum += float(np.max(np.abs(step_seeds[k]), initial=0.0))
        _check_blowup(lam_v, lam_e, driver_cum)
    return AdjointSolution(StateHistory(v=vs, e=es, dt=dt), grad)


def solve_adjoint(config: WaveConfig, wavespeed, step_seeds,
                  forward: StateHistory) -> AdjointSolution:
    """Backward sweep of the exact transpose of the discrete time stepper.

    ``step_seeds`` is the (steps+1, n) array of per-step adjoint sources on
    the velocity slot (for a data misfit: the noise-weighted residual pulled
    back through the observation operator).  The forward history at the same
    wavespeed is required for the gradient accumulation.
    """
    c = _validate_wavespeed(config, wavespeed, check_cfl=False)
    _require_partner(config, forward, "forward")
    seeds = np.asarray(step_seeds, dtype=float)
    if seeds.shape != (config.n_steps + 1, config.mesh.n):
        raise ValueError(f"step_seeds has shape {seeds.shape}, expected "
                         f"({config.n_steps + 1}, {config.mesh.n})")
    disc = _Discretization(config)
    coupling = disc.wavespeed_coupling(c)
    return _reverse_sweep_core(disc, config, c, coupling, seeds, forward)


def solve_incremental_adjoint(config: WaveConfig, wavespeed, step_seeds,
                              forward: StateHistory) -> AdjointSolution:
    """Backward sweep driven by linearized data (the Gauss-Newton reduction
    drops the second-order source term, so the equations coincide with the
    adjoint ones up to the seed)."""
    return solve_adjoint(config, wavespeed, step_seeds, forward)


def energy_history(config: WaveConfig, wavespeed, history: StateHistory) -> np.ndarray:
    """Discrete energy ``1/2 int rho v^2 + rho c^2 e^2 dx`` per stored step."""
    c = np.asarray(wavespeed, dtype=float)
    mesh = config.mesh
    rho = config.nodal_rho()
    lumped_rho = np.asarray(assemble_mass(mesh, coeff=rho).sum(axis=1)).ravel()
    lumped_rc2 = np.asarray(assemble_mass(mesh, coeff=rho * c**2).sum(axis=1)).ravel()
    return 0.5 * (history.v**2 @ lumped_rho + history.e**2 @ lumped_rc2)


class _ObservationOperator:
    """Linear map from a velocity history to the observation vector, with its
    exact transpose for seeding adjoint sweeps."""

    def __init__(self, setup: ObservationSetup, mesh: Mesh, n_steps: int, dt: float):
        self.setup = setup
        positions = [np.atleast_1d(p) for p in setup.receiver_positions]
        self.rec_phi = np.stack([mesh.basis_eval(p) for p in positions])  # (R, n)
        times = np.asarray(setup.sample_times, dtype=float)
        horizon = n_steps * dt
        if times[-1] > horizon * (1.0 + 1e-12):
            raise ConfigError(
                f"sample time {times[-1]} exceeds the final time {horizon}")
        idx = np.minimum((times / dt).astype(int), n_steps - 1)
        self.idx = idx
        self.frac = times / dt - idx
        self.n_steps = n_steps
        if setup.fourier_truncation is None:
            self.dft = None
        else:
            s_count = len(times)
            k = setup.fourier_truncation
            s = np.arange(s_count)
            rows = [np.full(s_count, 1.0 / s_count)]
            for j in range(1, k):
                ang = 2.0 * np.pi * j * s / s_count
                rows.append(2.0 / s_count * np.cos(ang))
                rows.append(2.0 / s_count * np.sin(ang))
            self.dft = np.stack(rows)  # (2k-1, S)

    def sampled_series(self, vhist) -> np.ndarray:
        seis = vhist @ self.rec_phi.T                       # (steps+1, R)
        lo = seis[self.idx]
        hi = seis[self.idx + 1]
        return (1.0 - self.frac)[:, None] * lo + self.frac[:, None] * hi  # (S, R)

    def extract(self, vhist) -> np.ndarray:
        samp = self.sampled_series(vhist)
        per = samp.T if self.dft is None else (self.dft @ samp).T  # (R, per)
        return per.ravel()

    def step_seeds(self, dy) -> np.ndarray:
        """Transpose of ``extract``: observation adjoint as per-step sources."""
        dy = np.asarray(dy, dtype=float)
        n_rec = self.rec_phi.shape[0]
        per = dy.reshape(n_rec, -1).T                       # (per, R)
        series = per if self.dft is None else self.dft.T @ per  # (S, R)
        weights = np.zeros((self.n_steps + 1, n_rec))
        np.add.at(weights, self.idx, (1.0 - self.frac)[:, None] * series)
        np.add.at(weights, self.idx + 1, self.frac[:, None] * series)
        return weights @ self.rec_phi                       # (steps+1, n)


class WaveModel(ForwardModel):
    """Wave propagator behind the forward-model contract.

    The parameter is the nodal wavespeed itself.  The model caches the
    forward solve at the most recent parameter so repeated linearized actions
    at a fixed point (as in inner CG loops) reuse one propagation.
    """

    def __init__(self, config: WaveConfig, observation: ObservationSetup,
                 mspace: MassSpace = None):
        self.config = config
        self.disc = _Discretization(config)
        self.mspace = mspace if mspace is not None else MassSpace(assemble_mass(config.mesh))
        if self.mspace.n != config.mesh.n:
            raise ValueError("mass space does not match the wave mesh")
        self.observation = observation
        for p in observation.receiver_positions:
            if not config.mesh.contains(np.atleast_1d(p)):
                raise ConfigError(f"receiver {p} lies outside the domain")
        self.obs_op = _ObservationOperator(observation, config.mesh,
                                           config.n_steps, config.dt)
        self.noise_sigma = observation.noise_sigma
        self._cache = None

    @property
    def n(self) -> int:
        return self.config.mesh.n

    @property
    def q(self) -> int:
        return self.observation.q

    def _prepare(self, m):
        m = np.asarray(m, dtype=float)
        if self._cache is not None and np.array_equal(self._cache[0], m):
            return self._cache
        c = _validate_wavespeed(self.config, m, check_cfl=True)
        history, coupling = _forward_core(self.disc, self.config, c)
        self._cache = (m.copy(), coupling, history)
        return self._cache

    def forward_history(self, m) -> StateHistory:
        return self._prepare(m)[2]

    def observe(self, m) -> np.ndarray:
        _, _, history = self._prepare(m)
        return self.obs_op.extract(history.v)

    def receiver_series(self, m) -> np.ndarray:
        """Velocity seismograms at the receivers, one column each, every step."""
        _, _, history = self._prepare(m)
        return history.v @ self.obs_op.rec_phi.T

    def apply_jacobian(self, m, dm) -> np.ndarray:
        m_cached, coupling, history = self._prepare(m)
        dc = np.asarray(dm, dtype=float)
        if dc.shape != (self.n,):
            raise ValueError(f"direction has shape {dc.shape}, expected ({self.n},)")
        incremental = _incremental_forward_core(
            self.disc, self.config, m_cached, coupling, dc, history)
        return self.obs_op.extract(incremental.v)

    def apply_jacobian_adjoint(self, m, dy) -> np.ndarray:
        m_cached, coupling, history = self._prepare(m)
        dy = np.asarray(dy, dtype=float)
        if dy.shape != (self.q,):
            raise ValueError(f"data vector has shape {dy.shape}, expected ({self.q},)")
        seeds = self.obs_op.step_seeds(dy)
        sweep = _reverse_sweep_core(self.disc, self.config, m_cached, coupling,
                                    seeds, history)
        return self.mspace.solve(sweep.param_gradient)
