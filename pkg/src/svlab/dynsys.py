"""Analytic simulators for the supported dynamical systems.

Mechanical systems (single, double, elastic pendulum) are expressed in
canonical coordinates: the state vector is (q_1..q_n, p_1..p_n) with
generalized positions first and conjugate momenta second. Their dynamics
derive from H(q, p) = 1/2 p^T M(q)^{-1} p + V(q), so

    dq/dt = M(q)^{-1} p
    dp_i/dt = 1/2 qdot^T (dM/dq_i) qdot - dV/dq_i

with the mass matrix, its coordinate derivatives, and the potential all
analytic. The reaction-diffusion system is a lambda-omega field on a
periodic square grid, state = (u grid, v grid) flattened.

Angles are stored unwrapped. The potential-energy zero sits at the pivot
level.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (ContractError, InstabilityError, UnsupportedSystemError)
from .rng import Rng

SINGLE = "single-pendulum"
DOUBLE = "double-pendulum"
ELASTIC = "elastic-pendulum"
REACTION_DIFFUSION = "reaction-diffusion"

KINDS = (SINGLE, DOUBLE, ELASTIC, REACTION_DIFFUSION)

_DOF = {SINGLE: 2, DOUBLE: 4, ELASTIC: 6, REACTION_DIFFUSION: 2}
_NCOORDS = {SINGLE: 1, DOUBLE: 2, ELASTIC: 3}


@dataclass(frozen=True)
class SystemSpec:
    """Physical description of one dynamical system.

    For the elastic pendulum l1 is the spring's rest length and the third
    coordinate z is the spring extension (arm length = l1 + z).
    """

    kind: str
    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    g: float = 9.81
    k_spring: float = 40.0
    d1: float = 0.1
    d2: float = 0.1
    beta_rd: float = 1.0
    grid: int = 32
    domain: float = 20.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown system kind {self.kind!r}")
        if self.kind == REACTION_DIFFUSION:
            positive = (self.d1, self.d2, self.beta_rd, self.grid, self.domain)
        elif self.kind == SINGLE:
            positive = (self.m1, self.l1, self.g)
        elif self.kind == DOUBLE:
            positive = (self.m1, self.m2, self.l1, self.l2, self.g)
        else:
            positive = (self.m1, self.m2, self.l1, self.l2, self.g,
                        self.k_spring)
        if any(v <= 0 for v in positive):
            raise ContractError(f"{self.kind}: physical parameters must be > 0")

    @property
    def dof(self) -> int:
        """Ground-truth number of state variables."""
        return _DOF[self.kind]

    @property
    def mechanical(self) -> bool:
        return self.kind != REACTION_DIFFUSION

    @property
    def n_coords(self) -> int:
        if not self.mechanical:
            raise UnsupportedSystemError("reaction-diffusion has no (q, p) split")
        return _NCOORDS[self.kind]

    @property
    def state_dim(self) -> int:
        if self.mechanical:
            return 2 * self.n_coords
        return 2 * self.grid * self.grid

    @classmethod
    def single_pendulum(cls, mass=1.0, length=1.0, gravity=9.81):
        return cls(SINGLE, m1=mass, l1=length, g=gravity)

    @classmethod
    def double_pendulum(cls, m1=1.0, m2=1.0, l1=1.0, l2=1.0, gravity=9.81):
        return cls(DOUBLE, m1=m1, m2=m2, l1=l1, l2=l2, g=gravity)

    @classmethod
    def elastic_pendulum(cls, m1=1.0, m2=1.0, rest_length=1.0, l2=1.0,
                         k_spring=40.0, gravity=9.81):
        return cls(ELASTIC, m1=m1, m2=m2, l1=rest_length, l2=l2,
                   k_spring=k_spring, g=gravity)

    @classmethod
    def reaction_diffusion(cls, grid=32, d1=0.1, d2=0.1, beta=1.0,
                           domain=20.0):
        return cls(REACTION_DIFFUSION, d1=d1, d2=d2, beta_rd=beta, grid=grid,
                   domain=domain)


@dataclass
class Trajectory:
    """Uniformly sampled states plus ground-truth observables."""

    spec: SystemSpec
    dt_frame: float
    states: np.ndarray                      # [T, state_dim]
    aux: dict = field(default_factory=dict)  # name -> [T]

    @property
    def n_frames(self) -> int:
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.dt_frame


def _check_state(spec: SystemSpec, state) -> np.ndarray:
    s = np.asarray(state, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != spec.state_dim:
        raise ContractError(
            f"{spec.kind}: state length {s.shape} != {spec.state_dim}")
    return s


# ---------------------------------------------------------------------------
# mechanical systems: mass matrix, derivatives, potential


def _mass_matrix(spec: SystemSpec, q):
    if spec.kind == SINGLE:
        return [[spec.m1 * spec.l1 ** 2]]
    if spec.kind == DOUBLE:
        m1, m2, l1, l2 = spec.m1, spec.m2, spec.l1, spec.l2
        c = math.cos(q[0] - q[1])
        return [[(m1 + m2) * l1 ** 2, m2 * l1 * l2 * c],
                [m2 * l1 * l2 * c, m2 * l2 ** 2]]
    # elastic: q = (theta1, z, theta2), first arm length r = l1 + z
    m1, m2, l2 = spec.m1, spec.m2, spec.l2
    r = spec.l1 + q[1]
    d = q[0] - q[2]
    c, s = math.cos(d), math.sin(d)
    return [[(m1 + m2) * r ** 2, 0.0, m2 * r * l2 * c],
            [0.0, m1 + m2, m2 * l2 * s],
            [m2 * r * l2 * c, m2 * l2 * s, m2 * l2 ** 2]]


def _mass_matrix_dq(spec: SystemSpec, q):
    """List of dM/dq_i, one n x n matrix per coordinate."""
    n = spec.n_coords
    if spec.kind == SINGLE:
        return [[[0.0]]]
    if spec.kind == DOUBLE:
        m2, l1, l2 = spec.m2, spec.l1, spec.l2
        s = math.sin(q[0] - q[1])
        off = -m2 * l1 * l2 * s
        d0 = [[0.0, off], [off, 0.0]]
        d1 = [[0.0, -off], [-off, 0.0]]
        return [d0, d1]
    m1, m2, l2 = spec.m1, spec.m2, spec.l2
    r = spec.l1 + q[1]
    d = q[0] - q[2]
    c, s = math.cos(d), math.sin(d)
    zero = [[0.0] * n for _ in range(n)]
    dth1 = [row[:] for row in zero]
    dth1[0][2] = dth1[2][0] = -m2 * r * l2 * s
    dth1[1][2] = dth1[2][1] = m2 * l2 * c
    dz = [row[:] for row in zero]
    dz[0][0] = 2.0 * (m1 + m2) * r
    dz[0][2] = dz[2][0] = m2 * l2 * c
    dth2 = [row[:] for row in zero]
    dth2[0][2] = dth2[2][0] = m2 * r * l2 * s
    dth2[1][2] = dth2[2][1] = -m2 * l2 * c
    return [dth1, dz, dth2]


def _potential(spec: SystemSpec, q) -> float:
    if spec.kind == SINGLE:
        return -spec.m1 * spec.g * spec.l1 * math.cos(q[0])
    if spec.kind == DOUBLE:
        m1, m2, l1, l2, g = spec.m1, spec.m2, spec.l1, spec.l2, spec.g
        return (-(m1 + m2) * g * l1 * math.cos(q[0])
                - m2 * g * l2 * math.cos(q[1]))
    m1, m2, l2, g = spec.m1, spec.m2, spec.l2, spec.g
    r = spec.l1 + q[1]
    return (-(m1 + m2) * g * r * math.cos(q[0])
            - m2 * g * l2 * math.cos(q[2])
            + 0.5 * spec.k_spring * q[1] ** 2)


def _potential_dq(spec: SystemSpec, q):
    if spec.kind == SINGLE:
        return [spec.m1 * spec.g * spec.l1 * math.sin(q[0])]
    if spec.kind == DOUBLE:
        m1, m2, l1, l2, g = spec.m1, spec.m2, spec.l1, spec.l2, spec.g
        return [(m1 + m2) * g * l1 * math.sin(q[0]),
                m2 * g * l2 * math.sin(q[1])]
    m1, m2, l2, g = spec.m1, spec.m2, spec.l2, spec.g
    r = spec.l1 + q[1]
    return [(m1 + m2) * g * r * math.sin(q[0]),
            -(m1 + m2) * g * math.cos(q[0]) + spec.k_spring * q[1],
            m2 * g * l2 * math.sin(q[2])]


def _solve_spd(m, rhs):
    """Solve M x = rhs for n <= 3 symmetric positive-definite M."""
    n = len(rhs)
    if n == 1:
        return [rhs[0] / m[0][0]]
    if n == 2:
        det = m[0][0] * m[1][1] - m[0][1] * m[1][0]
        return [(m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
                (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det]
    a, b, c = m[0]
    _, e, f = m[1]
    i = m[2][2]
    # cofactors of the symmetric 3x3
    A = e * i - f * f
    B = c * f - b * i
    C = b * f - c * e
    det = a * A + b * B + c * C
    E = a * i - c * c
    F = b * c - a * f
    I = a * e - b * b
    r0, r1, r2 = rhs
    return [(A * r0 + B * r1 + C * r2) / det,
            (B * r0 + E * r1 + F * r2) / det,
            (C * r0 + F * r1 + I * r2) / det]


def _quad_form(mat, v):
    return sum(v[i] * mat[i][j] * v[j]
               for i in range(len(v)) for j in range(len(v)))


def _mech_derivative(spec: SystemSpec, s: np.ndarray) -> np.ndarray:
    n = spec.n_coords
    q = s[:n].tolist()
    p = s[n:].tolist()
    m = _mass_matrix(spec, q)
    qdot = _solve_spd(m, p)
    dm = _mass_matrix_dq(spec, q)
    dv = _potential_dq(spec, q)
    pdot = [0.5 * _quad_form(dm[i], qdot) - dv[i] for i in range(n)]
    return np.array(qdot + pdot)


def derivative(spec: SystemSpec, state, t: float = 0.0) -> np.ndarray:
    """Time derivative of the state (all systems are autonomous)."""
    s = _check_state(spec, state)
    if spec.mechanical:
        return _mech_derivative(spec, s)
    return _rd_derivative(spec, s)


def hamiltonian(spec: SystemSpec, state) -> float:
    """Total energy in joules; mechanical systems only."""
    if not spec.mechanical:
        raise UnsupportedSystemError("no Hamiltonian for reaction-diffusion")
    s = _check_state(spec, state)
    n = spec.n_coords
    q = s[:n].tolist()
    p = s[n:].tolist()
    m = _mass_matrix(spec, q)
    qdot = _solve_spd(m, p)
    kinetic = 0.5 * sum(p[i] * qdot[i] for i in range(n))
    return kinetic + _potential(spec, q)


def velocities_to_momenta(spec: SystemSpec, q, qdot) -> np.ndarray:
    """p = M(q) qdot for mechanical systems."""
    m = _mass_matrix(spec, list(q))
    n = spec.n_coords
    return np.array([sum(m[i][j] * qdot[j] for j in range(n))
                     for i in range(n)])


# ---------------------------------------------------------------------------
# reaction-diffusion (lambda-omega spiral wave, periodic grid)


def _rd_grids(spec: SystemSpec, s: np.ndarray):
    g = spec.grid
    return s[: g * g].reshape(g, g), s[g * g :].reshape(g, g)


def _laplacian(a: np.ndarray, h: float) -> np.ndarray:
    return (np.roll(a, 1, 0) + np.roll(a, -1, 0)
            + np.roll(a, 1, 1) + np.roll(a, -1, 1) - 4.0 * a) / (h * h)


def _rd_derivative(spec: SystemSpec, s: np.ndarray) -> np.ndarray:
    u, v = _rd_grids(spec, s)
    h = spec.domain / spec.grid
    amp2 = u * u + v * v
    du = (1.0 - amp2) * u + spec.beta_rd * amp2 * v + spec.d1 * _laplacian(u, h)
    dv = -spec.beta_rd * amp2 * u + (1.0 - amp2) * v + spec.d2 * _laplacian(v, h)
    return np.concatenate([du.reshape(-1), dv.reshape(-1)])


def spiral_wave_state(spec: SystemSpec, phase: float = 0.0) -> np.ndarray:
    """Planar spiral-wave initial condition with a global phase offset."""
    g = spec.grid
    half = spec.domain / 2.0
    xs = np.linspace(-half, half, g, endpoint=False)
    x, y = np.meshgrid(xs, xs, indexing="ij")
    r = np.sqrt(x * x + y * y)
    angle = np.arctan2(y, x) - r + phase
    u = np.tanh(r) * np.cos(angle)
    v = np.tanh(r) * np.sin(angle)
    return np.concatenate([u.reshape(-1), v.reshape(-1)])


# ---------------------------------------------------------------------------
# integrators


def rk4_step(spec: SystemSpec, state, t: float, dt: float) -> np.ndarray:
    """Classic 4th-order Runge-Kutta step."""
    s = _check_state(spec, state)
    k1 = derivative(spec, s, t)
    k2 = derivative(spec, s + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = derivative(spec, s + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = derivative(spec, s + dt * k3, t + dt)
    out = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise InstabilityError(f"rk4 blew up at t={t} dt={dt} ({spec.kind})")
    return out


def leapfrog_step(spec: SystemSpec, state, dt: float) -> np.ndarray:
    """Symplectic update where the kinetic energy is separable.

    Velocity-Verlet for the single pendulum; the double and elastic
    pendulum have position-dependent mass matrices, so they fall back to
    RK4 at the same dt.
    """
    if not spec.mechanical:
        raise UnsupportedSystemError("leapfrog needs a mechanical system")
    s = _check_state(spec, state)
    if dt == 0.0:
        return s.copy()
    if spec.kind != SINGLE:
        return rk4_step(spec, s, 0.0, dt)
    ml2 = spec.m1 * spec.l1 ** 2
    theta, p = s
    p_half = p - 0.5 * dt * _potential_dq(spec, [theta])[0]
    theta_new = theta + dt * p_half / ml2
    p_new = p_half - 0.5 * dt * _potential_dq(spec, [theta_new])[0]
    out = np.array([theta_new, p_new])
    if not np.all(np.isfinite(out)):
        raise InstabilityError(f"leapfrog blew up at dt={dt}")
    return out


def _aux_observables(spec: SystemSpec, s: np.ndarray) -> dict:
    if spec.kind == SINGLE:
        theta = s[0]
        return {"theta": theta, "cos_2theta": math.cos(2.0 * theta)}
    if spec.kind == DOUBLE:
        x1 = spec.l1 * math.sin(s[0])
        return {"x1": x1, "x2": x1 + spec.l2 * math.sin(s[1])}
    if spec.kind == ELASTIC:
        r = spec.l1 + s[1]
        x1 = r * math.sin(s[0])
        return {"x1": x1, "x2": x1 + spec.l2 * math.sin(s[2]), "z": s[1]}
    return {}


def simulate(spec: SystemSpec, initial, n_frames: int, dt_frame: float = 1 / 60,
             substeps: int = 10, integrator: str = "rk4") -> Trajectory:
    """Integrate and store one state per frame plus aux observables."""
    if n_frames < 2:
        raise ContractError("n_frames must be >= 2")
    if substeps < 1:
        raise ContractError("substeps must be >= 1")
    s = _check_state(spec, initial).copy()
    dt = dt_frame / substeps
    states = np.empty((n_frames, s.shape[0]))
    aux_rows = []
    t = 0.0
    for frame in range(n_frames):
        states[frame] = s
        aux_rows.append(_aux_observables(spec, s))
        if frame == n_frames - 1:
            break
        try:
            for _ in range(substeps):
                if integrator == "leapfrog":
                    s = leapfrog_step(spec, s, dt)
                else:
                    s = rk4_step(spec, s, t, dt)
                t += dt
        except InstabilityError as e:
            raise InstabilityError(f"frame {frame + 1}: {e}") from e
    aux = {}
    if aux_rows and aux_rows[0]:
        for name in aux_rows[0]:
            aux[name] = np.array([row[name] for row in aux_rows])
    return Trajectory(spec=spec, dt_frame=dt_frame, states=states, aux=aux)


# ---------------------------------------------------------------------------
# batched mechanical integration (vectorized across trajectories; matches the
# scalar path to floating-point noise and exists purely for dataset-build
# throughput)


def _mass_matrix_batch(spec: SystemSpec, q: np.ndarray) -> np.ndarray:
    b = q.shape[0]
    n = spec.n_coords
    m = np.zeros((b, n, n))
    if spec.kind == SINGLE:
        m[:, 0, 0] = spec.m1 * spec.l1 ** 2
    elif spec.kind == DOUBLE:
        c = np.cos(q[:, 0] - q[:, 1])
        m[:, 0, 0] = (spec.m1 + spec.m2) * spec.l1 ** 2
        m[:, 0, 1] = m[:, 1, 0] = spec.m2 * spec.l1 * spec.l2 * c
        m[:, 1, 1] = spec.m2 * spec.l2 ** 2
    else:
        r = spec.l1 + q[:, 1]
        d = q[:, 0] - q[:, 2]
        c, s = np.cos(d), np.sin(d)
        msum = spec.m1 + spec.m2
        m[:, 0, 0] = msum * r * r
        m[:, 0, 2] = m[:, 2, 0] = spec.m2 * r * spec.l2 * c
        m[:, 1, 1] = msum
        m[:, 1, 2] = m[:, 2, 1] = spec.m2 * spec.l2 * s
        m[:, 2, 2] = spec.m2 * spec.l2 ** 2
    return m


def _mass_matrix_dq_batch(spec: SystemSpec, q: np.ndarray) -> np.ndarray:
    b = q.shape[0]
    n = spec.n_coords
    dm = np.zeros((b, n, n, n))
    if spec.kind == DOUBLE:
        off = -spec.m2 * spec.l1 * spec.l2 * np.sin(q[:, 0] - q[:, 1])
        dm[:, 0, 0, 1] = dm[:, 0, 1, 0] = off
        dm[:, 1, 0, 1] = dm[:, 1, 1, 0] = -off
    elif spec.kind == ELASTIC:
        r = spec.l1 + q[:, 1]
        d = q[:, 0] - q[:, 2]
        c, s = np.cos(d), np.sin(d)
        m2l2 = spec.m2 * spec.l2
        dm[:, 0, 0, 2] = dm[:, 0, 2, 0] = -m2l2 * r * s
        dm[:, 0, 1, 2] = dm[:, 0, 2, 1] = m2l2 * c
        dm[:, 1, 0, 0] = 2.0 * (spec.m1 + spec.m2) * r
        dm[:, 1, 0, 2] = dm[:, 1, 2, 0] = m2l2 * c
        dm[:, 2, 0, 2] = dm[:, 2, 2, 0] = m2l2 * r * s
        dm[:, 2, 1, 2] = dm[:, 2, 2, 1] = -m2l2 * c
    return dm


def _potential_dq_batch(spec: SystemSpec, q: np.ndarray) -> np.ndarray:
    if spec.kind == SINGLE:
        return (spec.m1 * spec.g * spec.l1 * np.sin(q[:, :1]))
    if spec.kind == DOUBLE:
        msum = spec.m1 + spec.m2
        return np.stack([msum * spec.g * spec.l1 * np.sin(q[:, 0]),
                         spec.m2 * spec.g * spec.l2 * np.sin(q[:, 1])], axis=1)
    msum = spec.m1 + spec.m2
    r = spec.l1 + q[:, 1]
    return np.stack([
        msum * spec.g * r * np.sin(q[:, 0]),
        -msum * spec.g * np.cos(q[:, 0]) + spec.k_spring * q[:, 1],
        spec.m2 * spec.g * spec.l2 * np.sin(q[:, 2])], axis=1)


def _mech_derivative_all(spec: SystemSpec, s: np.ndarray) -> np.ndarray:
    n = spec.n_coords
    q, p = s[:, :n], s[:, n:]
    m = _mass_matrix_batch(spec, q)
    qdot = np.linalg.solve(m, p[..., None])[..., 0]
    dm = _mass_matrix_dq_batch(spec, q)
    pdot = 0.5 * np.einsum("bi,bkij,bj->bk", qdot, dm, qdot)
    pdot -= _potential_dq_batch(spec, q)
    return np.concatenate([qdot, pdot], axis=1)


def _aux_batch(spec: SystemSpec, states: np.ndarray) -> dict:
    if spec.kind == SINGLE:
        th = states[..., 0]
        return {"theta": th, "cos_2theta": np.cos(2.0 * th)}
    if spec.kind == DOUBLE:
        x1 = spec.l1 * np.sin(states[..., 0])
        return {"x1": x1, "x2": x1 + spec.l2 * np.sin(states[..., 1])}
    if spec.kind == ELASTIC:
        r = spec.l1 + states[..., 1]
        x1 = r * np.sin(states[..., 0])
        return {"x1": x1, "x2": x1 + spec.l2 * np.sin(states[..., 2]),
                "z": states[..., 1]}
    return {}


def simulate_batch(spec: SystemSpec, initials: np.ndarray, n_frames: int,
                   dt_frame: float = 1 / 60, substeps: int = 10):
    """Integrate many mechanical trajectories at once.

    Returns (states[B, T, 2n], aux dict of name -> [B, T]). Equivalent to
    calling ``simulate`` per row; vectorized for dataset builds.
    """
    if not spec.mechanical:
        raise UnsupportedSystemError("simulate_batch covers mechanical systems")
    if n_frames < 2 or substeps < 1:
        raise ContractError("n_frames >= 2 and substeps >= 1 required")
    s = np.array(initials, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != spec.state_dim:
        raise ContractError(f"initials must be [B, {spec.state_dim}]")
    dt = dt_frame / substeps
    states = np.empty((s.shape[0], n_frames, s.shape[1]))
    for frame in range(n_frames):
        states[:, frame] = s
        if frame == n_frames - 1:
            break
        for _ in range(substeps):
            k1 = _mech_derivative_all(spec, s)
            k2 = _mech_derivative_all(spec, s + 0.5 * dt * k1)
            k3 = _mech_derivative_all(spec, s + 0.5 * dt * k2)
            k4 = _mech_derivative_all(spec, s + dt * k3)
            s = s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(s)):
            bad = np.where(~np.isfinite(s).all(axis=1))[0]
            raise InstabilityError(
                f"batch rk4 blew up at frame {frame + 1}, trajectories {bad[:8].tolist()}")
    return states, _aux_batch(spec, states)


def sample_initial_conditions(spec: SystemSpec, rng: Rng,
                              velocity_scale: float = 0.0) -> np.ndarray:
    """Random initial state.

    Angles are uniform in [-0.8 pi, 0.8 pi]; the elastic spring extension
    is uniform within +/-20% of the rest length. With the default
    velocity_scale of 0 systems are released from rest; a positive scale
    draws generalized velocities uniformly from [-scale, scale] and
    converts them to conjugate momenta.
    """
    if not spec.mechanical:
        return spiral_wave_state(spec, phase=rng.uniform(0.0, 2.0 * math.pi))
    n = spec.n_coords
    lim = 0.8 * math.pi
    if spec.kind == SINGLE:
        q = [rng.uniform(-lim, lim)]
    elif spec.kind == DOUBLE:
        q = [rng.uniform(-lim, lim), rng.uniform(-lim, lim)]
    else:
        q = [rng.uniform(-lim, lim),
             rng.uniform(-0.2 * spec.l1, 0.2 * spec.l1),
             rng.uniform(-lim, lim)]
    if velocity_scale > 0.0:
        qdot = [rng.uniform(-velocity_scale, velocity_scale) for _ in range(n)]
        p = velocities_to_momenta(spec, q, qdot)
    else:
        p = np.zeros(n)
    return np.concatenate([np.array(q), p])


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write "t,state_0..state_{D-1},aux_*" rows."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = traj.states.shape[1]
    names = sorted(traj.aux)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["t"] + [f"state_{i}" for i in range(dim)]
                   + [f"aux_{n}" for n in names])
        for i, t in enumerate(traj.times):
            row = [f"{t:.9g}"] + [f"{v:.17g}" for v in traj.states[i]]
            row += [f"{traj.aux[n][i]:.17g}" for n in names]
            w.writerow(row)
