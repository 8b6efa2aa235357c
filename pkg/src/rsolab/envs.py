"""Classic-control environments written from scratch.

CartPole, MountainCar and Acrobot reproduce the standard classic-control
implementations, including their start distributions and termination rules. The physics kernels are compiled
with numba so the training loop in :mod:`rsolab.qlearn` can call them
directly; the :func:`reset` / :func:`step` wrappers expose them to Python.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

import numba
import numpy as np

CARTPOLE, MOUNTAINCAR, ACROBOT = 0, 1, 2


@dataclass(frozen=True)
class CartPole:
    gravity: float = 9.8
    masscart: float = 1.0
    masspole: float = 0.1
    length: float = 0.5  # half the pole length
    force_mag: float = 10.0
    tau: float = 0.02
    theta_threshold: float = 12 * 2 * math.pi / 360
    x_threshold: float = 2.4
    reset_range: float = 0.05
    cap: int = 200

    code = CARTPOLE
    name = "cartpole"
    n_actions = 2
    obs_dim = 4
    raw_dim = 4

    def __post_init__(self):
        _check_positive(self, ("gravity", "masscart", "masspole", "length", "force_mag", "tau",
                               "theta_threshold", "x_threshold"))

    def params(self) -> np.ndarray:
        return np.array([self.gravity, self.masscart, self.masspole, self.length,
                         self.force_mag, self.tau, self.theta_threshold, self.x_threshold])


@dataclass(frozen=True)
class MountainCar:
    min_position: float = -1.2
    max_position: float = 0.6
    max_speed: float = 0.07
    goal_position: float = 0.5
    goal_velocity: float = 0.0
    force: float = 0.001
    gravity: float = 0.0025
    reset_low: float = -0.6
    reset_high: float = -0.4
    cap: int = 200

    code = MOUNTAINCAR
    name = "mountaincar"
    n_actions = 3
    obs_dim = 2
    raw_dim = 2

    def __post_init__(self):
        _check_positive(self, ("max_speed", "force", "gravity"))

    def params(self) -> np.ndarray:
        return np.array([self.min_position, self.max_position, self.max_speed, self.goal_position,
                         self.goal_velocity, self.force, self.gravity])


@dataclass(frozen=True)
class Acrobot:
    dt: float = 0.2
    link_length_1: float = 1.0
    link_mass_1: float = 1.0
    link_mass_2: float = 1.0
    link_com_pos_1: float = 0.5
    link_com_pos_2: float = 0.5
    link_moi: float = 1.0
    max_vel_1: float = 4 * math.pi
    max_vel_2: float = 9 * math.pi
    gravity: float = 9.8
    reset_range: float = 0.1
    cap: int = 500

    code = ACROBOT
    name = "acrobot"
    n_actions = 3
    obs_dim = 6
    raw_dim = 4

    def __post_init__(self):
        _check_positive(self, tuple(f for f in self.__dataclass_fields__ if f != "cap"))

    def params(self) -> np.ndarray:
        return np.array([self.dt, self.link_length_1, self.link_mass_1, self.link_mass_2,
                         self.link_com_pos_1, self.link_com_pos_2, self.link_moi,
                         self.max_vel_1, self.max_vel_2, self.gravity])


EnvKind = Union[CartPole, MountainCar, Acrobot]

ENVS = {"cartpole": CartPole, "mountaincar": MountainCar, "acrobot": Acrobot}


def _check_positive(env, names):
    for n in names:
        if not getattr(env, n) > 0:
            raise ValueError(f"{type(env).__name__}.{n} must be positive")
    if env.cap < 1:
        raise ValueError("episode cap must be at least 1")


def make_env(name: str, **overrides):
    try:
        cls = ENVS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVS)}") from None
    return cls(**overrides)


def env_constants(env) -> dict:
    return {"name": env.name, "n_actions": env.n_actions, **asdict(env)}


# --------------------------------------------------------------------------
# compiled dynamics: each step_* updates `raw` in place and returns
# (reward, terminated)
# --------------------------------------------------------------------------


@numba.njit(cache=True)
def step_cartpole(p, raw, action):
    gravity, masscart, masspole, length, force_mag, tau, th_thr, x_thr = (
        p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7])
    total_mass = masspole + masscart
    polemass_length = masspole * length
    x, x_dot, theta, theta_dot = raw[0], raw[1], raw[2], raw[3]
    force = force_mag if action == 1 else -force_mag
    costheta = math.cos(theta)
    sintheta = math.sin(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sintheta) / total_mass
    thetaacc = (gravity * sintheta - costheta * temp) / (
        length * (4.0 / 3.0 - masspole * costheta * costheta / total_mass))
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    x = x + tau * x_dot
    x_dot = x_dot + tau * xacc
    theta = theta + tau * theta_dot
    theta_dot = theta_dot + tau * thetaacc
    raw[0], raw[1], raw[2], raw[3] = x, x_dot, theta, theta_dot
    terminated = x < -x_thr or x > x_thr or theta < -th_thr or theta > th_thr
    return 1.0, terminated


@numba.njit(cache=True)
def step_mountaincar(p, raw, action):
    min_pos, max_pos, max_speed, goal_pos, goal_vel, force, gravity = (
        p[0], p[1], p[2], p[3], p[4], p[5], p[6])
    position, velocity = raw[0], raw[1]
    velocity += (action - 1) * force + math.cos(3 * position) * (-gravity)
    velocity = min(max(velocity, -max_speed), max_speed)
    position += velocity
    position = min(max(position, min_pos), max_pos)
    if position == min_pos and velocity < 0:
        velocity = 0.0
    raw[0], raw[1] = position, velocity
    terminated = position >= goal_pos and velocity >= goal_vel
    return -1.0, terminated


@numba.njit(cache=True)
def _acrobot_dsdt(p, s, torque, out):
    l1, m1, m2, lc1, lc2, moi, g = p[1], p[2], p[3], p[4], p[5], p[6], p[9]
    i1 = moi
    i2 = moi
    theta1, theta2, dtheta1, dtheta2 = s[0], s[1], s[2], s[3]
    d1 = m1 * lc1 ** 2 + m2 * (l1 ** 2 + lc2 ** 2 + 2 * l1 * lc2 * math.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2 ** 2 + l1 * lc2 * math.cos(theta2)) + i2
    phi2 = m2 * lc2 * g * math.cos(theta1 + theta2 - math.pi / 2.0)
    phi1 = (-m2 * l1 * lc2 * dtheta2 ** 2 * math.sin(theta2)
            - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * math.sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * math.cos(theta1 - math.pi / 2) + phi2)
    ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 ** 2 * math.sin(theta2) - phi2) / (
        m2 * lc2 ** 2 + i2 - d2 ** 2 / d1)
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    out[0] = dtheta1
    out[1] = dtheta2
    out[2] = ddtheta1
    out[3] = ddtheta2


@numba.njit(cache=True)
def _wrap(x, lo, hi):
    diff = hi - lo
    while x > hi:
        x = x - diff
    while x < lo:
        x = x + diff
    return x


@numba.njit(cache=True)
def acrobot_rk4(p, s, torque):
    """One classical RK4 step of length ``dt`` with the torque held fixed."""
    dt = p[0]
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    tmp = np.empty(4)
    _acrobot_dsdt(p, s, torque, k1)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k1[i]
    _acrobot_dsdt(p, tmp, torque, k2)
    for i in range(4):
        tmp[i] = s[i] + dt / 2.0 * k2[i]
    _acrobot_dsdt(p, tmp, torque, k3)
    for i in range(4):
        tmp[i] = s[i] + dt * k3[i]
    _acrobot_dsdt(p, tmp, torque, k4)
    out = np.empty(4)
    for i in range(4):
        out[i] = s[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
    return out


@numba.njit(cache=True)
def step_acrobot(p, raw, action):
    ns = acrobot_rk4(p, raw, float(action - 1))
    raw[0] = _wrap(ns[0], -math.pi, math.pi)
    raw[1] = _wrap(ns[1], -math.pi, math.pi)
    raw[2] = min(max(ns[2], -p[7]), p[7])
    raw[3] = min(max(ns[3], -p[8]), p[8])
    terminated = -math.cos(raw[0]) - math.cos(raw[1] + raw[0]) > 1.0
    return (0.0 if terminated else -1.0), terminated


@numba.njit(cache=True)
def env_step(code, p, raw, action):
    if code == CARTPOLE:
        return step_cartpole(p, raw, action)
    if code == MOUNTAINCAR:
        return step_mountaincar(p, raw, action)
    return step_acrobot(p, raw, action)


@numba.njit(cache=True)
def observe(code, raw, obs):
    if code == ACROBOT:
        obs[0] = math.cos(raw[0])
        obs[1] = math.sin(raw[0])
        obs[2] = math.cos(raw[1])
        obs[3] = math.sin(raw[1])
        obs[4] = raw[2]
        obs[5] = raw[3]
    else:
        for i in range(raw.shape[0]):
            obs[i] = raw[i]


def reset_raw(env, rng: np.random.Generator) -> np.ndarray:
    """Draw the standard randomized start (internal coordinates)."""
    if env.code == CARTPOLE:
        return rng.uniform(-env.reset_range, env.reset_range, size=4)
    if env.code == MOUNTAINCAR:
        return np.array([rng.uniform(env.reset_low, env.reset_high), 0.0])
    return rng.uniform(-env.reset_range, env.reset_range, size=4)


# --------------------------------------------------------------------------
# Python-facing API
# --------------------------------------------------------------------------


@dataclass
class ContinuousState:
    """Observation vector plus the internal physics state it was derived from.

    ``values`` is what the agent sees (6 components for Acrobot: cosines and
    sines of both joint angles and the two angular velocities). ``raw`` is
    the integrator state; for CartPole and MountainCar the two coincide.
    """

    values: np.ndarray
    raw: np.ndarray
    done: bool = False
    t: int = 0


def _make_state(env, raw, done, t):
    obs = np.empty(env.obs_dim)
    observe(env.code, raw, obs)
    return ContinuousState(obs, raw, done, t)


def reset(env, rng: np.random.Generator) -> ContinuousState:
    return _make_state(env, reset_raw(env, rng), False, 0)


def step(env, s: ContinuousState, action: int, rng: np.random.Generator | None = None):
    """Advance one timestep. Returns ``(next_state, reward, done)``.

    ``done`` covers termination and reaching the episode cap. The dynamics
    are deterministic; ``rng`` is accepted for interface symmetry and unused.
    """
    if s.done:
        raise RuntimeError("cannot step a finished episode; call reset()")
    if not 0 <= action < env.n_actions:
        raise ValueError(f"action {action} out of range for {env.name} ({env.n_actions} actions)")
    raw = np.array(s.raw, dtype=float)
    reward, terminated = env_step(env.code, env.params(), raw, int(action))
    t = s.t + 1
    done = bool(terminated) or t >= env.cap
    return _make_state(env, raw, done, t), float(reward), done


def is_terminal(env, s: ContinuousState) -> bool:
    """True when ``s`` ended the episode by goal or failure rather than the cap."""
    raw = np.array(s.raw, dtype=float)
    if env.code == CARTPOLE:
        return bool(abs(raw[0]) > env.x_threshold or abs(raw[2]) > env.theta_threshold)
    if env.code == MOUNTAINCAR:
        return bool(raw[0] >= env.goal_position and raw[1] >= env.goal_velocity)
    return bool(-math.cos(raw[0]) - math.cos(raw[1] + raw[0]) > 1.0)
