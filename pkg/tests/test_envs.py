import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rsolab.envs import (
    Acrobot,
    CartPole,
    ContinuousState,
    MountainCar,
    acrobot_rk4,
    env_constants,
    is_terminal,
    make_env,
    reset,
    step,
)


def acrobot_mass_matrix_rhs(env: Acrobot, torque: float):
    """Two-link dynamics written as ``M(q) qdd = tau - h - phi``."""
    m1, m2 = env.link_mass_1, env.link_mass_2
    l1, lc1, lc2 = env.link_length_1, env.link_com_pos_1, env.link_com_pos_2
    i1 = i2 = env.link_moi
    g = env.gravity

    def rhs(_, s):
        t1, t2, w1, w2 = s
        d11 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * math.cos(t2)) + i1 + i2
        d12 = m2 * (lc2**2 + l1 * lc2 * math.cos(t2)) + i2
        d22 = m2 * lc2**2 + i2
        h1 = -m2 * l1 * lc2 * math.sin(t2) * (w2**2 + 2 * w1 * w2)
        h2 = m2 * l1 * lc2 * math.sin(t2) * w1**2
        phi2 = m2 * lc2 * g * math.cos(t1 + t2 - math.pi / 2)
        phi1 = (m1 * lc1 + m2 * l1) * g * math.cos(t1 - math.pi / 2) + phi2
        acc = np.linalg.solve([[d11, d12], [d12, d22]], [-h1 - phi1, torque - h2 - phi2])
        return [w1, w2, acc[0], acc[1]]

    return rhs


def rk4(f, s, dt):
    s = np.asarray(s, float)
    k1 = np.array(f(0, s))
    k2 = np.array(f(0, s + dt / 2 * k1))
    k3 = np.array(f(0, s + dt / 2 * k2))
    k4 = np.array(f(0, s + dt * k3))
    return s + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


class TestReset:
    def test_cartpole_range(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            s = reset(CartPole(), rng)
            assert s.values.shape == (4,) and np.all(np.abs(s.values) <= 0.05)

    def test_mountaincar_range(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            s = reset(MountainCar(), rng)
            assert -0.6 <= s.values[0] <= -0.4 and s.values[1] == 0.0

    def test_acrobot_observation(self):
        s = reset(Acrobot(), np.random.default_rng(2))
        assert s.values.shape == (6,)
        assert np.all(np.abs(s.raw) <= 0.1)
        np.testing.assert_allclose(s.values[:4], [math.cos(s.raw[0]), math.sin(s.raw[0]),
                                                  math.cos(s.raw[1]), math.sin(s.raw[1])])

    @pytest.mark.parametrize("name", ["cartpole", "mountaincar", "acrobot"])
    def test_deterministic(self, name):
        env = make_env(name)
        a = reset(env, np.random.default_rng(5))
        b = reset(env, np.random.default_rng(5))
        np.testing.assert_array_equal(a.values, b.values)


class TestMountainCar:
    def test_hand_step(self):
        env = MountainCar()
        s, r, done = step(env, ContinuousState(np.array([-0.5, 0.0]), np.array([-0.5, 0.0])), 1)
        v = -0.0025 * math.cos(-1.5)
        assert s.values[1] == pytest.approx(v, abs=1e-15)
        assert s.values[0] == pytest.approx(-0.5 + v, abs=1e-15)
        assert r == -1.0 and not done

    def test_left_wall_stops(self):
        env = MountainCar()
        raw = np.array([-1.19, -0.05])
        s, _, _ = step(env, ContinuousState(raw.copy(), raw), 0)
        assert s.values[0] == -1.2 and s.values[1] == 0.0

    def test_speed_clip(self):
        env = MountainCar()
        raw = np.array([-0.5, 0.0699])
        s, _, _ = step(env, ContinuousState(raw.copy(), raw), 2)
        assert s.values[1] <= 0.07

    def test_goal(self):
        env = MountainCar()
        raw = np.array([0.49, 0.02])
        s, r, done = step(env, ContinuousState(raw.copy(), raw), 2)
        assert done and is_terminal(env, s)

    def test_cap(self):
        env = MountainCar()
        s = reset(env, np.random.default_rng(0))
        n = 0
        while not s.done:
            s, _, _ = step(env, s, 1)
            n += 1
        assert n == 200 and s.t == 200 and not is_terminal(env, s)


class TestCartPole:
    def test_euler_step(self):
        env = CartPole()
        raw = np.array([0.01, -0.02, 0.03, 0.04])
        s, r, done = step(env, ContinuousState(raw.copy(), raw), 1)
        x, xd, th, thd = raw
        total = 1.1
        temp = (10.0 + 0.05 * thd**2 * math.sin(th)) / total
        thacc = (9.8 * math.sin(th) - math.cos(th) * temp) / (0.5 * (4 / 3 - 0.1 * math.cos(th) ** 2 / total))
        xacc = temp - 0.05 * thacc * math.cos(th) / total
        np.testing.assert_allclose(s.values, [x + 0.02 * xd, xd + 0.02 * xacc, th + 0.02 * thd, thd + 0.02 * thacc],
                                   rtol=1e-14)
        assert r == 1.0 and not done

    def test_angle_termination(self):
        env = CartPole()
        th = env.theta_threshold - 1e-4
        raw = np.array([0.0, 0.0, th, 1.0])
        s, r, done = step(env, ContinuousState(raw.copy(), raw), 1)
        assert done and is_terminal(env, s) and r == 1.0
        with pytest.raises(RuntimeError):
            step(env, s, 0)

    def test_bad_action(self):
        env = CartPole()
        s = reset(env, np.random.default_rng(0))
        with pytest.raises(ValueError):
            step(env, s, 2)


class TestAcrobot:
    def test_rest_is_equilibrium(self):
        env = Acrobot()
        raw = np.zeros(4)
        s, r, done = step(env, ContinuousState(np.array([1.0, 0, 1, 0, 0, 0]), raw), 1)
        # cos(-pi/2) is not exactly zero in floating point
        np.testing.assert_allclose(s.raw, np.zeros(4), atol=1e-12)
        assert r == -1.0 and not done

    @pytest.mark.parametrize("seed", range(5))
    def test_rk4_against_solve_ivp(self, seed):
        env = Acrobot()
        s0 = np.random.default_rng(seed).uniform(-1, 1, size=4)
        for torque in (-1.0, 0.0, 1.0):
            ours = acrobot_rk4(env.params(), s0, torque)
            f = acrobot_mass_matrix_rhs(env, torque)
            np.testing.assert_allclose(ours, rk4(f, s0, env.dt), atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_rk4_fourth_order(self, seed):
        s0 = np.random.default_rng(seed).uniform(-1, 1, size=4)
        errs = []
        for dt in (0.2, 0.1):
            env = Acrobot(dt=dt)
            f = acrobot_mass_matrix_rhs(env, 1.0)
            ref = solve_ivp(f, (0, dt), s0, rtol=1e-12, atol=1e-13).y[:, -1]
            errs.append(np.max(np.abs(acrobot_rk4(env.params(), s0, 1.0) - ref)))
        assert errs[0] < 5e-3
        # local error of a fourth-order method scales as dt^5
        assert errs[0] / errs[1] > 2**5 / 2

    def test_velocity_clip_and_wrap(self):
        env = Acrobot()
        raw = np.array([3.1, -3.1, 20.0, 40.0])
        s, _, _ = step(env, ContinuousState(np.zeros(6), raw), 2)
        assert -math.pi <= s.raw[0] <= math.pi and -math.pi <= s.raw[1] <= math.pi
        assert abs(s.raw[2]) <= 4 * math.pi and abs(s.raw[3]) <= 9 * math.pi

    def test_goal_reward_zero(self):
        env = Acrobot()
        raw = np.array([math.pi, 0.0, 0.0, 0.0])
        s, r, done = step(env, ContinuousState(np.zeros(6), raw), 1)
        assert done and r == 0.0 and is_terminal(env, s)

    def test_cap_500(self):
        env = Acrobot()
        s = reset(env, np.random.default_rng(0))
        while not s.done:
            s, _, _ = step(env, s, 1)
        assert s.t == 500


class TestConstruction:
    def test_unknown(self):
        with pytest.raises(ValueError):
            make_env("lunarlander")

    def test_positive_constants(self):
        with pytest.raises(ValueError):
            CartPole(masspole=0.0)
        with pytest.raises(ValueError):
            MountainCar(cap=0)

    def test_constants_dump(self):
        c = env_constants(CartPole())
        assert c["gravity"] == 9.8 and c["cap"] == 200 and c["n_actions"] == 2
