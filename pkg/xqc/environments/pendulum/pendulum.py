import numpy as np
import pygame

from xqc.environments.control_env import SCREEN_SIZE, ControlEnv

GRAVITY_GAIN = 15.0  # 3 g / (2 l) with g = 10, l = 1
TORQUE_GAIN = 6.0  # 3 / (m l^2) times a maximum torque of 2
MAX_SPEED = 8.0
DT = 0.05


def env(**kwargs):
    """Creates a pendulum swing-up environment.

    Returns:
        gymnasium.Env: Created environment.
    """
    return PendulumEnv(**kwargs)


def wrap_angle(phi):
    return (phi + np.pi) % (2 * np.pi) - np.pi


class PendulumEnv(ControlEnv):
    """Pendulum swing-up.

    The angle phi is measured from the upright position, so phi = 0 is the
    goal. Dynamics are `phi'' = 15 sin(phi) + 6 u`, integrated with
    semi-implicit Euler (velocity first, clipped to +-8). Observations are
    `(cos phi, sin phi, phi')`; the reward is
    `-(phi^2 + 0.1 phi'^2 + 0.001 u^2)` evaluated before the step, with u the
    clipped action. Rewards lie in `[-(pi^2 + 6.4 + 0.001), 0]`.
    """

    metadata = {
        "name": "pendulum",
        "render_modes": ["rgb_array", "human"],
        "render_fps": 20,
    }
    obs_dim = 3
    act_dim = 1
    dt = DT
    reward_range = (-(np.pi**2 + 0.1 * MAX_SPEED**2 + 0.001), 0.0)

    def _sample_state(self):
        return np.array(
            [
                self.np_random.uniform(-np.pi, np.pi),
                self.np_random.uniform(-1.0, 1.0),
            ]
        )

    def _observe(self):
        phi, phi_dot = self.state
        return np.array([np.cos(phi), np.sin(phi), phi_dot])

    def _advance(self, u):
        phi, phi_dot = self.state
        u = float(u[0])
        reward = -(phi**2 + 0.1 * phi_dot**2 + 0.001 * u**2)
        accel = GRAVITY_GAIN * np.sin(phi) + TORQUE_GAIN * u
        phi_dot = phi_dot + accel * self.dt
        phi_dot = float(np.clip(phi_dot, -MAX_SPEED, MAX_SPEED))
        phi = wrap_angle(phi + phi_dot * self.dt)
        self.state = np.array([phi, phi_dot])
        return reward

    def _draw(self, surf):
        phi = self.state[0]
        scale = SCREEN_SIZE / 3
        tip = (np.sin(phi), np.cos(phi))
        pygame.draw.line(
            surf,
            (204, 77, 77),
            self._to_screen((0.0, 0.0), scale),
            self._to_screen(tip, scale),
            width=12,
        )
        pygame.draw.circle(
            surf, (0, 0, 0), self._to_screen((0.0, 0.0), scale), 6
        )
