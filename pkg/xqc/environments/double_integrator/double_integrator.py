import numpy as np
import pygame

from xqc.environments.control_env import SCREEN_SIZE, ControlEnv

DT = 0.1
POSITION_COST = 1.0
VELOCITY_COST = 0.1
ACTION_COST = 0.01


def env(**kwargs):
    """Creates a double integrator environment.

    Returns:
        gymnasium.Env: Created environment.
    """
    return DoubleIntegratorEnv(**kwargs)


def linear_dynamics(dt=DT):
    """`(A, B)` of the semi-implicit Euler discretization of x'' = u."""
    a = np.array([[1.0, dt], [0.0, 1.0]])
    b = np.array([[dt**2], [dt]])
    return a, b


class DoubleIntegratorEnv(ControlEnv):
    """Point mass on a line driven to the origin.

    State `(x, v)` with `x'' = u`; the observation is the state. The
    quadratic cost `x^2 + 0.1 v^2 + 0.01 u^2` of the pre-step state is
    returned negated as the reward.
    """

    metadata = {
        "name": "double_integrator",
        "render_modes": ["rgb_array", "human"],
        "render_fps": 10,
    }
    obs_dim = 2
    act_dim = 1
    dt = DT
    reward_range = (-np.inf, 0.0)

    def _sample_state(self):
        return np.array(
            [
                self.np_random.uniform(-1.0, 1.0),
                self.np_random.uniform(-0.5, 0.5),
            ]
        )

    def _observe(self):
        return self.state.copy()

    def _advance(self, u):
        x, v = self.state
        u = float(u[0])
        reward = -(
            POSITION_COST * x**2 + VELOCITY_COST * v**2 + ACTION_COST * u**2
        )
        v = v + u * self.dt
        x = x + v * self.dt
        self.state = np.array([x, v])
        return reward

    def _draw(self, surf):
        x = self.state[0]
        scale = SCREEN_SIZE / 4
        pygame.draw.line(
            surf,
            (150, 150, 150),
            self._to_screen((-2.0, 0.0), scale),
            self._to_screen((2.0, 0.0), scale),
            width=2,
        )
        pygame.draw.circle(
            surf, (0, 0, 0), self._to_screen((0.0, 0.0), scale), 4
        )
        pygame.draw.circle(
            surf, (204, 77, 77), self._to_screen((x, 0.0), scale), 12
        )
