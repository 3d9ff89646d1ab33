import numpy as np
import pygame

from xqc.environments.control_env import SCREEN_SIZE, ControlEnv

LINK_LENGTHS = (0.5, 0.5)
MAX_JOINT_SPEED = 2.0
DT = 0.05
ACTION_COST = 0.01


def env(**kwargs):
    """Creates a two-link kinematic reacher environment.

    Returns:
        gymnasium.Env: Created environment.
    """
    return Reacher2Env(**kwargs)


def fingertip(q):
    l1, l2 = LINK_LENGTHS
    return np.array(
        [
            l1 * np.cos(q[0]) + l2 * np.cos(q[0] + q[1]),
            l1 * np.sin(q[0]) + l2 * np.sin(q[0] + q[1]),
        ]
    )


def jacobian(q):
    l1, l2 = LINK_LENGTHS
    s1, c1 = np.sin(q[0]), np.cos(q[0])
    s12, c12 = np.sin(q[0] + q[1]), np.cos(q[0] + q[1])
    return np.array(
        [
            [-l1 * s1 - l2 * s12, -l2 * s12],
            [l1 * c1 + l2 * c12, l2 * c12],
        ]
    )


class Reacher2Env(ControlEnv):
    """Planar two-link arm reaching for a target.

    Actions are joint velocities scaled by 2 rad/s. The state is
    `(q1, q2, target_x, target_y)`; observations are
    `(cos q1, sin q1, cos q2, sin q2, dx, dy)` with `(dx, dy)` the vector from
    fingertip to target. Reward is `-|d| - 0.01 |u|^2` after the step.
    """

    metadata = {
        "name": "reacher2",
        "render_modes": ["rgb_array", "human"],
        "render_fps": 20,
    }
    obs_dim = 6
    act_dim = 2
    dt = DT
    reward_range = (-(2 * sum(LINK_LENGTHS) + 2 * ACTION_COST), 0.0)

    def _sample_state(self):
        q = self.np_random.uniform(-np.pi, np.pi, size=2)
        radius = self.np_random.uniform(0.2, 0.95)
        angle = self.np_random.uniform(-np.pi, np.pi)
        target = radius * np.array([np.cos(angle), np.sin(angle)])
        return np.concatenate([q, target])

    def offset(self):
        return self.state[2:] - fingertip(self.state[:2])

    def _observe(self):
        q = self.state[:2]
        return np.concatenate(
            [
                [np.cos(q[0]), np.sin(q[0]), np.cos(q[1]), np.sin(q[1])],
                self.offset(),
            ]
        )

    def _advance(self, u):
        self.state = self.state.copy()
        self.state[:2] = self.state[:2] + MAX_JOINT_SPEED * u * self.dt
        return -(
            float(np.linalg.norm(self.offset())) + ACTION_COST * float(u @ u)
        )

    def _draw(self, surf):
        scale = SCREEN_SIZE / 2.5
        q = self.state[:2]
        elbow = LINK_LENGTHS[0] * np.array([np.cos(q[0]), np.sin(q[0])])
        points = [(0.0, 0.0), elbow, fingertip(q)]
        for start, stop in zip(points, points[1:]):
            pygame.draw.line(
                surf,
                (204, 77, 77),
                self._to_screen(start, scale),
                self._to_screen(stop, scale),
                width=8,
            )
        pygame.draw.circle(
            surf, (0, 150, 0), self._to_screen(self.state[2:], scale), 8
        )
