import gymnasium
import numpy as np
import pygame
from gymnasium import spaces

SCREEN_SIZE = 500
FONT_SIZE = 14


class ControlEnv(gymnasium.Env):
    """Base class of the deterministic toy control tasks.

    Subclasses define the state distribution, the dynamics and a drawing
    routine. This class handles action validation, time limits, seeding and
    the pygame render loop. Episodes are truncated, never terminated, at
    `max_episode_steps`.

    Attributes:
        state (np.ndarray): Task-specific state vector.
        steps (int): Steps since the last reset.
        max_episode_steps (int): Episode limit.
    """

    metadata = {"render_modes": ["rgb_array", "human"], "render_fps": 20}
    obs_dim = None
    act_dim = None
    dt = 0.05

    def __init__(self, max_episode_steps=200, render_mode=None):
        """Initialize environment.

        Args:
            max_episode_steps (int, optional): Episode limit. Defaults to 200.
            render_mode (str, optional): Render mode. Supported modes are
                specified in environment's metadata["render_modes"] dict.
                Defaults to None.
        """
        assert (
            render_mode in self.metadata["render_modes"] or render_mode is None
        ), (
            f"render_mode: {render_mode} is not supported. "
            f"Supported modes: {self.metadata['render_modes']}"
        )
        assert max_episode_steps >= 1, "max_episode_steps must be >= 1."
        self.max_episode_steps = max_episode_steps
        self.render_mode = render_mode
        self.action_space = spaces.Box(
            -1.0, 1.0, shape=(self.act_dim,), dtype=np.float32
        )
        high = np.full(self.obs_dim, np.inf)
        self.observation_space = spaces.Box(-high, high, dtype=np.float64)
        self.state = None
        self.steps = 0
        self.last_action = np.zeros(self.act_dim)
        self.episode_return = 0.0
        self.screen = None
        self.clock = None

    def _sample_state(self):
        raise NotImplementedError

    def _observe(self):
        raise NotImplementedError

    def _advance(self, u):
        """Integrates one step with clipped action `u`; returns the reward."""
        raise NotImplementedError

    def _draw(self, surf):
        raise NotImplementedError

    def reset(self, seed=None, options=None):
        super().reset(seed=seed)
        self.state = self._sample_state()
        self.steps = 0
        self.last_action = np.zeros(self.act_dim)
        self.episode_return = 0.0
        if self.render_mode == "human":
            self.render()
        return self._observe(), {}

    def step(self, action):
        assert self.state is not None, "Call reset() before step()."
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.act_dim,):
            raise ValueError(
                f"Action has shape {action.shape}, expected ({self.act_dim},)."
            )
        if not np.all(np.isfinite(action)):
            raise ValueError(f"Action {action} is not finite.")
        u = np.clip(action, -1.0, 1.0)
        reward = float(self._advance(u))
        self.steps += 1
        self.last_action = u
        self.episode_return += reward
        truncated = self.steps >= self.max_episode_steps
        if self.render_mode == "human":
            self.render()
        return self._observe(), reward, False, truncated, {}

    def render(self):
        if self.render_mode is None:
            gymnasium.logger.warn(
                "No render mode specified, skipping render. Please "
                "specify render_mode as one of the supported modes "
                f"{self.metadata['render_modes']} at initialization."
            )
            return None
        return self._render(self.render_mode)

    def _render(self, render_mode):
        pygame.font.init()
        if self.screen is None and render_mode == "human":
            pygame.init()
            pygame.display.init()
            self.screen = pygame.display.set_mode((SCREEN_SIZE, SCREEN_SIZE))
        if self.clock is None:
            self.clock = pygame.time.Clock()

        surf = pygame.Surface((SCREEN_SIZE, SCREEN_SIZE))
        surf.fill((255, 255, 255))
        if self.state is not None:
            self._draw(surf)
        # Flip y-axis since pygame has origin at top left.
        surf = pygame.transform.flip(surf, False, True)
        font = pygame.font.Font(pygame.font.get_default_font(), FONT_SIZE)
        text = font.render(
            f"Step: {self.steps} | Return: {self.episode_return:.2f}",
            True,
            (0, 0, 255),
        )
        surf.blit(text, (10, 10))

        if render_mode == "human":
            pygame.event.pump()
            self.clock.tick(self.metadata["render_fps"])
            self.screen.blit(surf, (0, 0))
            pygame.display.update()
            return None
        return np.transpose(
            np.array(pygame.surfarray.pixels3d(surf)), axes=(1, 0, 2)
        )

    def _to_screen(self, point, scale):
        return (
            int(SCREEN_SIZE / 2 + point[0] * scale),
            int(SCREEN_SIZE / 2 + point[1] * scale),
        )

    def close(self):
        if self.screen is not None:
            pygame.display.quit()
            pygame.quit()
            self.screen = None
