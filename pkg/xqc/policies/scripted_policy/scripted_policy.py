"""Hand-designed reference controllers used as normalization anchors.

Controllers read the true environment state, not the observation.
"""
import numpy as np
from scipy.linalg import solve_discrete_are

from xqc.environments.double_integrator.double_integrator import (
    ACTION_COST,
    POSITION_COST,
    VELOCITY_COST,
    DoubleIntegratorEnv,
    linear_dynamics,
)
from xqc.environments.pendulum.pendulum import (
    GRAVITY_GAIN,
    TORQUE_GAIN,
    PendulumEnv,
)
from xqc.environments.reacher2.reacher2 import (
    MAX_JOINT_SPEED,
    Reacher2Env,
    jacobian,
)
from xqc.policies.base_policy.base_policy import BasePolicy

# Balancing region and gains of the pendulum PD controller.
CATCH_ANGLE = 0.4
KP = 10.0
KD = 2.0
# Damping of the least-squares inverse kinematics.
IK_DAMPING = 0.05


def policy(**kwargs):
    """Creates the scripted reference controller for an environment.

    Returns:
        BasePolicy: Reference policy.
    """
    env = kwargs["env"]
    for env_cls, policy_cls in CONTROLLERS.items():
        if isinstance(env.unwrapped, env_cls):
            return policy_cls(**kwargs)
    raise ValueError(f"No scripted policy for {type(env.unwrapped).__name__}.")


class PendulumSwingUpPolicy(BasePolicy):
    """Energy-pumping swing-up followed by PD balancing.

    With `E = 0.5 phi'^2 + 15 cos(phi)` the action changes the energy at rate
    `6 u phi'`, so pushing along the velocity pumps energy towards the
    upright level `E* = 15`. Near upright a PD law takes over.
    """

    def action(self, observation):
        phi, phi_dot = self.env.unwrapped.state
        if abs(phi) < CATCH_ANGLE:
            return np.clip([-(KP * phi + KD * phi_dot)], -1.0, 1.0)
        energy = 0.5 * phi_dot**2 + GRAVITY_GAIN * np.cos(phi)
        direction = 1.0 if phi_dot >= 0 else -1.0
        gain = (GRAVITY_GAIN - energy) / TORQUE_GAIN
        return np.clip([direction * gain], -1.0, 1.0)


class LqrPolicy(BasePolicy):
    """Discrete-time LQR for the double integrator, saturated to [-1, 1]."""

    def __init__(self, env, seed=None):
        super().__init__(env, seed)
        a, b = linear_dynamics(env.unwrapped.dt)
        q = np.diag([POSITION_COST, VELOCITY_COST])
        r = np.array([[ACTION_COST]])
        p = solve_discrete_are(a, b, q, r)
        self.gain = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)

    def action(self, observation):
        state = self.env.unwrapped.state
        return np.clip(-self.gain @ state, -1.0, 1.0)


class DampedLeastSquaresPolicy(BasePolicy):
    """Damped least-squares inverse kinematics towards the target."""

    def action(self, observation):
        env = self.env.unwrapped
        jac = jacobian(env.state[:2])
        offset = env.offset()
        dq = jac.T @ np.linalg.solve(
            jac @ jac.T + IK_DAMPING**2 * np.eye(2), offset
        )
        return np.clip(dq / (MAX_JOINT_SPEED * env.dt), -1.0, 1.0)


CONTROLLERS = {
    PendulumEnv: PendulumSwingUpPolicy,
    DoubleIntegratorEnv: LqrPolicy,
    Reacher2Env: DampedLeastSquaresPolicy,
}
