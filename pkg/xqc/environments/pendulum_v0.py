from .pendulum.pendulum import env
