from xqc.environments import double_integrator_v0, pendulum_v0, reacher2_v0

TASKS = {
    "pendulum": pendulum_v0,
    "double_integrator": double_integrator_v0,
    "reacher2": reacher2_v0,
}


def make(task, **kwargs):
    """Creates a toy task by id.

    Args:
        task (str): One of `pendulum`, `double_integrator`, `reacher2`.
        **kwargs: Forwarded to the environment constructor.

    Returns:
        gymnasium.Env: Created environment.
    """
    if task not in TASKS:
        raise ValueError(f"Unknown task {task!r}. Available: {sorted(TASKS)}.")
    return TASKS[task].env(**kwargs)
