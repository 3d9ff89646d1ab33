from .double_integrator.double_integrator import env
