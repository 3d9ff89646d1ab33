from .reacher2.reacher2 import env
