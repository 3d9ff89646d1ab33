from .oracle import HvpOracle, Loss, dense_hessian, hvp, value_and_grad
from .params import LayoutEntry, ParamVector
from .tape import DIRECT, Primitives, Tape
