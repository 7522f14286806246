"""The regularized estimation problem ``min_w f(Aw + b) + phi(w)``."""
import numpy as np

from .design import as_operator
from .errors import ContractViolation

__all__ = ["Problem"]


class Problem:
    """Bundles a design operator, a loss and a regularizer.

    ``b`` is an unregularized scalar offset; it is zero unless a solver
    runs in bias mode.
    """

    def __init__(self, A, loss, reg):
        self.A = as_operator(A)
        self.loss = loss
        self.reg = reg
        if self.A.rows != loss.m:
            raise ContractViolation(
                f"design has {self.A.rows} rows but loss has {loss.m} samples")

    @property
    def shape(self):
        return self.A.shape

    def objective(self, w, b=0.0, Aw=None):
        """``f(Aw + b) + phi(w)``; pass ``Aw`` to skip the product."""
        z = self.A.apply(w) if Aw is None else Aw
        return self.loss.value(z + b) + self.reg.value(w)

    def smooth_grad(self, w, b=0.0):
        """Gradient of ``w -> f(Aw + b)`` and the loss gradient at ``Aw + b``."""
        gz = self.loss.grad(self.A.apply(w) + b)
        return self.A.apply_adjoint(gz), gz

    def lambda_scale(self):
        """A representative regularization strength (used for default eta0)."""
        reg = self.reg
        if hasattr(reg, "lam"):
            return reg.lam
        if hasattr(reg, "lams"):
            return float(np.max(reg.lams)) if reg.lams.size else 0.0
        raise ContractViolation("regularizer has no strength to scale eta0 by")
