class Impossible(Exception):
    """Exception raised when an evaluation cannot be performed.

    The reason is given as the exception message.
    """


class PreconditionError(Impossible):
    """An operation was called outside of its domain."""


class CaseMismatch(PreconditionError):
	"""delta1 <= 1 <= delta2 with a non-symmetric class"""


class UnsupportedFamily(PreconditionError):
	"""No explicit Levy measure density for this Bernstein family"""


class SingularPoint(Impossible):
    """Kernel evaluated on the diagonal x = y."""


class DivergentTail(Impossible):
    """The tail model has infinite mass."""


class QuadratureFailure(Impossible):
    """Adaptive quadrature did not reach the requested tolerance."""
    def __init__(self, message, value=None, error=None):
        self.value = value
        self.error = error
        super().__init__(message)


class StencilRejected(Impossible):
    """Grid too coarse for a monotone stencil."""


class BudgetExhausted(Impossible):
	"""Iteration budget exhausted before convergence"""
	def __init__(self, message, iterations=0):
		self.iterations = iterations
		super().__init__(message)


class PolicyCycle(Impossible):
	"""Policy iteration revisited an earlier policy"""
	def __init__(self, cycle_length):
		self.cycle_length = cycle_length
		super().__init__(f"policy cycle of length {cycle_length}")


class ConfigError(Exception):
	"""Malformed or missing configuration"""


class CheckFailed(Exception):
	"""Raise to finish a command after one or more failed checks"""
	def __init__(self, failures):
		self.failures = failures
		super().__init__(f"{failures} check(s) failed")
