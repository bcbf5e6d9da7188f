"""Exception types shared across the toolkit."""


class ContractViolation(ValueError):
    """A caller broke a documented precondition (shape mismatch, bad range, ...)."""


class BudgetExhausted(RuntimeError):
    """The query cap was hit; the offending call never reached the oracle."""


class UnroundedInput(ValueError):
    """An image with non-integral pixels reached the counted oracle path."""


class InitFailed(RuntimeError):
    """Could not find an initial adversarial example within the budget.

    Carries the partial attack state (with its query log) as ``.state``.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class OracleUnavailable(RuntimeError):
    """Remote oracle timed out, disconnected, or refused the connection.

    May carry the partial attack state as ``.state`` when raised mid-attack.
    """

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class ProtocolError(RuntimeError):
    """Malformed or out-of-order frame on the oracle wire protocol."""


class ShapeRejected(ProtocolError):
    """The oracle server refused the image dimensions."""


class InsufficientSamples(RuntimeError):
    """Conditioned sampling did not reach the requested trial count."""
