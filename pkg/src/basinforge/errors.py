"""Exception types raised across the package."""


class BasinforgeError(Exception):
    pass


class StepUnderflow(BasinforgeError):
    """Step-size control asked for a step below ``min_step``."""


class NonFinite(BasinforgeError):
    """The propagated state left the finite floats."""


class NotFound(BasinforgeError):
    """No periodic orbit could be located (Newton failed or diverged)."""


class NoSubharmonic(BasinforgeError):
    """The first-order phase equation has no solution for this damping."""


class NotTabulated(BasinforgeError):
    pass


class FingerprintMismatch(BasinforgeError):
    """A checkpoint belongs to a run with different parameters or seed."""


class SchemaError(BasinforgeError):
    pass
