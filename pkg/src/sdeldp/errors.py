"""Exception types shared across the package."""


class SdeldpError(Exception):
    """Base class for package errors."""


class ValidationError(SdeldpError):
    """A parameter or configuration value violates its contract."""


class FieldEvaluationError(SdeldpError):
    """A coefficient field returned a non-finite value."""

    def __init__(self, label, t, x):
        self.label = label
        self.t = t
        self.x = x
        super().__init__(
            f"field '{label}' returned a non-finite value at t={t!r}, x={x!r}"
        )


class DivergenceError(SdeldpError):
    """A trajectory blew up (non-finite state or norm above the blow-up bound)."""

    def __init__(self, time, which="path", norm=None):
        self.time = time
        self.which = which
        self.norm = norm
        msg = f"{which} diverged at t={time:.6g}"
        if norm is not None:
            msg += f" (|x|={norm:.3g})"
        super().__init__(msg)


class DivergenceRateError(SdeldpError):
    """Too many Monte Carlo replicas diverged; the field likely violates the
    growth bound needed for non-explosion."""

    def __init__(self, diverged, replicas):
        self.diverged = diverged
        self.replicas = replicas
        super().__init__(
            f"{diverged}/{replicas} replicas diverged "
            f"({100.0 * diverged / replicas:.3f}% > 0.1% abort threshold)"
        )


class SingularIntegrandError(SdeldpError):
    """The integrand of a modulus integral hit a zero of the modulus at an
    interior quadrature node."""
