"""Exception types shared across the solver."""


class DomainError(ValueError):
    """A pointwise formula was evaluated outside its domain (e.g. rho <= 0)."""


class InadmissibleStateError(DomainError):
    """A state failed the admissibility test.

    ``quantity`` names the offending quantity ("density" or "internal_energy")
    and ``value`` holds the smallest offending value found.
    """

    def __init__(self, quantity, value, message=None):
        self.quantity = quantity
        self.value = value
        super().__init__(message or f"inadmissible state: {quantity}={value!r}")


class ConfigError(ValueError):
    """Invalid run configuration or user input. Maps to CLI exit code 2."""


class StructuralError(RuntimeError):
    """A structural audit failed (positivity of averages or divergence-free field).

    Carries optional ``cell`` (mesh name and index) and ``step`` context.
    Maps to CLI exit code 3.
    """

    def __init__(self, message, cell=None, step=None):
        self.cell = cell
        self.step = step
        context = []
        if cell is not None:
            context.append(f"cell={cell}")
        if step is not None:
            context.append(f"step={step}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
