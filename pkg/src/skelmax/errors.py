"""Exception types. Every error carries a short machine-readable ``code``."""


class SkelmaxError(ValueError):
    def __init__(self, code, message=""):
        self.code = code
        super().__init__(f"{code}: {message}" if message else code)


class DominationError(SkelmaxError):
    """Raised when the discretization domination inequality fails at a center."""

    def __init__(self, center, lhs, rhs):
        self.center = center
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(
            "domination-violated",
            f"center index {center}: {lhs!r} > {rhs!r}",
        )


class HypothesisViolated(SkelmaxError):
    def __init__(self, witness):
        self.witness = witness
        super().__init__("hypothesis-violated", f"no admissible radius for x={witness}")
