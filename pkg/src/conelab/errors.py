class ConelabError(Exception):
    """Base class for errors raised by this package."""


class InvalidManifoldError(ConelabError, ValueError):
    pass


class IndefiniteOperatorError(ConelabError):
    """The assembled operator has a negative eigenvalue beyond tolerance."""

    def __init__(self, eigenvalue: float, scale: float):
        self.eigenvalue = eigenvalue
        self.scale = scale
        super().__init__(
            f"indefinite operator: eigenvalue {eigenvalue:.6e} below -1e-8 * {scale:.6e}"
        )


class CalculusError(ConelabError, ValueError):
    """A spectral multiplier is undefined on part of the spectrum."""


class DivergentIntegralError(ConelabError):
    """A time integral diverges because of kernel components of the input."""


class QuadratureError(ConelabError):
    """Quadrature truncation or error estimate exceeds the requested tolerance."""


class LevelTooSmallError(ConelabError, ValueError):
    def __init__(self, level: float, minimal: float):
        self.level = level
        self.minimal = minimal
        super().__init__(
            f"level too small: {level:.6g} leaves no point outside the exceptional set; "
            f"minimal admissible level is {minimal:.6g}"
        )
