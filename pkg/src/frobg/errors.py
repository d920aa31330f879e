"""Exception taxonomy shared across the package."""


class FrobgError(Exception):
    """Base class for all package-specific errors."""


# --- expression ring ---------------------------------------------------------

class DivisionByZero(FrobgError):
    """A denominator evaluated to zero."""


class LogOfNonPositive(FrobgError):
    """log() of a non-positive real value on the floating path."""


class UnassignedVariable(FrobgError):
    """An evaluation point does not assign every variable of the expression."""


class UnsupportedShape(FrobgError):
    """Expression falls outside the shape an operation can handle
    (e.g. normalizing a log node, inverting a multi-term denominator)."""


class ParseError(FrobgError):
    """Malformed expression text."""


# --- Frobenius data ----------------------------------------------------------

class NonConstantMetric(FrobgError):
    """Third derivatives through the identity coordinate are not constant."""


class DegenerateMetric(FrobgError):
    """The candidate metric has zero determinant."""


class NotQuasihomogeneous(FrobgError):
    """No rational charge d makes the Euler derivative defect quadratic."""


# --- caustics / canonical coordinates ----------------------------------------

class NotSemisimple(FrobgError):
    """Two canonical coordinates coincide (within tolerance) at the point."""


class Not2D(FrobgError):
    """Operation is defined only for two-dimensional models."""


class NoCollision(FrobgError):
    """The probed path does not drive a canonical-coordinate pair together."""


class NotLogarithmic(FrobgError):
    """Residue limit diverges: the probed form has no simple log pole."""


# --- Landau-Ginzburg unfoldings -----------------------------------------------

class DegenerateLeadingCoefficient(FrobgError):
    """The trailing unfolding coefficient vanishes; x=0 is not excluded."""


# --- symmetries ----------------------------------------------------------------

class SingularTransform(FrobgError):
    """The coordinate change of a Legendre-type symmetry is singular at the point."""


class PreconditionViolated(FrobgError):
    """A transform's structural precondition fails (shifted Euler field, d = 1, ...)."""


# --- catalog / CLI --------------------------------------------------------------

class UnknownModel(FrobgError):
    """Requested model name is not registered."""


class UnknownCheck(FrobgError):
    """Requested check name is not recognised."""


class ModelValidationError(FrobgError):
    """A model definition failed its load-time invariants."""
