"""
Exceptions raised by chronolens. Every error has :class:`ChronoLensError` as its base so that the command
line front end can separate library failures from programming errors.
"""


class ChronoLensError(Exception):
    """
    Base class of all chronolens errors.
    """
    pass


# metrics

class OutOfDomain(ChronoLensError):
    def __init__(self, point, domain):
        self.point = point
        self.domain = domain
        super().__init__("Event {} lies outside the chart domain {}".format(point, domain))


class IllConditioned(ChronoLensError):
    pass


# geodesics

class StepFailure(ChronoLensError):
    """
    The adaptive integrator could not continue.

    :param message: Message reported by the stepper
    :param last_state: Last accepted (s, x, xdot) triple
    """

    def __init__(self, message, last_state=None):
        self.last_state = last_state
        super().__init__(message)


class NoCutInDomain(ChronoLensError):
    def __init__(self, lower_bound):
        self.lower_bound = lower_bound
        super().__init__("No null cut point before the domain exit at s={:.6g}".format(lower_bound))


class NeverInside(ChronoLensError):
    pass


# causal structure

class SolverNoConverge(ChronoLensError):
    pass


class IndeterminateRelation(ChronoLensError):
    pass


class NotObserved(ChronoLensError):
    pass


class DomainEscape(ChronoLensError):
    def __init__(self, members):
        self.members = list(members)
        super().__init__("Observer worldlines leave the domain: {}".format(self.members))


class OutOfChart(ChronoLensError):
    pass


# observations

class EmptySet(ChronoLensError):
    pass


class DuplicateSourceId(ChronoLensError):
    pass


# reconstruction

class NoValidTuple(ChronoLensError):
    pass


class TooFewMatches(ChronoLensError):
    pass


class DegenerateSpan(ChronoLensError):
    pass


class NonLorentzianFit(ChronoLensError):
    def __init__(self, eigenvalues):
        self.eigenvalues = eigenvalues
        super().__init__("Fitted cone has eigenvalues {}, expected exactly one negative".format(eigenvalues))


class LeftVacuumRegion(ChronoLensError):
    def __init__(self, parameter):
        self.parameter = parameter
        super().__init__("Null geodesic left the vacuum region at s={:.6g}".format(parameter))


# waves

class CFLViolation(ChronoLensError):
    pass


class GridTooSmall(ChronoLensError):
    pass


class NaNDetected(ChronoLensError):
    def __init__(self, step):
        self.step = step
        super().__init__("Non-finite values after time step {}".format(step))


class PicardDiverged(ChronoLensError):
    def __init__(self, history):
        self.history = list(history)
        super().__init__("Picard iteration diverged, update norms {}".format(self.history[-5:]))


class SupportOverlap(ChronoLensError):
    pass


class NoIntersection(ChronoLensError):
    pass


# orchestration

class ConfigError(ChronoLensError):
    """
    Raised for invalid scenario files.

    :param errors: list of (json pointer, message) pairs
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = ["{}: {}".format(pointer or '/', message) for pointer, message in self.errors]
        super().__init__("Invalid configuration\n  " + "\n  ".join(lines))


class HashMismatch(ChronoLensError):
    pass
