"""Exception types raised by twistlab."""


class TwistlabError(Exception):
    pass


class NonConvergence(TwistlabError):
    """A Newton-type solve did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularTwistBlock(TwistlabError):
    """The mixed Hessian block of the generating function is singular."""


class LocalTwistLoss(TwistlabError):
    """det of d(pi_1 o F^n)/dp fell below threshold during continuation."""

    def __init__(self, message, epsilon=None, det=None):
        super().__init__(message)
        self.epsilon = epsilon
        self.det = det


class DegenerateBasis(TwistlabError):
    pass


class ConstantPotential(TwistlabError):
    pass


class ParseError(TwistlabError):
    def __init__(self, message, line=None, key=None):
        loc = []
        if key is not None:
            loc.append(f"key {key!r}")
        if line is not None:
            loc.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.key = key


class ValidationError(TwistlabError):
    def __init__(self, message, key=None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key
