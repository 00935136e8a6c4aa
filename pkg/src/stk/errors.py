"""Exception hierarchy shared by every module."""


class StkError(Exception):
    """Base class for all engine errors."""


class ValidationError(StkError):
    pass


class AntisymmetryViolation(ValidationError):
    def __init__(self, a, b):
        super().__init__(f"specialization cycle between {a!r} and {b!r}: space is not T0")
        self.witness = (a, b)


class UnknownPoint(StkError, KeyError):
    pass


class NotContinuous(ValidationError):
    pass


class TargetMismatch(StkError):
    pass


class NotClosed(StkError):
    pass


class NotClosedEmbedding(StkError):
    pass


class AxiomViolation(ValidationError):
    def __init__(self, axiom, witness):
        super().__init__(f"groupoid axiom '{axiom}' fails at {witness!r}")
        self.axiom = axiom
        self.witness = witness


class NonEtaleStructureMap(ValidationError):
    pass


class PreconditionError(StkError):
    """A map does not satisfy the hypothesis of the requested construction."""


class NotEtaleOnImage(PreconditionError):
    pass


class NotLocalEmbedding(PreconditionError):
    pass


class HypothesisNotMet(PreconditionError):
    def __init__(self, prop, detail=""):
        super().__init__(f"hypothesis of the {prop} identity not met {detail}".strip())
        self.prop = prop


class StageInvariantBroken(PreconditionError):
    pass


class CoverNotSuitable(PreconditionError):
    def __init__(self, which, detail=""):
        super().__init__(f"cover fails suitability condition ({which}) {detail}".strip())
        self.which = which


class VerificationFailure(StkError):
    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class EtaleOnImageFailed(VerificationFailure):
    def __init__(self, index, detail=""):
        super().__init__(f"glued map at index {sorted(index)} is not étale on its image {detail}".strip())
        self.index = index


class OracleDisagreement(VerificationFailure):
    def __init__(self, probe, counts):
        super().__init__(f"functor/hom disagreement on probe {probe}: {counts}")
        self.probe = probe
        self.counts = counts


class UnknownInstance(StkError, KeyError):
    pass


class ParseError(StkError):
    def __init__(self, line, expected):
        super().__init__(f"line {line}: expected {expected}")
        self.line = line
        self.expected = expected
