"""Exception hierarchy shared by every module of the package."""


class GraphCNNError(ValueError):
    """Base class for all errors raised by graphcnn."""


class ShapeMismatch(GraphCNNError):
    pass


class NonIdentityFirstSlice(GraphCNNError):
    pass


class NonFiniteValue(GraphCNNError):
    pass


class IndexOutOfRange(GraphCNNError):
    pass


class DuplicateEdge(GraphCNNError):
    pass


class ReservedSlice(GraphCNNError):
    pass


class InvalidGraph(GraphCNNError):
    """Raised by ``validate_graph``; ``violations`` lists every problem found."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(f"{type(v).__name__}: {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s): {lines}")


class NotAGridSample(GraphCNNError):
    pass


class EmptyBatch(GraphCNNError):
    pass


class InvalidRate(GraphCNNError):
    pass


class EmptyMask(GraphCNNError):
    pass


class InvalidClass(GraphCNNError):
    pass


class ArchSyntaxError(GraphCNNError):
    """Malformed architecture string. ``offset`` is a byte offset into the UTF-8 text."""

    def __init__(self, offset, expected, text=""):
        self.offset = offset
        self.expected = expected
        self.text = text
        super().__init__(f"at byte {offset}: expected {expected}")


class EmptyPlan(GraphCNNError):
    pass


class DimensionError(GraphCNNError):
    pass


class TooFewSamples(GraphCNNError):
    pass


class NonFiniteLoss(GraphCNNError):
    pass


class EmptyEvalSet(GraphCNNError):
    pass


class ParseError(GraphCNNError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")


class InvariantViolation(GraphCNNError):
    def __init__(self, line, reason):
        self.line = line
        self.reason = reason
        super().__init__(f"line {line}: {reason}")
