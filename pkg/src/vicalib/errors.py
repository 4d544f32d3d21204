"""Exception hierarchy.

Every failure raised by the toolkit derives from :class:`VicalibError`.
``DataError`` subclasses describe bad or insufficient input; ``NumericalError``
subclasses describe problems that only show up while solving (degenerate
geometry, missing excitation, non-convergence). The CLI maps the two families
to distinct exit codes.
"""


class VicalibError(Exception):
    pass


class DataError(VicalibError):
    pass


class NumericalError(VicalibError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MonotonicityError(ParseError):
    def __init__(self, prev_t, t, line=None, source=None):
        self.pair = (prev_t, t)
        super().__init__(
            f"timestamps not strictly increasing ({prev_t} -> {t})", line=line, source=source
        )


class NormError(ParseError):
    pass


class MissingSection(ParseError):
    def __init__(self, section, source=None):
        self.section = section
        super().__init__(f"missing section [{section}]", source=source)

    def __str__(self):
        return f"MissingSection({self.section!r})"


class OutOfRange(DataError):
    pass


class EmptyStream(DataError):
    pass


class NoOverlap(DataError):
    pass


class InsufficientData(DataError):
    def __init__(self, message, n=None):
        self.n = n
        super().__init__(message)


class EmptyRange(DataError):
    pass


class EmptyAssociation(DataError):
    pass


class NoPairs(DataError):
    pass


class AllSaturated(DataError):
    pass


class MissingCorrespondence(DataError):
    pass


class UnobservedPixel(DataError):
    pass


class BadWindow(DataError):
    pass


class NoSignal(NumericalError):
    pass


class BoundaryMinimum(NumericalError):
    pass


class SingularMatrix(NumericalError):
    pass


class DegenerateExcitation(NumericalError):
    def __init__(self, message, axis=None):
        self.axis = axis
        super().__init__(message)


class DegenerateMotion(NumericalError):
    pass


class DegenerateGeometry(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message, best=None):
        self.best = best
        super().__init__(message)


class MissingFile(DataError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"no such file: {path}")
