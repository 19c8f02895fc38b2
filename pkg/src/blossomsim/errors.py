"""Exception hierarchy shared by every stage of the pipeline."""


class BlossomSimError(Exception):
    """Base class for all package errors."""


class DegenerateInput(BlossomSimError, ValueError):
    """Fewer than three distinct points, or all points collinear."""


class InvalidDepth(BlossomSimError, ValueError):
    """Depth is non-positive, non-finite or outside the sensor range."""


class TooFewValidDepths(BlossomSimError):
    """A cluster observation carries fewer than three valid depth samples."""


class EmptyCloud(BlossomSimError, ValueError):
    pass


class TooFewNeighbors(BlossomSimError, ValueError):
    pass


class DegenerateNormals(BlossomSimError):
    """The averaged cluster normal vanished."""


class DegenerateHull(BlossomSimError, ValueError):
    pass


class PlanMismatch(BlossomSimError):
    """A tour references clusters that have no waypoints or IK verdict."""


class ConfigError(BlossomSimError):
    """Invalid scenario configuration.

    ``line`` is the 1-based line of the offending entry when known.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None and line is not None:
            prefix = f"{path}:{line}: "
        elif path is not None:
            prefix = f"{path}: "
        elif line is not None:
            prefix = f"line {line}: "
        super().__init__(prefix + message)


class ParseError(BlossomSimError, ValueError):
    def __init__(self, message, line=None, record=None):
        self.line = line
        self.record = record
        where = []
        if line is not None:
            where.append(f"line {line}")
        if record is not None:
            where.append(f"record {record}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class BoundsError(ParseError):
    """An annotated vertex lies outside the declared image."""


class PipelineInvariantError(BlossomSimError):
    """An internal consistency check failed during a scenario run."""
