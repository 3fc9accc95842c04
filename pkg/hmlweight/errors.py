"""
Exception hierarchy for the toolkit.

Library code raises subclasses of HmlError; the CLI and the HTTP service map
them to exit codes / status codes.
"""


class HmlError(Exception):
    """Base class for every error raised by hmlweight."""


class HierarchyError(HmlError):
    """Invalid label hierarchy."""


class CyclicHierarchy(HierarchyError):
    """The edge relation contains a cycle."""

    def __init__(self, cycle: list[tuple[str, str]]):
        self.cycle = cycle
        path = " -> ".join(parent for parent, _ in cycle)
        if cycle:
            path += f" -> {cycle[-1][1]}"
        super().__init__(f"Hierarchy contains a cycle: {path}")


class UnknownNode(HierarchyError, KeyError):
    """A node id that the hierarchy does not declare."""

    def __init__(self, node_id: str):
        self.node_id = node_id
        super().__init__(f"Unknown node id: {node_id!r}")

    def __str__(self) -> str:
        return self.args[0]


class ShapeError(HmlError, ValueError):
    """Array dimensions do not agree."""


class DimensionMismatch(ShapeError):
    """A dataset does not fit a checkpoint or configuration."""


class InsufficientEnsemble(HmlError):
    """An uncertainty measure needs more ensemble members than were given."""


class NotDefined(HmlError):
    """A metric is undefined for the given input (e.g. no positive labels)."""


class ParseError(HmlError, ValueError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownClassToken(ParseError, UnknownNode):
    """A data row references a class that the header does not declare."""

    def __init__(self, node_id: str, line: int | None = None):
        self.node_id = node_id
        ParseError.__init__(self, f"Unknown class token: {node_id!r}", line)

    def __str__(self) -> str:
        return self.args[0]


class EmptyDataset(HmlError):
    """The operation needs at least one observation."""


class NonFiniteLoss(HmlError):
    """Training produced a NaN or infinite loss."""


class ConfigError(HmlError):
    """Invalid configuration or command-line usage."""
