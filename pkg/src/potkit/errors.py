"""Exception hierarchy.

Input problems derive from ``InputError`` (a ``ValueError``); numerical or
sampling failures derive from ``ComputeError``. The CLI maps the first family
to exit code 2 and the second to exit code 3.
"""


class PotkitError(Exception):
    pass


class InputError(PotkitError, ValueError):
    pass


class ComputeError(PotkitError, RuntimeError):
    pass


# graph-core
class DisconnectedGraph(InputError):
    pass


class InvalidEdge(InputError):
    pass


class EmptySet(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class UnknownModel(InputError):
    pass


# dirichlet
class SingularSystem(ComputeError):
    pass


class NonConvergence(ComputeError):
    pass


class OverlappingSets(InputError):
    pass


class StartOutsideDomain(InputError):
    pass


class SameVertex(InputError):
    pass


class VertexInSet(InputError):
    pass


class MalformedNesting(InputError):
    pass


# potential kernel
class NotInterior(InputError):
    pass


class InsufficientLevels(InputError):
    pass


class IncompleteTable(InputError):
    pass


# conditioned walk
class NonStochasticRow(ComputeError):
    pass


class MissingKernelEntry(InputError):
    pass


class GraphMismatch(InputError):
    pass


# spanning trees
class IncompleteOrdering(InputError):
    pass


class ChainGraphMismatch(InputError):
    pass


class UnorientedTree(InputError):
    pass


class TooLarge(InputError):
    pass


# harnack
class ScaleTooLargeForTruncation(ComputeError):
    pass


class NoStabilization(ComputeError):
    pass


# cli
class ConfigError(InputError):
    pass
