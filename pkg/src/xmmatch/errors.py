"""Error types shared across the toolkit.

Every data-dependent failure raises one of these so callers (and the CLI,
which maps them to exit code 2) can tell usage mistakes from bad inputs.
"""

from __future__ import annotations


class XMMatchError(ValueError):
    """Base class for all toolkit errors."""


class ZeroVector(XMMatchError):
    """A row with norm below 1e-12 cannot be normalized."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has norm < 1e-12 and cannot be normalized")


class ParseError(XMMatchError):
    """Malformed embedding file; carries the 1-based offending line number."""

    def __init__(self, line: int, reason: str):
        self.line = line
        super().__init__(f"line {line}: {reason}")


class DimMismatch(XMMatchError):
    """Vectors disagree on dimensionality."""


class NoClusters(XMMatchError):
    """DBSCAN produced zero clusters (every point is noise)."""


class EmptyCluster(XMMatchError):
    """A pseudo-label in [0, K) has no members."""

    def __init__(self, cluster: int):
        self.cluster = cluster
        super().__init__(f"cluster {cluster} has no members")


class SlotOutOfRange(XMMatchError):
    """Memory bank update addressed a slot outside [0, K)."""


class MissingLabel(XMMatchError):
    """An instance lacks a label required by the requested update or loss."""


class ScaleMismatch(XMMatchError):
    """Two banks compared by a consistency term have different K."""


class EmptyBatch(XMMatchError):
    """A loss was asked to reduce over zero instances."""


class EmptyMatch(XMMatchError):
    """A match matrix with no true entries cannot drive sampling."""


class MissingIds(XMMatchError):
    """Ground-truth identities are required but absent from the set."""


class NoPositivePairs(XMMatchError):
    """No identity occurs in both modalities."""
