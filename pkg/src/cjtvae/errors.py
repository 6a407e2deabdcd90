"""Exception classes shared across the package."""


class CjtvaeError(Exception):
    """Base class for all package errors."""


class SmilesSyntaxError(CjtvaeError):
    """Malformed SMILES: unbalanced tokens, unknown symbols, bad brackets."""


class ValenceError(CjtvaeError):
    """An atom's bond order sum exceeds every allowed valence."""


class UnsupportedFeature(CjtvaeError):
    """Legal SMILES we deliberately do not handle (stereo, isotopes, fragments)."""


class WidthMismatch(CjtvaeError):
    """Fingerprints of different bit widths compared."""


class UnknownAtomType(CjtvaeError):
    """No contribution-table entry for an atom environment."""


class EmptyInput(CjtvaeError):
    """An operation received an empty array or corpus."""


class DisconnectedInput(CjtvaeError):
    """Graph operations require a connected molecule."""


class EmptyCorpus(CjtvaeError):
    """Vocabulary construction over zero molecules."""


class UnknownLabel(CjtvaeError):
    """A cluster label is missing from the vocabulary."""


class NoValidAttachment(CjtvaeError):
    """No chemically valid way to fuse a cluster onto the partial molecule."""


class AssemblyFailed(CjtvaeError):
    """Every assembly branch dead-ended."""


class ShapeMismatch(CjtvaeError):
    """Tensor operands with incompatible shapes."""


class MissingGradient(CjtvaeError):
    """Optimizer step requested before gradients were populated."""


class NumericFault(CjtvaeError):
    """A NaN or Inf appeared in tensor data."""


class EmptyCandidates(CjtvaeError):
    """Candidate scoring over an empty list."""


class MaxNodesExceeded(CjtvaeError):
    """Free decoding hit the node budget before finishing."""


class CheckpointError(CjtvaeError):
    """Corrupt checkpoint file or metadata mismatch."""
