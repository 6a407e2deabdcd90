"""Chemistry substrate: SMILES, molecular graphs, fingerprints, oracles."""

from .mol import Atom, MolGraph, AROMATIC, DOUBLE, SINGLE, TRIPLE
from .smiles import canonical_form, parse_smiles, write_smiles
from .fingerprint import Fingerprint, morgan_fingerprint, tanimoto
from .crippen import crippen_logp
from .properties import (
    ORACLES,
    NormalizedScores,
    normalize_scores,
    penalized_logp,
    synthetic_property,
)
from .rings import largest_ring_size, ring_bonds, sssr

__all__ = [
    "Atom", "MolGraph", "AROMATIC", "DOUBLE", "SINGLE", "TRIPLE",
    "canonical_form", "parse_smiles", "write_smiles",
    "Fingerprint", "morgan_fingerprint", "tanimoto",
    "crippen_logp", "penalized_logp", "synthetic_property",
    "ORACLES", "NormalizedScores", "normalize_scores",
    "largest_ring_size", "ring_bonds", "sssr",
]
