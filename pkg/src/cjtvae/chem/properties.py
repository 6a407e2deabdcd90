"""Property oracles and score normalization."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import EmptyInput, ValenceError
from .crippen import crippen_logp
from .mol import MolGraph
from .rings import largest_ring_size


def penalized_logp(mol: MolGraph) -> float:
    """Partition estimate minus a penalty for rings larger than 6 atoms."""
    penalty = max(0, largest_ring_size(mol) - 6)
    return crippen_logp(mol) - penalty


def synthetic_property(mol: MolGraph) -> float:
    """Heavy-atom-count score in [0, 1]: exact, monotone, order-invariant."""
    if mol.n_atoms == 0:
        raise ValenceError("empty molecule")
    return min(1.0, mol.n_atoms / 40.0)


ORACLES = {
    "synthetic": synthetic_property,
    "logp": crippen_logp,
    "penalized_logp": penalized_logp,
}


class NormalizedScores(NamedTuple):
    values: np.ndarray
    lo: float
    hi: float
    degenerate: bool


def normalize_scores(raw) -> NormalizedScores:
    """Clip to the 5th/95th percentiles and rescale that window to [0, 1].

    A degenerate window (p5 == p95) yields all zeros with the flag set
    instead of an error, so preprocessing keeps running.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no scores to normalize")
    lo = float(np.percentile(arr, 5.0))
    hi = float(np.percentile(arr, 95.0))
    if hi == lo:
        return NormalizedScores(np.zeros_like(arr), lo, hi, True)
    values = (np.clip(arr, lo, hi) - lo) / (hi - lo)
    return NormalizedScores(values, lo, hi, False)
