"""Circular (ECFP-style) fingerprints and Tanimoto similarity."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from ..errors import WidthMismatch
from .mol import MolGraph


def _hash_ints(*values: int) -> int:
    """Stable 64-bit hash of an int tuple; independent of interpreter salt."""
    payload = struct.pack(f"<{len(values)}Q",
                          *(v & 0xFFFFFFFFFFFFFFFF for v in values))
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True)
class Fingerprint:
    bits: frozenset[int]
    nbits: int
    radius: int

    def popcount(self) -> int:
        return len(self.bits)


_ELEMENT_CODES = {sym: i for i, sym in enumerate(
    ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"])}


def morgan_fingerprint(mol: MolGraph, radius: int = 2, nbits: int = 2048) -> Fingerprint:
    """Fold every atom-environment hash up to `radius` into a bit vector.

    The round-0 invariant covers (element, degree, charge, H count,
    aromatic); each round rehashes with the sorted (bond order, neighbor
    hash) multiset, so the result is independent of atom numbering.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if nbits <= 0 or nbits & (nbits - 1):
        raise ValueError("nbits must be a power of two")

    current = []
    for i, atom in enumerate(mol.atoms):
        current.append(_hash_ints(
            _ELEMENT_CODES.get(atom.element, 99), mol.degree(i),
            atom.charge, atom.hcount, int(atom.aromatic)))
    seen = set(current)
    for _ in range(radius):
        nxt = []
        for i in range(mol.n_atoms):
            env = sorted((mol.bond_order(i, v), current[v]) for v in mol.adjacency[i])
            flat = [current[i]]
            for order, h in env:
                flat.extend((order, h))
            nxt.append(_hash_ints(*flat))
        current = nxt
        seen.update(current)
    return Fingerprint(frozenset(h % nbits for h in seen), nbits, radius)


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a AND b| / |a OR b|; 1.0 when both are empty."""
    if a.nbits != b.nbits:
        raise WidthMismatch(f"fingerprint widths differ: {a.nbits} vs {b.nbits}")
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union
