"""Graph featurization for the message passing encoder.

Feature layout per atom: element one-hot (10 known + other), charge
one-hot over [-2, 2], aromatic flag, hydrogen-count one-hot over [0, 4].
Bonds are a 4-way order one-hot.

Atoms are relabeled into canonical order before anything else, so two
numberings of the same molecule produce the same FeaturizedGraph and the
encoder output is bit-identical, not merely close. Message routing is
precomputed as 0/1 aggregation matrices; everything here is static per
molecule and reused across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chem.mol import AROMATIC, DOUBLE, MolGraph, SINGLE, TRIPLE
from ..chem.smiles import write_smiles_with_order

_ELEMENTS = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"]
_ELEMENT_AT = {e: i for i, e in enumerate(_ELEMENTS)}
_ORDER_AT = {SINGLE: 0, DOUBLE: 1, TRIPLE: 2, AROMATIC: 3}

ATOM_DIM = len(_ELEMENTS) + 1 + 5 + 1 + 5
BOND_DIM = 4


def atom_features(mol: MolGraph, i: int) -> np.ndarray:
    atom = mol.atoms[i]
    out = np.zeros(ATOM_DIM)
    out[_ELEMENT_AT.get(atom.element, len(_ELEMENTS))] = 1.0
    out[11 + min(max(atom.charge, -2), 2) + 2] = 1.0
    out[16] = 1.0 if atom.aromatic else 0.0
    out[17 + min(atom.hcount, 4)] = 1.0
    return out


def bond_features(order: int) -> np.ndarray:
    out = np.zeros(BOND_DIM)
    out[_ORDER_AT[order]] = 1.0
    return out


@dataclass
class FeaturizedGraph:
    n_atoms: int
    n_edges: int                 # directed
    atom_mat: np.ndarray         # (n, ATOM_DIM)
    edge_src_mat: np.ndarray     # (E, ATOM_DIM), source atom features
    edge_feat_mat: np.ndarray    # (E, BOND_DIM)
    m_excl: np.ndarray           # (E, E): e=(u,v) sums edges (w->u), w != v
    m_at: np.ndarray             # (n, E): atom u sums edges (v->u)


def featurize(mol: MolGraph) -> FeaturizedGraph:
    order = write_smiles_with_order(mol)[1]
    canon, _ = mol.subgraph(order)

    n = canon.n_atoms
    atom_mat = np.stack([atom_features(canon, i) for i in range(n)])

    edges: list[tuple[int, int]] = []
    for u, v, _ in canon.bonds:
        edges.append((u, v))
        edges.append((v, u))
    edges.sort()
    n_e = len(edges)
    if n_e == 0:
        empty = np.zeros((0, 0))
        return FeaturizedGraph(n, 0, atom_mat, np.zeros((0, ATOM_DIM)),
                               np.zeros((0, BOND_DIM)), empty,
                               np.zeros((n, 0)))

    edge_id = {e: k for k, e in enumerate(edges)}
    edge_src = np.stack([atom_mat[u] for u, _ in edges])
    edge_feat = np.stack([bond_features(canon.bond_order(u, v))
                          for u, v in edges])
    m_excl = np.zeros((n_e, n_e))
    for k, (u, v) in enumerate(edges):
        for w in canon.adjacency[u]:
            if w != v:
                m_excl[k, edge_id[(w, u)]] = 1.0
    m_at = np.zeros((n, n_e))
    for u in range(n):
        for w in canon.adjacency[u]:
            m_at[u, edge_id[(w, u)]] = 1.0
    return FeaturizedGraph(n, n_e, atom_mat, edge_src, edge_feat, m_excl, m_at)
