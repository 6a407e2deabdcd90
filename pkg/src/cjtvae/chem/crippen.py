"""Octanol-water partition estimate from atom contributions.

Implements the Wildman-Crippen additive scheme: every heavy atom is
assigned a type from (element, aromaticity, neighbor pattern) and its
published contribution is summed, plus one term per implicit hydrogen.
The typing rules are a compact subset of the published SMARTS patterns;
environments that fall outside them use the element's catch-all value
and bump a warning counter.
"""

from __future__ import annotations

from collections import Counter

from ..errors import ValenceError
from .mol import AROMATIC, DOUBLE, MolGraph, SINGLE, TRIPLE

CONTRIBUTIONS = {
    "C1": 0.1441, "C2": 0.0000, "C3": -0.2035, "C4": -0.2051,
    "C5": -0.2783, "C6": 0.1551, "C7": 0.0017, "C8": 0.08452,
    "C10": -0.0516, "C14": 0.0000, "C15": 0.2450, "C16": 0.1980,
    "C17": 0.0000, "C18": 0.1581, "C19": 0.2955, "C20": 0.2713,
    "C21": 0.1360, "C22": 0.4619, "C23": 0.5437, "C24": 0.1893,
    "C25": -0.8186, "CS": 0.08129,
    "H1": 0.1230, "H2": -0.2677, "H3": 0.2142, "HS": 0.1125,
    "N1": -1.0190, "N2": -0.7096, "N3": -1.0270, "N4": -0.5188,
    "N5": 0.08387, "N6": 0.1836, "N7": -0.3187, "N8": -0.4458,
    "N9": 0.01508, "N10": -1.9500, "N11": -0.3239, "N12": -1.1190,
    "N13": -0.3396, "NS": -0.4806,
    "O1": 0.1552, "O2": -0.2893, "O3": -0.0684, "O4": -0.4195,
    "O5": 0.0335, "O6": -0.3339, "O8": 0.1788, "O9": -0.1526,
    "O10": 0.1129, "O12": -1.3260, "OS": -0.1188,
    "F": 0.4202, "Cl": 0.6895, "Br": 0.8456, "I": 0.8857,
    "P": 0.8612, "S1": 0.6482, "S2": -0.0024, "S3": 0.6237,
}

_FALLBACK = {"C": "CS", "N": "NS", "O": "OS", "S": "S1", "H": "HS"}
_HETERO = {"N", "O", "S", "P", "F", "Cl", "Br", "I"}
_AROMATIC_SUBST = {"C": "C21", "N": "C22", "O": "C23", "S": "C24",
                   "F": "C14", "Cl": "C15", "Br": "C16", "I": "C17"}

fallback_counts: Counter[str] = Counter()


def _bond_partners(mol: MolGraph, i: int, order: int) -> list[str]:
    return [mol.atoms[v].element for v in mol.adjacency[i]
            if mol.bond_order(i, v) == order]


def _type_carbon(mol: MolGraph, i: int) -> str | None:
    atom = mol.atoms[i]
    if atom.aromatic:
        if atom.hcount > 0:
            return "C18"
        if _bond_partners(mol, i, DOUBLE):
            return "C25"
        subst = [v for v in mol.adjacency[i] if mol.bond_order(i, v) != AROMATIC]
        if not subst:
            return "C19"
        v = subst[0]
        if mol.atoms[v].aromatic:
            return "C20"
        return _AROMATIC_SUBST.get(mol.atoms[v].element)
    if _bond_partners(mol, i, TRIPLE):
        return "C7"
    doubles = _bond_partners(mol, i, DOUBLE)
    if doubles:
        return "C5" if any(e in _HETERO for e in doubles) else "C6"
    neighbors = [mol.atoms[v] for v in mol.adjacency[i]]
    if any(a.element in _HETERO for a in neighbors):
        return "C3" if atom.hcount >= 2 else "C4"
    if any(a.aromatic for a in neighbors):
        if atom.hcount == 3:
            return "C8"
        if atom.hcount == 2:
            return "C10"
        return "C2"
    return "C1" if atom.hcount >= 2 else "C2"


def _type_nitrogen(mol: MolGraph, i: int) -> str | None:
    atom = mol.atoms[i]
    if atom.aromatic:
        return "N12" if atom.charge > 0 else "N11"
    if atom.charge > 0:
        return "N13" if atom.hcount == 0 else "N10"
    if atom.charge < 0:
        return None
    if _bond_partners(mol, i, TRIPLE):
        return "N9"
    if _bond_partners(mol, i, DOUBLE):
        return "N5" if atom.hcount >= 1 else "N6"
    if any(mol.atoms[v].aromatic for v in mol.adjacency[i]):
        if atom.hcount >= 2:
            return "N3"
        return "N4" if atom.hcount == 1 else "N8"
    if atom.hcount >= 2:
        return "N1"
    return "N2" if atom.hcount == 1 else "N7"


def _type_oxygen(mol: MolGraph, i: int) -> str | None:
    atom = mol.atoms[i]
    if atom.aromatic:
        return "O1"
    if atom.charge < 0:
        partners = mol.adjacency[i]
        if partners and mol.atoms[partners[0]].element == "N":
            return "O6"
        if partners and any(
            mol.bond_order(partners[0], w) == DOUBLE
            and mol.atoms[w].element == "O"
            for w in mol.adjacency[partners[0]]
        ):
            return "O12"
        return None
    doubles = [v for v in mol.adjacency[i] if mol.bond_order(i, v) == DOUBLE]
    if doubles:
        partner = mol.atoms[doubles[0]]
        if partner.element in ("N", "O"):
            return "O5"
        if partner.element == "C":
            return "O8" if partner.aromatic else "O9"
        return "O10"
    if atom.hcount >= 1:
        return "O2"
    if any(mol.atoms[v].aromatic for v in mol.adjacency[i]):
        return "O4"
    return "O3"


def atom_type(mol: MolGraph, i: int) -> str | None:
    """Contribution-table key for heavy atom i, or None if untypable."""
    atom = mol.atoms[i]
    elem = atom.element
    if elem == "C":
        return _type_carbon(mol, i)
    if elem == "N":
        return _type_nitrogen(mol, i)
    if elem == "O":
        return _type_oxygen(mol, i)
    if elem == "S":
        if atom.aromatic:
            return "S3"
        return "S2" if atom.charge != 0 else "S1"
    if elem in ("P", "F", "Cl", "Br", "I"):
        return elem
    return None


def hydrogen_type(parent_element: str) -> str:
    if parent_element == "C":
        return "H1"
    if parent_element == "O":
        return "H2"
    if parent_element == "N":
        return "H3"
    return "HS"


def crippen_logp(mol: MolGraph) -> float:
    """Sum of atom-type contributions plus implicit-hydrogen terms."""
    if mol.n_atoms == 0:
        raise ValenceError("empty molecule")
    total = 0.0
    for i, atom in enumerate(mol.atoms):
        key = atom_type(mol, i)
        if key is None:
            key = _FALLBACK.get(atom.element)
            fallback_counts[atom.element] += 1
        total += CONTRIBUTIONS.get(key, 0.0) if key else 0.0
        total += atom.hcount * CONTRIBUTIONS[hydrogen_type(atom.element)]
    return total
