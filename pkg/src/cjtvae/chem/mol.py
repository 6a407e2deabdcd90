"""Molecular graph model: atoms, bonds, valence bookkeeping.

Bond orders are small ints; aromatic bonds get their own code and count
toward valence through the "degree + 1" rule (an atom with any aromatic
bond spends one extra valence unit on the delocalized system).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import ValenceError

SINGLE = 1
DOUBLE = 2
TRIPLE = 3
AROMATIC = 4

BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)

# Allowed valences, lowest first. Lowest valid valence wins for implicit H.
VALENCES = {
    "B": (3,),
    "C": (4,),
    "N": (3,),
    "O": (2,),
    "P": (3, 5),
    "S": (2, 4, 6),
    "F": (1,),
    "Cl": (1,),
    "Br": (1,),
    "I": (1,),
}

ORGANIC_SUBSET = tuple(VALENCES)
AROMATIC_ELEMENTS = ("B", "C", "N", "O", "P", "S")


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    aromatic: bool = False
    hcount: int = 0
    # True when the H count came from a bracket spec and must survive
    # subgraph extraction / reassembly instead of being recomputed.
    h_explicit: bool = False


@dataclass
class MolGraph:
    atoms: list[Atom] = field(default_factory=list)
    bonds: list[tuple[int, int, int]] = field(default_factory=list)
    adjacency: list[list[int]] = field(default_factory=list)
    _order: dict[tuple[int, int], int] = field(default_factory=dict, repr=False)

    def add_atom(self, atom: Atom) -> int:
        self.atoms.append(atom)
        self.adjacency.append([])
        return len(self.atoms) - 1

    def add_bond(self, u: int, v: int, order: int) -> None:
        if u == v:
            raise ValueError(f"self-loop on atom {u}")
        if (u, v) in self._order:
            raise ValueError(f"duplicate bond {u}-{v}")
        if order not in BOND_ORDERS:
            raise ValueError(f"bad bond order {order}")
        self.bonds.append((u, v, order))
        self.adjacency[u].append(v)
        self.adjacency[v].append(u)
        self._order[(u, v)] = order
        self._order[(v, u)] = order

    def bond_order(self, u: int, v: int) -> int | None:
        return self._order.get((u, v))

    def has_bond(self, u: int, v: int) -> bool:
        return (u, v) in self._order

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    def neighbors(self, u: int) -> list[int]:
        return self.adjacency[u]

    def degree(self, u: int) -> int:
        return len(self.adjacency[u])

    def bond_sum_options(self, u: int) -> tuple[int, ...]:
        """Possible valence-unit totals consumed by explicit bonds at u.

        Aromatic bonds count 1 each; an atom inside a delocalized system
        may spend one extra unit on it (arene carbons do, pyrrole-type
        lone-pair donors do not), so both readings are offered.
        """
        total = 0
        any_aromatic = False
        for v in self.adjacency[u]:
            order = self._order[(u, v)]
            if order == AROMATIC:
                total += 1
                any_aromatic = True
            else:
                total += order
        return (total + 1, total) if any_aromatic else (total,)

    def is_connected(self) -> bool:
        if not self.atoms:
            return False
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in self.adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == len(self.atoms)

    def subgraph(self, atom_indices: list[int]) -> tuple["MolGraph", dict[int, int]]:
        """Induced subgraph; returns (graph, old index -> new index map)."""
        index = {old: new for new, old in enumerate(atom_indices)}
        sub = MolGraph()
        for old in atom_indices:
            sub.add_atom(self.atoms[old])
        for u, v, order in self.bonds:
            if u in index and v in index:
                sub.add_bond(index[u], index[v], order)
        return sub, index

    def copy(self) -> "MolGraph":
        dup = MolGraph()
        for atom in self.atoms:
            dup.add_atom(atom)
        for u, v, order in self.bonds:
            dup.add_bond(u, v, order)
        return dup


def implicit_hcount(element: str, charge: int, bond_sums: tuple[int, ...]) -> int:
    """Hydrogens needed to reach the lowest valence fitting some bond sum.

    Aromatic atoms offer two readings of their bond total; the one that
    leaves the fewest hydrogens wins (arene CH keeps one, thiophene S
    keeps none). Bare-written atoms are always neutral, but the charge
    headroom keeps the rule total for callers editing charged graphs.
    """
    allowed = VALENCES.get(element)
    if allowed is None:
        return 0
    cap = abs(charge)
    best: int | None = None
    for bond_sum in bond_sums:
        for valence in allowed:
            if bond_sum <= valence + cap:
                h = valence + cap - bond_sum
                if best is None or h < best:
                    best = h
                break
    if best is None:
        raise ValenceError(
            f"{element} with bond order sum {min(bond_sums)} exceeds "
            f"valence {max(allowed)}"
        )
    return best


def graph_hcount(mol: MolGraph, i: int) -> int:
    atom = mol.atoms[i]
    return implicit_hcount(atom.element, atom.charge, mol.bond_sum_options(i))


def check_valence(mol: MolGraph) -> None:
    """Raise ValenceError unless every atom fits some allowed valence."""
    for i, atom in enumerate(mol.atoms):
        allowed = VALENCES.get(atom.element)
        if allowed is None:
            continue
        cap = max(allowed) + abs(atom.charge)
        if all(s + atom.hcount > cap for s in mol.bond_sum_options(i)):
            load = min(mol.bond_sum_options(i)) + atom.hcount
            raise ValenceError(
                f"atom {i} ({atom.element}{atom.charge:+d}) carries {load} "
                f"valence units, allowed at most {cap}"
            )


def fill_hydrogens(mol: MolGraph) -> None:
    """Recompute implicit H for every atom without an explicit count."""
    for i, atom in enumerate(mol.atoms):
        if atom.h_explicit:
            continue
        h = graph_hcount(mol, i)
        if h != atom.hcount:
            mol.atoms[i] = replace(atom, hcount=h)
