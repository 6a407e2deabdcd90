"""SMILES parsing and canonical writing.

Grammar covers the organic subset (B C N O P S F Cl Br I, aromatic
b c n o s p), bracket atoms with charge and explicit hydrogen count,
branches, bond symbols - = # :, and ring closures (single digit or %nn).
Stereo markers, isotopes and fragment dots are rejected.

Aromaticity is taken from the input: lowercase atoms are aromatic, and an
unmarked bond between two aromatic atoms is aromatic exactly when it lies
on a cycle (so the biphenyl link comes out single without ring perception).
"""

from __future__ import annotations

import re
import sys

from ..errors import SmilesSyntaxError, UnsupportedFeature
from .rings import find_bridges
from .mol import (
    AROMATIC,
    AROMATIC_ELEMENTS,
    DOUBLE,
    ORGANIC_SUBSET,
    SINGLE,
    TRIPLE,
    VALENCES,
    Atom,
    MolGraph,
    check_valence,
    graph_hcount,
    implicit_hcount,
)

_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC}
_ORDER_SYMBOLS = {DOUBLE: "=", TRIPLE: "#"}

_TWO_LETTER = ("Cl", "Br")
_AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")

_BRACKET_RE = re.compile(
    r"^(?P<isotope>\d+)?"
    r"(?P<element>[A-Z][a-z]?|[a-z])"
    r"(?P<stereo>@{1,2})?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>\+{1,3}|-{1,3}|\+\d+|-\d+)?"
    r"(?P<cls>:\d+)?$"
)


def _parse_bracket(body: str, pos: int) -> Atom:
    match = _BRACKET_RE.match(body)
    if match is None:
        raise SmilesSyntaxError(f"malformed bracket atom [{body}] at position {pos}")
    if match.group("isotope"):
        raise UnsupportedFeature(f"isotope spec in [{body}]")
    if match.group("stereo"):
        raise UnsupportedFeature(f"stereo marker in [{body}]")
    if match.group("cls"):
        raise UnsupportedFeature(f"atom class in [{body}]")

    symbol = match.group("element")
    aromatic = symbol.islower()
    element = symbol.capitalize()
    if element == "H":
        raise UnsupportedFeature("explicit hydrogen atom nodes")
    if element not in VALENCES:
        raise SmilesSyntaxError(f"unknown element {symbol!r} in [{body}]")
    if aromatic and element not in AROMATIC_ELEMENTS:
        raise SmilesSyntaxError(f"element {element} cannot be aromatic")

    hspec = match.group("hcount")
    hcount = 0
    if hspec:
        hcount = 1 if hspec == "H" else int(hspec[1:])

    cspec = match.group("charge")
    charge = 0
    if cspec:
        sign = 1 if cspec[0] == "+" else -1
        digits = cspec.lstrip("+-")
        charge = sign * (int(digits) if digits else len(cspec))

    return Atom(element, charge=charge, aromatic=aromatic, hcount=hcount, h_explicit=True)


def parse_smiles(text: str) -> MolGraph:
    """Parse a SMILES string into a validated MolGraph."""
    s = text.strip()
    if not s:
        raise SmilesSyntaxError("empty SMILES")
    if not s.isascii():
        raise SmilesSyntaxError("SMILES must be ASCII")

    mol = MolGraph()
    # (u, v, explicit order or None); orders resolved after the scan
    raw_bonds: list[tuple[int, int, int | None]] = []
    anchor: int | None = None
    pending: int | None = None
    branch_stack: list[int] = []
    ring_open: dict[int, tuple[int, int | None]] = {}

    def close_or_open_ring(num: int, pos: int) -> None:
        nonlocal pending
        if anchor is None:
            raise SmilesSyntaxError(f"ring closure {num} before any atom (pos {pos})")
        if num in ring_open:
            other, order_there = ring_open.pop(num)
            order = pending if pending is not None else order_there
            if pending is not None and order_there is not None and pending != order_there:
                raise SmilesSyntaxError(f"conflicting bond orders on ring closure {num}")
            if other == anchor:
                raise SmilesSyntaxError(f"ring closure {num} bonds an atom to itself")
            if any(u == other and v == anchor or u == anchor and v == other
                   for u, v, _ in raw_bonds):
                raise SmilesSyntaxError(f"ring closure {num} duplicates an existing bond")
            raw_bonds.append((other, anchor, order))
        else:
            ring_open[num] = (anchor, pending)
        pending = None

    i = 0
    while i < len(s):
        ch = s[i]
        if ch == "[":
            end = s.find("]", i)
            if end < 0:
                raise SmilesSyntaxError(f"unclosed bracket at position {i}")
            atom = _parse_bracket(s[i + 1:end], i)
            idx = mol.add_atom(atom)
            if anchor is not None:
                raw_bonds.append((anchor, idx, pending))
            elif pending is not None:
                raise SmilesSyntaxError("bond symbol before any atom")
            pending = None
            anchor = idx
            i = end + 1
        elif ch.isalpha():
            sym = s[i:i + 2] if s[i:i + 2] in _TWO_LETTER else ch
            if sym in ORGANIC_SUBSET or sym in _AROMATIC_ORGANIC:
                atom = Atom(sym.capitalize(), aromatic=sym.islower())
                idx = mol.add_atom(atom)
                if anchor is not None:
                    raw_bonds.append((anchor, idx, pending))
                elif pending is not None:
                    raise SmilesSyntaxError("bond symbol before any atom")
                pending = None
                anchor = idx
                i += len(sym)
            else:
                raise SmilesSyntaxError(f"unknown symbol {ch!r} at position {i}")
        elif ch in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesSyntaxError(f"two bond symbols in a row at position {i}")
            pending = _BOND_SYMBOLS[ch]
            i += 1
        elif ch == "(":
            if anchor is None:
                raise SmilesSyntaxError("branch before any atom")
            branch_stack.append(anchor)
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError(f"unbalanced ')' at position {i}")
            if pending is not None:
                raise SmilesSyntaxError(f"dangling bond symbol before ')' at position {i}")
            anchor = branch_stack.pop()
            i += 1
        elif ch.isdigit():
            close_or_open_ring(int(ch), i)
            i += 1
        elif ch == "%":
            if i + 2 >= len(s) or not s[i + 1:i + 3].isdigit():
                raise SmilesSyntaxError(f"bad %nn ring closure at position {i}")
            close_or_open_ring(int(s[i + 1:i + 3]), i)
            i += 3
        elif ch == ".":
            raise UnsupportedFeature("multi-fragment SMILES (dot bond)")
        elif ch in "/\\@":
            raise UnsupportedFeature(f"stereo marker {ch!r}")
        else:
            raise SmilesSyntaxError(f"unknown symbol {ch!r} at position {i}")

    if branch_stack:
        raise SmilesSyntaxError("unbalanced '(': branch never closed")
    if ring_open:
        raise SmilesSyntaxError(f"unclosed ring closures: {sorted(ring_open)}")
    if pending is not None:
        raise SmilesSyntaxError("dangling bond symbol at end of input")

    # Resolve implicit bond orders: aromatic only between two aromatic
    # atoms on a cycle, which needs the skeleton first.
    skeleton = MolGraph()
    for atom in mol.atoms:
        skeleton.add_atom(atom)
    for u, v, _ in raw_bonds:
        try:
            skeleton.add_bond(u, v, SINGLE)
        except ValueError as exc:
            raise SmilesSyntaxError(str(exc)) from exc
    bridges = find_bridges(skeleton)

    for u, v, order in raw_bonds:
        if order is None:
            both_aromatic = mol.atoms[u].aromatic and mol.atoms[v].aromatic
            in_cycle = frozenset((u, v)) not in bridges
            order = AROMATIC if both_aromatic and in_cycle else SINGLE
        mol.add_bond(u, v, order)

    for idx, atom in enumerate(mol.atoms):
        if atom.aromatic:
            n_arom = sum(1 for v in mol.adjacency[idx]
                         if mol.bond_order(idx, v) == AROMATIC)
            if n_arom < 2:
                raise SmilesSyntaxError(
                    f"aromatic atom {idx} is not inside an aromatic ring"
                )

    for idx, atom in enumerate(mol.atoms):
        if not atom.h_explicit:
            h = graph_hcount(mol, idx)
            if h:
                mol.atoms[idx] = Atom(atom.element, atom.charge, atom.aromatic, h)
    check_valence(mol)
    return mol


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Total atom order from iterative neighborhood refinement.

    Remaining ties after convergence are split one atom at a time by
    input index; for symmetry-equivalent atoms the choice cannot change
    the written string.
    """
    n = mol.n_atoms
    invariants: list[tuple] = [
        (a.element, mol.degree(i), a.charge, a.hcount, a.aromatic)
        for i, a in enumerate(mol.atoms)
    ]
    ranks = _rank(invariants)
    while True:
        for _ in range(n):
            refined = [
                (ranks[i],
                 tuple(sorted((mol.bond_order(i, v), ranks[v]) for v in mol.adjacency[i])))
                for i in range(n)
            ]
            new_ranks = _rank(refined)
            if new_ranks == ranks:
                break
            ranks = new_ranks
        if len(set(ranks)) == n:
            return ranks
        # Break the lowest-ranked tie class on input index and re-refine.
        tied = min((r for r in ranks if ranks.count(r) > 1))
        first = ranks.index(tied)
        ranks = _rank([(ranks[i], 0 if i == first else 1) for i in range(n)])


def _rank(keys: list) -> list[int]:
    order = sorted(set(keys))
    position = {key: pos for pos, key in enumerate(order)}
    return [position[key] for key in keys]


def _atom_token(mol: MolGraph, idx: int) -> str:
    atom = mol.atoms[idx]
    symbol = atom.element.lower() if atom.aromatic else atom.element
    plain_h = implicit_hcount(atom.element, 0, mol.bond_sum_options(idx)) \
        if atom.charge == 0 else -1
    if atom.charge == 0 and atom.hcount == plain_h:
        return symbol
    h = "" if atom.hcount == 0 else ("H" if atom.hcount == 1 else f"H{atom.hcount}")
    if atom.charge == 0:
        q = ""
    elif atom.charge == 1:
        q = "+"
    elif atom.charge == -1:
        q = "-"
    else:
        q = f"{atom.charge:+d}"
    return f"[{symbol}{h}{q}]"


def _bond_token(mol: MolGraph, u: int, v: int) -> str:
    order = mol.bond_order(u, v)
    if order in _ORDER_SYMBOLS:
        return _ORDER_SYMBOLS[order]
    if order == SINGLE and mol.atoms[u].aromatic and mol.atoms[v].aromatic:
        return "-"
    return ""


def write_smiles(mol: MolGraph) -> str:
    """Deterministic canonical SMILES; parse(write(m)) is isomorphic to m."""
    return write_smiles_with_order(mol)[0]


def write_smiles_with_order(mol: MolGraph) -> tuple[str, list[int]]:
    """Canonical SMILES plus the atom indices in emission order.

    order[k] is the input index of the atom that a parse of the string
    will create as atom k; it links label-local and source numbering.
    """
    if mol.n_atoms == 0:
        raise ValueError("empty molecule")
    ranks = canonical_ranks(mol)
    by_rank = sorted(range(mol.n_atoms), key=lambda i: ranks[i])
    start = by_rank[0]

    # DFS spanning tree in rank order; leftover edges become ring closures.
    parent: dict[int, int] = {}
    children: dict[int, list[int]] = {i: [] for i in range(mol.n_atoms)}
    ring_edges: list[tuple[int, int]] = []
    seen = {start}
    seen_edges: set[frozenset[int]] = set()
    frames: list[tuple[int, list[int]]] = [
        (start, sorted(mol.adjacency[start], key=lambda w: ranks[w]))
    ]
    while frames:
        u, todo = frames[-1]
        while todo:
            v = todo.pop(0)
            edge = frozenset((u, v))
            if edge in seen_edges:
                continue
            seen_edges.add(edge)
            if v in seen:
                ring_edges.append((u, v))
            else:
                seen.add(v)
                parent[v] = u
                children[u].append(v)
                frames.append((v, sorted(mol.adjacency[v], key=lambda w: ranks[w])))
                break
        else:
            frames.pop()

    ring_id: dict[frozenset[int], int] = {}
    ring_at: dict[int, list[int]] = {i: [] for i in range(mol.n_atoms)}
    for u, v in ring_edges:
        ring_at[u].append(v)
        ring_at[v].append(u)
    for u in ring_at:
        ring_at[u].sort(key=lambda w: ranks[w])

    out: list[str] = []
    emitted: list[int] = []
    open_digits: dict[frozenset[int], int] = {}
    in_use: set[int] = set()

    def next_digit() -> int:
        d = 1
        while d in in_use:
            d += 1
        return d

    def emit(u: int) -> None:
        if u in parent:
            out.append(_bond_token(mol, parent[u], u))
        out.append(_atom_token(mol, u))
        emitted.append(u)
        for v in ring_at[u]:
            edge = frozenset((u, v))
            if edge in open_digits:
                d = open_digits.pop(edge)
                in_use.discard(d)
            else:
                d = next_digit()
                in_use.add(d)
                open_digits[edge] = d
                out.append(_bond_token(mol, u, v))
            out.append(str(d) if d < 10 else f"%{d:02d}")
        kids = children[u]
        for k, v in enumerate(kids):
            last = k == len(kids) - 1
            if not last:
                out.append("(")
            emit(v)
            if not last:
                out.append(")")

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 4 * mol.n_atoms + 100))
    try:
        emit(start)
    finally:
        sys.setrecursionlimit(old_limit)
    return "".join(out), emitted


def canonical_form(mol: MolGraph) -> str:
    """Canonical string used as the graph-isomorphism key in tests."""
    return write_smiles(mol)
