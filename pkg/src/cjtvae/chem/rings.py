"""Ring perception: bridges, smallest set of smallest rings.

SSSR candidates come from per-vertex BFS trees (Horton's construction);
a greedy scan by (length, atom tuple) keeps cycles that are linearly
independent over GF(2) in edge space until the cycle rank is reached.
Everything is deterministic for a fixed atom numbering.
"""

from __future__ import annotations

from .mol import MolGraph


def find_bridges(mol: MolGraph) -> set[frozenset[int]]:
    """Edges not on any cycle, by iterative DFS low-links."""
    n = mol.n_atoms
    disc = [0] * n
    low = [0] * n
    visited = [False] * n
    bridges: set[frozenset[int]] = set()
    timer = 1
    for root in range(n):
        if visited[root]:
            continue
        stack: list[tuple[int, int, int]] = [(root, -1, 0)]
        while stack:
            u, parent, child_pos = stack.pop()
            if child_pos == 0:
                visited[u] = True
                disc[u] = low[u] = timer
                timer += 1
            neighbors = mol.adjacency[u]
            advanced = False
            while child_pos < len(neighbors):
                v = neighbors[child_pos]
                child_pos += 1
                if v == parent:
                    continue
                if visited[v]:
                    low[u] = min(low[u], disc[v])
                else:
                    stack.append((u, parent, child_pos))
                    stack.append((v, u, 0))
                    advanced = True
                    break
            if not advanced and parent >= 0:
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    bridges.add(frozenset((parent, u)))
    return bridges


def ring_bonds(mol: MolGraph) -> set[frozenset[int]]:
    """Bonds lying on at least one cycle (the non-bridges)."""
    bridges = find_bridges(mol)
    return {frozenset((u, v)) for u, v, _ in mol.bonds
            if frozenset((u, v)) not in bridges}


def sssr(mol: MolGraph) -> list[list[int]]:
    """Ring atom lists, each sorted, the list itself sorted by (size, atoms)."""
    n = mol.n_atoms
    edge_ids = {}
    for u, v, _ in mol.bonds:
        edge_ids[frozenset((u, v))] = len(edge_ids)
    rank_target = len(mol.bonds) - n + 1
    if rank_target <= 0:
        return []

    candidates: list[tuple[int, tuple[int, ...], int]] = []
    seen_cycles: set[tuple[int, ...]] = set()
    for root in range(n):
        parent = {root: -1}
        order = [root]
        qi = 0
        while qi < len(order):
            u = order[qi]
            qi += 1
            for v in sorted(mol.adjacency[u]):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
        for u, v, _ in mol.bonds:
            if parent.get(v) == u or parent.get(u) == v:
                continue
            path_u = _path_to_root(parent, u)
            path_v = _path_to_root(parent, v)
            shared = set(path_u) & set(path_v)
            meet = next(x for x in path_u if x in shared)
            cyc_atoms = path_u[:path_u.index(meet) + 1] + \
                path_v[:path_v.index(meet)][::-1]
            key = tuple(sorted(cyc_atoms))
            if len(set(key)) != len(cyc_atoms) or key in seen_cycles:
                continue
            seen_cycles.add(key)
            mask = 0
            ring = cyc_atoms + [cyc_atoms[0]]
            ok = True
            for a, b in zip(ring, ring[1:]):
                eid = edge_ids.get(frozenset((a, b)))
                if eid is None:
                    ok = False
                    break
                mask |= 1 << eid
            if ok:
                candidates.append((len(cyc_atoms), key, mask))

    candidates.sort(key=lambda c: (c[0], c[1]))
    basis: dict[int, int] = {}
    chosen: list[tuple[int, ...]] = []
    for _, key, mask in candidates:
        reduced = mask
        while reduced:
            lead = reduced.bit_length() - 1
            if lead not in basis:
                basis[lead] = reduced
                chosen.append(key)
                break
            reduced ^= basis[lead]
        if len(chosen) == rank_target:
            break
    return [list(c) for c in sorted(chosen, key=lambda c: (len(c), c))]


def _path_to_root(parent: dict[int, int], u: int) -> list[int]:
    path = [u]
    while parent[path[-1]] != -1:
        path.append(parent[path[-1]])
    return path


def largest_ring_size(mol: MolGraph) -> int:
    rings = sssr(mol)
    return max((len(r) for r in rings), default=0)
