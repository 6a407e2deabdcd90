"""Junction tree decomposition, cluster vocabulary, and graph assembly.

A molecule decomposes into clusters (SSSR rings, with rings sharing more
than two atoms merged; every bridge bond; plus an intersection node for
any atom shared by three or more clusters). Intersecting clusters are
joined and a maximum spanning tree over intersection sizes gives the
tree. Assembly reverses this: cluster labels are fused back together one
tree edge at a time, scored by a caller-supplied function.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .chem.mol import AROMATIC, SINGLE, Atom, MolGraph, VALENCES, fill_hydrogens
from .chem.rings import find_bridges, sssr
from .chem.smiles import parse_smiles, write_smiles_with_order
from .errors import (
    AssemblyFailed,
    DisconnectedInput,
    EmptyCorpus,
    NoValidAttachment,
    UnknownLabel,
)


@dataclass(frozen=True)
class Cluster:
    atom_indices: tuple[int, ...]
    kind: str  # "ring" | "bond" | "singleton"
    label: str
    # original molecule atom index for each label-local position
    label_atom_map: tuple[int, ...]


@dataclass
class JunctionTree:
    nodes: list[Cluster]
    edges: list[tuple[int, int]]
    root: int
    node_labels: list[int] | None = None  # vocabulary ids, set by annotate()

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def neighbors(self, i: int) -> list[int]:
        out = []
        for a, b in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def dfs_order(self) -> list[tuple[int, int]]:
        """(node, parent) pairs in DFS preorder from root; parent of root is -1.

        Children are visited in ascending node id.
        """
        order = []
        stack = [(self.root, -1)]
        while stack:
            u, p = stack.pop()
            order.append((u, p))
            for v in reversed([w for w in self.neighbors(u) if w != p]):
                stack.append((v, u))
        return order


def cluster_subgraph(mol: MolGraph, atoms: tuple[int, ...]) -> MolGraph:
    """Induced subgraph prepared for use as a standalone cluster label.

    Atoms keep their aromatic flag only when at least two of their
    aromatic bonds stay inside the cluster; demoted atoms drop explicit
    hydrogen counts and aromatic bonds to them become single.
    """
    sub, _ = mol.subgraph(list(atoms))
    keep = []
    for i in range(sub.n_atoms):
        n_arom = sum(1 for v in sub.adjacency[i]
                     if sub.bond_order(i, v) == AROMATIC)
        keep.append(sub.atoms[i].aromatic and n_arom >= 2)
    out = MolGraph()
    for i, atom in enumerate(sub.atoms):
        if keep[i]:
            out.add_atom(atom)
        else:
            out.add_atom(Atom(atom.element, atom.charge, False, 0, False))
    for u, v, order in sub.bonds:
        if order == AROMATIC and not (keep[u] and keep[v]):
            order = SINGLE
        out.add_bond(u, v, order)
    fill_hydrogens(out)
    return out


def _make_cluster(mol: MolGraph, atoms: tuple[int, ...], kind: str) -> Cluster:
    sub = cluster_subgraph(mol, atoms)
    label, order = write_smiles_with_order(sub)
    return Cluster(atoms, kind, label, tuple(atoms[k] for k in order))


def decompose(mol: MolGraph) -> JunctionTree:
    """Cluster the molecule and span the intersection graph with a tree."""
    if not mol.is_connected():
        raise DisconnectedInput("decomposition requires a connected molecule")
    if mol.n_atoms == 1:
        return JunctionTree([_make_cluster(mol, (0,), "singleton")], [], 0)

    bridges = find_bridges(mol)
    atom_sets: list[tuple[int, ...]] = [
        tuple(sorted((u, v))) for u, v, _ in mol.bonds
        if frozenset((u, v)) in bridges
    ]
    atom_sets.sort()
    n_bonds = len(atom_sets)

    rings = [set(r) for r in sssr(mol)]
    merged = True
    while merged:
        merged = False
        for i in range(len(rings)):
            for j in range(i + 1, len(rings)):
                if rings[i] and rings[j] and len(rings[i] & rings[j]) > 2:
                    rings[i] |= rings[j]
                    rings[j] = set()
                    merged = True
    ring_sets = sorted(tuple(sorted(r)) for r in rings if r)
    atom_sets.extend(ring_sets)

    clusters = [
        _make_cluster(mol, atoms, "bond" if k < n_bonds else "ring")
        for k, atoms in enumerate(atom_sets)
    ]

    member: dict[int, list[int]] = {}
    for ci, cl in enumerate(clusters):
        for a in cl.atom_indices:
            member.setdefault(a, []).append(ci)
    hubs = sorted(a for a, cs in member.items() if len(cs) >= 3)
    hub_node: dict[int, int] = {}
    for a in hubs:
        hub_node[a] = len(clusters)
        clusters.append(_make_cluster(mol, (a,), "singleton"))

    # Candidate edges: hub atoms route through their intersection node;
    # every other intersecting pair connects directly.
    weighted: dict[tuple[int, int], int] = {}
    for a in hubs:
        for ci in member[a]:
            weighted[(ci, hub_node[a])] = 1
    cluster_ids = range(len(atom_sets))
    for i in cluster_ids:
        for j in cluster_ids:
            if j <= i:
                continue
            inter = set(clusters[i].atom_indices) & set(clusters[j].atom_indices)
            if not inter:
                continue
            if len(inter) == 1 and next(iter(inter)) in hub_node:
                continue
            weighted[(i, j)] = len(inter)

    edges = _max_spanning_tree(len(clusters), weighted)
    if len(edges) != len(clusters) - 1:
        raise DisconnectedInput("cluster graph failed to span; input not connected")

    root = min(ci for ci, cl in enumerate(clusters) if 0 in cl.atom_indices)
    return JunctionTree(clusters, edges, root)


def _max_spanning_tree(n: int, weighted: dict[tuple[int, int], int]) -> list[tuple[int, int]]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    for (i, j), w in sorted(weighted.items(), key=lambda kv: (-kv[1], kv[0])):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
    return sorted(edges)


class Vocabulary:
    """Ordered set of canonical cluster labels with dense integer ids."""

    def __init__(self, labels: Iterable[str]):
        self.labels = list(labels)
        self.index = {label: i for i, label in enumerate(self.labels)}
        if len(self.index) != len(self.labels):
            raise ValueError("duplicate labels in vocabulary")

    def __len__(self) -> int:
        return len(self.labels)

    def id_of(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise UnknownLabel(f"cluster label {label!r} not in vocabulary") from None

    def label_of(self, idx: int) -> str:
        return self.labels[idx]

    def annotate(self, tree: JunctionTree) -> JunctionTree:
        tree.node_labels = [self.id_of(c.label) for c in tree.nodes]
        return tree

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.labels) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
        return cls(lines)


def build_vocabulary(corpus: Iterable[MolGraph]) -> Vocabulary:
    """Sorted deduplicated cluster labels over the corpus; order-independent."""
    labels: set[str] = set()
    count = 0
    for mol in corpus:
        count += 1
        for cluster in decompose(mol).nodes:
            labels.add(cluster.label)
    if count == 0:
        raise EmptyCorpus("no molecules to build a vocabulary from")
    return Vocabulary(sorted(labels))


# ---------------------------------------------------------------------------
# Assembly

_label_cache: dict[str, MolGraph] = {}


def label_graph(label: str) -> MolGraph:
    """Parsed cluster label, cached; treat as read-only."""
    graph = _label_cache.get(label)
    if graph is None:
        graph = parse_smiles(label)
        _label_cache[label] = graph
    return graph


_attach_cache: dict[tuple[str, str], bool] = {}


def labels_attachable(parent_label: str, child_label: str) -> bool:
    """Whether the child cluster can fuse onto a lone parent cluster."""
    key = (parent_label, child_label)
    cached = _attach_cache.get(key)
    if cached is not None:
        return cached
    pair = JunctionTree(
        [Cluster((), "bond", parent_label, ()),
         Cluster((), "bond", child_label, ())],
        [(0, 1)], 0)
    state = PartialAssembly()
    root_att = enumerate_attachments(pair, 0, state)
    state = apply_attachment(state, pair, 0, root_att[0])
    try:
        enumerate_attachments(pair, 1, state)
        ok = True
    except NoValidAttachment:
        ok = False
    _attach_cache[key] = ok
    return ok


@dataclass
class PartialAssembly:
    """A growing molecule plus the map from realized tree nodes into it."""
    graph: MolGraph = field(default_factory=MolGraph)
    # (tree node, label-local atom position) -> assembled atom index
    atom_of: dict[tuple[int, int], int] = field(default_factory=dict)
    realized: list[int] = field(default_factory=list)


@dataclass(frozen=True)
class Attachment:
    """One way to fuse a cluster onto the partial molecule."""
    graph: MolGraph          # local fused region, for scoring and dedup
    key: str                 # canonical form of `graph`
    shared: tuple[tuple[int, int], ...]  # (label-local atom, assembled atom)


def _atoms_compatible(base: Atom, incoming: Atom) -> bool:
    if base.element != incoming.element or base.charge != incoming.charge:
        return False
    if base.h_explicit and incoming.h_explicit and base.hcount != incoming.hcount:
        return False
    return True


def _merge_atom(base: Atom, incoming: Atom) -> Atom:
    aromatic = base.aromatic or incoming.aromatic
    if base.h_explicit:
        h, hx = base.hcount, True
    elif incoming.h_explicit:
        h, hx = incoming.hcount, True
    else:
        h, hx = 0, False
    return Atom(base.element, base.charge, aromatic, h, hx)


def _orders_compatible(a: int, b: int) -> bool:
    if a == b:
        return True
    return {a, b} == {SINGLE, AROMATIC}


def _valence_ok(element: str, charge: int, bond_sums: tuple[int, ...],
                hcount: int) -> bool:
    allowed = VALENCES.get(element)
    if allowed is None:
        return True
    cap = max(allowed) + abs(charge)
    return any(s + hcount <= cap for s in bond_sums)


def _apply_attachment(state: PartialAssembly, node: int, cluster_graph: MolGraph,
                      shared: dict[int, int]) -> MolGraph | None:
    """Merged global graph, or None if any atom ends up over valence."""
    merged = state.graph.copy()
    local_to_global: dict[int, int] = {}
    for ci in range(cluster_graph.n_atoms):
        if ci in shared:
            gi = shared[ci]
            if not _atoms_compatible(merged.atoms[gi], cluster_graph.atoms[ci]):
                return None
            merged.atoms[gi] = _merge_atom(merged.atoms[gi], cluster_graph.atoms[ci])
            local_to_global[ci] = gi
        else:
            local_to_global[ci] = merged.add_atom(cluster_graph.atoms[ci])
    for u, v, order in cluster_graph.bonds:
        gu, gv = local_to_global[u], local_to_global[v]
        existing = merged.bond_order(gu, gv)
        if existing is None:
            merged.add_bond(gu, gv, order)
        else:
            if not _orders_compatible(existing, order):
                return None
            if AROMATIC in (existing, order):
                merged._order[(gu, gv)] = AROMATIC
                merged._order[(gv, gu)] = AROMATIC
                merged.bonds = [
                    (a, b, AROMATIC) if {a, b} == {gu, gv} else (a, b, o)
                    for a, b, o in merged.bonds
                ]
    for ci, gi in local_to_global.items():
        atom = merged.atoms[gi]
        h = atom.hcount if atom.h_explicit else 0
        if not _valence_ok(atom.element, atom.charge,
                           merged.bond_sum_options(gi), h):
            return None
    return merged


def _local_region(merged: MolGraph, parent_atoms: list[int], new_atoms: list[int],
                  shared_atoms: Iterable[int]) -> tuple[MolGraph, str]:
    """Fused region and its identity key.

    The region covers the parent cluster, the new atoms, and the parent
    atoms' already-realized neighbors, so fusion sites that differ only
    through earlier attachments stay distinguishable. The key annotates
    the region's canonical form with the canonical positions of the
    fusion atoms: isomorphic regions fused at distinguishable sites stay
    distinct candidates, while site-automorphic fusings collapse.
    """
    context = set(parent_atoms) | set(new_atoms)
    for p in parent_atoms:
        context.update(merged.adjacency[p])
    region_atoms = sorted(context)
    local = {a: k for k, a in enumerate(region_atoms)}
    region, _ = merged.subgraph(region_atoms)
    fill_hydrogens(region)
    label, order = write_smiles_with_order(region)
    canon_pos = {atom: k for k, atom in enumerate(order)}
    marks = sorted(canon_pos[local[a]] for a in set(shared_atoms))
    return region, label + "|" + ",".join(str(m) for m in marks)


def enumerate_attachments(tree: JunctionTree, node: int,
                          state: PartialAssembly) -> list[Attachment]:
    """Valence-respecting, pairwise non-isomorphic fusings of `node`.

    The node's realized tree neighbor (its parent during assembly)
    anchors the fusion: candidates share one atom, or one bond for
    ring-ring fusion. Root nodes (nothing realized) get exactly one
    candidate, the cluster itself.
    """
    cluster = tree.nodes[node]
    cluster_graph = label_graph(cluster.label)
    realized_neighbors = [p for p in tree.neighbors(node) if p in state.realized]

    if not realized_neighbors:
        if tree.neighbors(node) and state.realized:
            raise NoValidAttachment(
                f"node {node} shares no atoms with the realized portion"
            )
        if tree.neighbors(node) and node != tree.root:
            raise NoValidAttachment(f"parent of node {node} is not realized")
        merged = _apply_attachment(state, node, cluster_graph, {})
        if merged is None:
            raise NoValidAttachment(f"cluster {cluster.label!r} is not valid alone")
        new_atoms = list(range(state.graph.n_atoms, merged.n_atoms))
        region, key = _local_region(merged, [], new_atoms, ())
        return [Attachment(region, key, ())]

    parent = realized_neighbors[0]
    parent_size = label_graph(tree.nodes[parent].label).n_atoms
    parent_atoms = [state.atom_of[(parent, k)] for k in range(parent_size)]

    maps: list[dict[int, int]] = []
    for ci in range(cluster_graph.n_atoms):
        for pa in sorted(parent_atoms):
            maps.append({ci: pa})
    # two-atom (shared bond) fusion only happens between rings: a bond
    # cluster always meets its neighbors at exactly one atom
    if cluster_graph.n_atoms >= 3 and len(parent_atoms) >= 3:
        for u, v, order in cluster_graph.bonds:
            for pa in sorted(parent_atoms):
                for pb in sorted(state.graph.adjacency[pa]):
                    if pb not in parent_atoms or pb < pa:
                        continue
                    existing = state.graph.bond_order(pa, pb)
                    if not _orders_compatible(existing, order):
                        continue
                    maps.append({u: pa, v: pb})
                    maps.append({u: pb, v: pa})

    seen: dict[str, Attachment] = {}
    for shared in maps:
        ok = all(
            _atoms_compatible(state.graph.atoms[gi], cluster_graph.atoms[ci])
            for ci, gi in shared.items()
        )
        if not ok:
            continue
        merged = _apply_attachment(state, node, cluster_graph, shared)
        if merged is None:
            continue
        new_atoms = list(range(state.graph.n_atoms, merged.n_atoms))
        region, key = _local_region(merged, parent_atoms, new_atoms,
                                    shared.values())
        if key not in seen:
            seen[key] = Attachment(region, key,
                                   tuple(sorted(shared.items())))
    if not seen:
        raise NoValidAttachment(
            f"cluster {cluster.label!r} cannot fuse onto its parent"
        )
    return [seen[k] for k in sorted(seen)]


def apply_attachment(state: PartialAssembly, tree: JunctionTree, node: int,
                     attachment: Attachment) -> PartialAssembly:
    """New assembly state with `node` realized via `attachment`."""
    cluster_graph = label_graph(tree.nodes[node].label)
    shared = dict(attachment.shared)
    merged = _apply_attachment(state, node, cluster_graph, shared)
    if merged is None:
        raise NoValidAttachment("attachment no longer valid")
    atom_of = dict(state.atom_of)
    next_new = state.graph.n_atoms
    for ci in range(cluster_graph.n_atoms):
        if ci in shared:
            atom_of[(node, ci)] = shared[ci]
        else:
            atom_of[(node, ci)] = next_new
            next_new += 1
    return PartialAssembly(merged, atom_of, state.realized + [node])


Scorer = Callable[[int, list[Attachment]], list[float]]


def assemble(tree: JunctionTree, scorer: Scorer,
             max_backtracks: int | None = None) -> MolGraph:
    """Depth-first greedy assembly with bounded backtracking.

    At each node the highest-scoring candidate is tried first (canonical
    key breaks ties); a dead end retries the failing node's remaining
    candidates. Retries are budgeted at one per tree node overall, so
    decoding stays linear; exhaustion raises AssemblyFailed.
    """
    if max_backtracks is None:
        max_backtracks = tree.n_nodes
    budget = [max_backtracks]

    order = tree.dfs_order()
    children: dict[int, list[int]] = {n: [] for n, _ in order}
    for n, p in order:
        if p >= 0:
            children[p].append(n)

    root_att = enumerate_attachments(tree, tree.root, PartialAssembly())
    state0 = apply_attachment(PartialAssembly(), tree, tree.root, root_att[0])

    def place(node: int, state: PartialAssembly) -> PartialAssembly | None:
        current = state
        for child in children[node]:
            try:
                cands = enumerate_attachments(tree, child, current)
            except NoValidAttachment:
                return None
            scores = scorer(child, cands)
            ranked = sorted(range(len(cands)),
                            key=lambda k: (-scores[k], cands[k].key))
            placed = None
            for pick, k in enumerate(ranked):
                if pick > 0:
                    if budget[0] <= 0:
                        raise AssemblyFailed("backtrack budget exhausted")
                    budget[0] -= 1
                trial = apply_attachment(current, tree, child, cands[k])
                placed = place(child, trial)
                if placed is not None:
                    break
            if placed is None:
                return None
            current = placed
        return current

    final = place(tree.root, state0)
    if final is None:
        raise AssemblyFailed("all assembly branches dead-ended")
    out = final.graph.copy()
    fill_hydrogens(out)
    return out


def oracle_scorer(mol: MolGraph, tree: JunctionTree) -> Scorer:
    """Scores 1.0 for the candidate matching the source molecule's region.

    Built from the decomposition's recorded atom maps, so it is
    independent of the assembly path being checked.
    """
    truth = true_attachment_keys(mol, tree)

    def score(node: int, cands: list[Attachment]) -> list[float]:
        want = truth.get(node)
        return [1.0 if c.key == want else 0.0 for c in cands]

    return score


def _true_walk(tree: JunctionTree):
    """Replay the ground-truth assembly using the decomposition's atom
    maps, yielding (node, parent, state-before, true Attachment)."""
    state = PartialAssembly()
    for node, parent in tree.dfs_order():
        cluster = tree.nodes[node]
        cluster_graph = label_graph(cluster.label)
        if parent < 0:
            shared: dict[int, int] = {}
        else:
            parent_cluster = tree.nodes[parent]
            orig_to_assembled = {
                orig: state.atom_of[(parent, k)]
                for k, orig in enumerate(parent_cluster.label_atom_map)
            }
            shared = {
                ci: orig_to_assembled[orig]
                for ci, orig in enumerate(cluster.label_atom_map)
                if orig in orig_to_assembled
            }
        merged = _apply_attachment(state, node, cluster_graph, shared)
        if merged is None:
            raise AssemblyFailed(
                f"ground-truth attachment invalid at node {node} "
                f"({cluster.label!r})"
            )
        if parent < 0:
            parent_atoms: list[int] = []
        else:
            parent_size = label_graph(tree.nodes[parent].label).n_atoms
            parent_atoms = [state.atom_of[(parent, k)] for k in range(parent_size)]
        new_atoms = list(range(state.graph.n_atoms, merged.n_atoms))
        region, key = _local_region(merged, parent_atoms, new_atoms,
                                    shared.values())
        att = Attachment(region, key, tuple(sorted(shared.items())))
        yield node, parent, state, att
        state = apply_attachment(state, tree, node, att)


def true_attachment_keys(mol: MolGraph, tree: JunctionTree) -> dict[int, str]:
    """Canonical local-region key of the ground-truth fusion at each node."""
    return {node: att.key for node, _, _, att in _true_walk(tree)}


def teacher_assembly_steps(mol: MolGraph, tree: JunctionTree
                           ) -> list[tuple[int, list[MolGraph], int]]:
    """Ground-truth assembly walk for training the candidate scorer.

    Returns (node, candidate region graphs, true candidate index) for
    every step offering more than one candidate; single-candidate steps
    carry exactly zero loss and are skipped. The walk always follows the
    true attachment regardless of candidate order.
    """
    steps: list[tuple[int, list[MolGraph], int]] = []
    for node, parent, state, att in _true_walk(tree):
        if parent < 0:
            continue
        cands = enumerate_attachments(tree, node, state)
        if len(cands) <= 1:
            continue
        keys = [c.key for c in cands]
        steps.append((node, [c.graph for c in cands], keys.index(att.key)))
    return steps
