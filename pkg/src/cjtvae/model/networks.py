"""The five networks: graph encoder, tree encoder, conditional tree
decoder, candidate scorer, and the property extractor.

Conditioning contract: the property vector is concatenated onto the tree
latent for both decoder heads, and onto the graph latent before the
learned projection that scores assembly candidates. Encoders and the
extractor never see it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyCandidates, UnknownLabel
from ..junctree import Cluster, JunctionTree, label_graph, labels_attachable
from ..nn import (
    GRUCell,
    ParamStore,
    Tensor,
    add,
    aggregate,
    matmul_t,
    row_mean,
    add_n,
    bce_with_logits,
    concat,
    const,
    cross_entropy,
    dot,
    kl_standard_normal,
    matvec,
    mul,
    relu,
    reparameterize,
    row,
    scale,
    sigmoid,
    softmax,
    stack_scalars,
    sub,
    tsum,
    vecmat,
)
from ..nn.layers import init_gru
from .features import ATOM_DIM, BOND_DIM, FeaturizedGraph, featurize


@dataclass
class ModelConfig:
    hidden: int = 64
    latent: int = 16
    prop_dim: int = 1
    mpn_iters: int = 3
    max_nodes: int = 30


@dataclass
class LatentCode:
    z_tree: Tensor
    z_graph: Tensor
    tree_mean: Tensor
    tree_log_var: Tensor
    graph_mean: Tensor
    graph_log_var: Tensor


@dataclass
class DecoderTrace:
    loss: Tensor
    topo_loss: Tensor
    label_loss: Tensor
    steps: list[tuple[str, int, int, float]]  # (kind, node, target, value)
    label_total: int = 0
    label_correct: int = 0
    topo_total: int = 0
    topo_correct: int = 0


@dataclass
class SoftTree:
    tree: JunctionTree
    soft_labels: list[Tensor]  # full softmax row per node, root first
    truncated: bool = False


def _xavier(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    bound = float(np.sqrt(6.0 / sum(shape)))
    return rng.uniform(-bound, bound, shape)


def init_vae_params(cfg: ModelConfig, vocab_size: int, seed: int) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    h, lat, d = cfg.hidden, cfg.latent, cfg.prop_dim

    store.register("genc/atom_in", _xavier(rng, (h, ATOM_DIM)))
    store.register("genc/bond_in", _xavier(rng, (h, BOND_DIM)))
    store.register("genc/msg", _xavier(rng, (h, h)))
    store.register("genc/out_atom", _xavier(rng, (h, ATOM_DIM)))
    store.register("genc/out_msg", _xavier(rng, (h, h)))
    store.register("genc/mu", _xavier(rng, (lat, h)))
    store.register("genc/mu_b", np.zeros(lat))
    store.register("genc/logvar", _xavier(rng, (lat, h)))
    store.register("genc/logvar_b", np.zeros(lat))

    store.register("tenc/embed", _xavier(rng, (vocab_size, h)))
    init_gru(store, "tenc/gru", h, h, rng)
    store.register("tenc/node_x", _xavier(rng, (h, h)))
    store.register("tenc/node_m", _xavier(rng, (h, h)))
    store.register("tenc/mu", _xavier(rng, (lat, h)))
    store.register("tenc/mu_b", np.zeros(lat))
    store.register("tenc/logvar", _xavier(rng, (lat, h)))
    store.register("tenc/logvar_b", np.zeros(lat))

    store.register("dec/embed", _xavier(rng, (vocab_size, h)))
    init_gru(store, "dec/gru", h, h, rng)
    store.register("dec/topo_x", _xavier(rng, (h, h)))
    store.register("dec/topo_z", _xavier(rng, (h, lat + d)))
    store.register("dec/topo_m", _xavier(rng, (h, h)))
    store.register("dec/topo_out", _xavier(rng, (h,)))
    store.register("dec/label_z", _xavier(rng, (h, lat + d)))
    store.register("dec/label_m", _xavier(rng, (h, h)))
    store.register("dec/label_out", _xavier(rng, (vocab_size, h)))
    store.register("dec/assm", _xavier(rng, (h, lat + d)))
    return store


def init_extractor_params(cfg: ModelConfig, vocab_size: int, seed: int) -> ParamStore:
    rng = np.random.default_rng(seed)
    store = ParamStore()
    h = cfg.hidden
    store.register("ext/embed", _xavier(rng, (vocab_size, h)))
    init_gru(store, "ext/gru", h, h, rng)
    store.register("ext/node_x", _xavier(rng, (h, h)))
    store.register("ext/node_m", _xavier(rng, (h, h)))
    # zero head: a fresh extractor predicts sigmoid(0) = 0.5 everywhere
    store.register("ext/head", np.zeros((cfg.prop_dim, h)))
    return store


def _pooled(tensors: list[Tensor]) -> Tensor:
    """Set sum in content order: bit-identical under input permutation."""
    if len(tensors) == 1:
        return tensors[0]
    return add_n(sorted(tensors, key=lambda t: t.data.tobytes()))


# ---------------------------------------------------------------------------
# Graph encoder (message passing network)


def graph_hidden(store: ParamStore, cfg: ModelConfig,
                 graph: FeaturizedGraph) -> Tensor:
    """Mean-pooled atom representation after T message iterations.

    All edges advance together as (E, hidden) matrices; the routing
    matrices from featurization pick each edge's incoming set.
    """
    atoms = const(graph.atom_mat)
    if graph.n_edges == 0:
        states = relu(matmul_t(atoms, store["genc/out_atom"]))
        return row_mean(states)

    base = add(matmul_t(const(graph.edge_src_mat), store["genc/atom_in"]),
               matmul_t(const(graph.edge_feat_mat), store["genc/bond_in"]))
    msgs = relu(base)
    for _ in range(cfg.mpn_iters - 1):
        pooled = aggregate(graph.m_excl, msgs)
        msgs = relu(add(base, matmul_t(pooled, store["genc/msg"])))

    states = relu(add(matmul_t(atoms, store["genc/out_atom"]),
                      matmul_t(aggregate(graph.m_at, msgs),
                               store["genc/out_msg"])))
    return row_mean(states)


@dataclass
class GaussianEncoding:
    hidden: Tensor
    mean: Tensor
    log_var: Tensor
    n_messages: int = 0


def encode_graph(store: ParamStore, cfg: ModelConfig,
                 graph: FeaturizedGraph) -> GaussianEncoding:
    h = graph_hidden(store, cfg, graph)
    mean = add(matvec(store["genc/mu"], h), store["genc/mu_b"])
    log_var = add(matvec(store["genc/logvar"], h), store["genc/logvar_b"])
    return GaussianEncoding(h, mean, log_var)


# ---------------------------------------------------------------------------
# Tree encoder and extractor (shared message schedule)


def _soft_node_inputs(store: ParamStore, prefix: str, tree: JunctionTree,
                      soft_labels: list[Tensor] | None) -> list[Tensor]:
    embed = store[f"{prefix}/embed"]
    if soft_labels is not None:
        return [vecmat(q, embed) for q in soft_labels]
    if tree.node_labels is None:
        raise UnknownLabel("tree has no vocabulary ids; annotate it first")
    vocab_size = embed.data.shape[0]
    inputs = []
    for label_id in tree.node_labels:
        if not 0 <= label_id < vocab_size:
            raise UnknownLabel(f"label id {label_id} outside vocabulary")
        onehot = np.zeros(vocab_size)
        onehot[label_id] = 1.0
        inputs.append(vecmat(const(onehot), embed))
    return inputs


def _tree_messages(store: ParamStore, prefix: str, tree: JunctionTree,
                   node_x: list[Tensor]) -> dict[tuple[int, int], Tensor]:
    """Two-phase schedule: leaves to root, then root to leaves."""
    cell = GRUCell(store, f"{prefix}/gru")
    msgs: dict[tuple[int, int], Tensor] = {}
    order = tree.dfs_order()
    for n, p in reversed(order):
        if p < 0:
            continue
        inc = [msgs[(k, n)] for k in tree.neighbors(n) if k != p]
        msgs[(n, p)] = cell(node_x[n], inc)
    for n, p in order:
        if p < 0:
            continue
        inc = [msgs[(k, p)] for k in tree.neighbors(p) if k != n]
        msgs[(p, n)] = cell(node_x[p], inc)
    return msgs


def _tree_states(store: ParamStore, prefix: str, tree: JunctionTree,
                 node_x: list[Tensor],
                 msgs: dict[tuple[int, int], Tensor]) -> list[Tensor]:
    w_x, w_m = store[f"{prefix}/node_x"], store[f"{prefix}/node_m"]
    states = []
    for n in range(tree.n_nodes):
        pre = matvec(w_x, node_x[n])
        inc = [msgs[(k, n)] for k in tree.neighbors(n)]
        if inc:
            pre = add(pre, matvec(w_m, _pooled(inc)))
        states.append(relu(pre))
    return states


def encode_tree(store: ParamStore, cfg: ModelConfig,
                tree: JunctionTree) -> GaussianEncoding:
    return _encode_tree_impl(store, tree, None)


def encode_tree_soft(store: ParamStore, cfg: ModelConfig,
                     soft: "SoftTree") -> GaussianEncoding:
    """Tree encoder consuming soft label rows (the latent-consistency path)."""
    return _encode_tree_impl(store, soft.tree, soft.soft_labels)


def _encode_tree_impl(store: ParamStore, tree: JunctionTree,
                      soft_labels: list[Tensor] | None) -> GaussianEncoding:
    node_x = _soft_node_inputs(store, "tenc", tree, soft_labels)
    msgs = _tree_messages(store, "tenc", tree, node_x)
    states = _tree_states(store, "tenc", tree, node_x, msgs)
    h = states[tree.root]
    mean = add(matvec(store["tenc/mu"], h), store["tenc/mu_b"])
    log_var = add(matvec(store["tenc/logvar"], h), store["tenc/logvar_b"])
    return GaussianEncoding(h, mean, log_var, n_messages=len(msgs))


def extractor_forward(store: ParamStore, cfg: ModelConfig,
                      tree: JunctionTree | SoftTree) -> Tensor:
    """Property prediction in [0,1]^d from a hard or soft tree."""
    if isinstance(tree, SoftTree):
        hard, soft = tree.tree, tree.soft_labels
    else:
        hard, soft = tree, None
    node_x = _soft_node_inputs(store, "ext", hard, soft)
    msgs = _tree_messages(store, "ext", hard, node_x)
    states = _tree_states(store, "ext", hard, node_x, msgs)
    pooled = scale(add_n(states), 1.0 / len(states)) if len(states) > 1 else states[0]
    return sigmoid(matvec(store["ext/head"], pooled))


def sample_latent(store: ParamStore, cfg: ModelConfig, graph: FeaturizedGraph,
                  tree: JunctionTree, rng: np.random.Generator) -> LatentCode:
    """Posterior sample for both levels; tree noise is drawn first."""
    te = encode_tree(store, cfg, tree)
    ge = encode_graph(store, cfg, graph)
    z_t = reparameterize(te.mean, te.log_var, rng)
    z_g = reparameterize(ge.mean, ge.log_var, rng)
    return LatentCode(z_t, z_g, te.mean, te.log_var, ge.mean, ge.log_var)


# ---------------------------------------------------------------------------
# Tree decoder


def _topo_logit(store: ParamStore, x: Tensor, zc: Tensor,
                inbox: list[Tensor]) -> Tensor:
    pre = add(matvec(store["dec/topo_x"], x), matvec(store["dec/topo_z"], zc))
    if inbox:
        pre = add(pre, matvec(store["dec/topo_m"], add_n(inbox)))
    return dot(store["dec/topo_out"], relu(pre))


def _label_logits(store: ParamStore, zc: Tensor, msg: Tensor | None) -> Tensor:
    pre = matvec(store["dec/label_z"], zc)
    if msg is not None:
        pre = add(pre, matvec(store["dec/label_m"], msg))
    return matvec(store["dec/label_out"], relu(pre))


def decode_tree_teacher(store: ParamStore, cfg: ModelConfig,
                        tree: JunctionTree, zc: Tensor) -> DecoderTrace:
    """Score every decision of the ground-truth DFS generation order."""
    if tree.node_labels is None:
        raise UnknownLabel("tree has no vocabulary ids; annotate it first")
    embed = store["dec/embed"]
    cell = GRUCell(store, "dec/gru")
    ids = tree.node_labels
    node_x = [row(embed, ids[n]) for n in range(tree.n_nodes)]

    order = tree.dfs_order()
    children: dict[int, list[int]] = {n: [] for n, _ in order}
    for n, p in order:
        if p >= 0:
            children[p].append(n)

    inbox: dict[int, list[tuple[int, Tensor]]] = {n: [] for n, _ in order}
    topo_losses: list[Tensor] = []
    label_losses: list[Tensor] = []
    steps: list[tuple[str, int, int, float]] = []
    counts = dict(label_total=0, label_correct=0, topo_total=0, topo_correct=0)

    root_logits = _label_logits(store, zc, None)
    label_losses.append(cross_entropy(root_logits, ids[tree.root]))
    counts["label_total"] += 1
    counts["label_correct"] += int(np.argmax(root_logits.data) == ids[tree.root])
    steps.append(("label", tree.root, ids[tree.root],
                  float(np.argmax(root_logits.data))))

    def topo_step(node: int, target: int) -> None:
        logit = _topo_logit(store, node_x[node], zc,
                            [m for _, m in inbox[node]])
        topo_losses.append(bce_with_logits(logit, float(target)))
        counts["topo_total"] += 1
        counts["topo_correct"] += int((logit.data > 0) == bool(target))
        steps.append(("topo", node, target, float(logit.data)))

    def visit(node: int, parent: int) -> None:
        for child in children[node]:
            topo_step(node, 1)
            m_out = cell(node_x[node], [m for _, m in inbox[node]])
            logits = _label_logits(store, zc, m_out)
            label_losses.append(cross_entropy(logits, ids[child]))
            counts["label_total"] += 1
            counts["label_correct"] += int(np.argmax(logits.data) == ids[child])
            steps.append(("label", child, ids[child], float(np.argmax(logits.data))))
            inbox[child].append((node, m_out))
            visit(child, node)
            m_back = cell(node_x[child],
                          [m for src, m in inbox[child] if src != node])
            inbox[node].append((child, m_back))
        topo_step(node, 0)

    visit(tree.root, -1)
    topo_loss = add_n(topo_losses)
    label_loss = add_n(label_losses)
    return DecoderTrace(add(topo_loss, label_loss), topo_loss, label_loss,
                        steps, **counts)


def _generated_cluster(label: str) -> Cluster:
    n = label_graph(label).n_atoms
    kind = "singleton" if n == 1 else ("bond" if n == 2 else "ring")
    return Cluster((), kind, label, ())


def decode_tree_free(store: ParamStore, cfg: ModelConfig, vocab, zc: Tensor,
                     soft: bool = False,
                     restrict_attachable: bool = True) -> SoftTree:
    """Greedy conditional generation: expand while the topology head says
    so (logit > 0), labels by masked argmax. Soft mode records the full
    label distributions for downstream gradients; control flow is
    identical either way.
    """
    embed = store["dec/embed"]
    cell = GRUCell(store, "dec/gru")
    vocab_size = embed.data.shape[0]

    labels: list[int] = []
    parents: list[int] = []
    soft_rows: list[Tensor] = []
    truncated = [False]

    root_logits = _label_logits(store, zc, None)
    soft_rows.append(softmax(root_logits))
    labels.append(int(np.argmax(root_logits.data)))
    parents.append(-1)

    node_x: list[Tensor] = [row(embed, labels[0])]
    inbox: dict[int, list[tuple[int, Tensor]]] = {0: []}

    def allowed_ids(parent_label: str) -> list[int]:
        if not restrict_attachable:
            return list(range(vocab_size))
        return [k for k in range(vocab_size)
                if labels_attachable(parent_label, vocab.label_of(k))]

    def visit(node: int) -> None:
        while True:
            if len(labels) >= cfg.max_nodes:
                truncated[0] = True
                break
            logit = _topo_logit(store, node_x[node], zc,
                                [m for _, m in inbox[node]])
            if float(logit.data) <= 0.0:
                break
            m_out = cell(node_x[node], [m for _, m in inbox[node]])
            logits = _label_logits(store, zc, m_out)
            q = softmax(logits)
            ok = allowed_ids(vocab.label_of(labels[node]))
            if not ok:
                break
            masked = np.full(vocab_size, -np.inf)
            masked[ok] = logits.data[ok]
            child_label = int(np.argmax(masked))
            child = len(labels)
            labels.append(child_label)
            parents.append(node)
            soft_rows.append(q)
            node_x.append(row(embed, child_label))
            inbox[child] = [(node, m_out)]
            visit(child)
            m_back = cell(node_x[child],
                          [m for src, m in inbox[child] if src != node])
            inbox[node].append((child, m_back))

    visit(0)
    nodes = [_generated_cluster(vocab.label_of(k)) for k in labels]
    edges = [(parents[i], i) for i in range(1, len(labels))]
    tree = JunctionTree(nodes, edges, 0)
    tree.node_labels = labels
    return SoftTree(tree, soft_rows, truncated[0])


def soft_decode(store: ParamStore, cfg: ModelConfig, vocab, zc: Tensor,
                restrict_attachable: bool = True) -> SoftTree:
    return decode_tree_free(store, cfg, vocab, zc, soft=True,
                            restrict_attachable=restrict_attachable)


# ---------------------------------------------------------------------------
# Candidate scoring (graph decoder)


def score_candidates(store: ParamStore, cfg: ModelConfig,
                     candidates: list[FeaturizedGraph], zc_graph: Tensor,
                     true_index: int | None = None):
    """Dot-product scores of candidate regions against the projected
    graph latent; returns (scores, argmax index, loss or None)."""
    if not candidates:
        raise EmptyCandidates("no candidates to score")
    z_assm = matvec(store["dec/assm"], zc_graph)
    scores = [dot(graph_hidden(store, cfg, fg), z_assm) for fg in candidates]
    logits = stack_scalars(scores)
    best = int(np.argmax(logits.data))
    loss = None
    if true_index is not None:
        if not 0 <= true_index < len(candidates):
            raise EmptyCandidates(f"true index {true_index} out of range")
        loss = cross_entropy(logits, true_index)
    return logits, best, loss


# ---------------------------------------------------------------------------
# Full objective


@dataclass
class TrainItem:
    """Per-molecule training record with precomputed static structure."""
    smiles: str
    tree: JunctionTree
    graph: FeaturizedGraph
    props: np.ndarray
    # teacher-forced assembly steps with >1 candidate: (features, true idx)
    assembly_steps: list[tuple[list[FeaturizedGraph], int]] = field(
        default_factory=list)


def vae_loss(store: ParamStore, cfg: ModelConfig, items: list[TrainItem],
             beta_kl: float, rng: np.random.Generator):
    """Mean per-molecule loss: beta * KL + decoder cross-entropies +
    assembly scoring loss. Returns (total, components dict)."""
    totals: list[Tensor] = []
    kl_parts: list[Tensor] = []
    topo_parts: list[Tensor] = []
    label_parts: list[Tensor] = []
    assm_parts: list[Tensor] = []
    label_hits = label_n = 0
    for item in items:
        te = encode_tree(store, cfg, item.tree)
        ge = encode_graph(store, cfg, item.graph)
        z_t = reparameterize(te.mean, te.log_var, rng)
        z_g = reparameterize(ge.mean, ge.log_var, rng)
        kl = add(kl_standard_normal(te.mean, te.log_var),
                 kl_standard_normal(ge.mean, ge.log_var))
        c = const(item.props)
        trace = decode_tree_teacher(store, cfg, item.tree, concat([z_t, c]))
        zc_graph = concat([z_g, c])
        assm_losses = []
        for cand_graphs, true_idx in item.assembly_steps:
            _, _, step_loss = score_candidates(store, cfg, cand_graphs,
                                               zc_graph, true_idx)
            assm_losses.append(step_loss)
        assm = add_n(assm_losses) if assm_losses else const(0.0)
        totals.append(add(add(scale(kl, beta_kl), trace.loss), assm))
        kl_parts.append(kl)
        topo_parts.append(trace.topo_loss)
        label_parts.append(trace.label_loss)
        assm_parts.append(assm)
        label_hits += trace.label_correct
        label_n += trace.label_total

    n = len(items)
    total = scale(add_n(totals), 1.0 / n)
    components = {
        "kl": float(add_n(kl_parts).data) / n,
        "topo": float(add_n(topo_parts).data) / n,
        "label": float(add_n(label_parts).data) / n,
        "assm": float(add_n(assm_parts).data) / n,
        "label_acc": label_hits / max(label_n, 1),
    }
    return total, components
