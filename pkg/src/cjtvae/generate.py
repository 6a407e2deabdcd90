"""Conditional generation: encode an input, decode under a target
property vector, and assemble the resulting tree into a molecule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem import write_smiles
from .chem.mol import MolGraph
from .errors import AssemblyFailed, NoValidAttachment
from .junctree import Attachment, JunctionTree, Vocabulary, assemble, decompose
from .model import (
    ModelConfig,
    decode_tree_free,
    encode_graph,
    encode_tree,
    featurize,
    score_candidates,
)
from .nn import ParamStore, concat, const


@dataclass
class GenerationResult:
    smiles: str | None
    status: str              # "ok" | "assembly_failed" | "truncated"
    n_tree_nodes: int


def posterior_means(store: ParamStore, cfg: ModelConfig, mol: MolGraph,
                    tree: JunctionTree) -> tuple[np.ndarray, np.ndarray]:
    """(tree latent mean, graph latent mean) for a molecule."""
    te = encode_tree(store, cfg, tree)
    ge = encode_graph(store, cfg, featurize(mol))
    return te.mean.data.copy(), ge.mean.data.copy()


def model_scorer(store: ParamStore, cfg: ModelConfig, zc_graph):
    """Assembly scorer backed by the candidate-scoring network."""
    def score(node: int, cands: list[Attachment]) -> list[float]:
        feats = [featurize(c.graph) for c in cands]
        logits, _, _ = score_candidates(store, cfg, feats, zc_graph)
        return [float(v) for v in logits.data]
    return score


def generate_one(store: ParamStore, cfg: ModelConfig, vocab: Vocabulary,
                 z_tree: np.ndarray, z_graph: np.ndarray,
                 target: np.ndarray) -> GenerationResult:
    """Decode (z, c) greedily and assemble; failures are reported, not
    raised."""
    c = np.asarray(target, dtype=np.float64)
    soft = decode_tree_free(store, cfg, vocab, concat([const(z_tree), const(c)]))
    zc_graph = concat([const(z_graph), const(c)])
    scorer = model_scorer(store, cfg, zc_graph)
    try:
        mol = assemble(soft.tree, scorer)
    except (AssemblyFailed, NoValidAttachment):
        return GenerationResult(None, "assembly_failed", soft.tree.n_nodes)
    status = "truncated" if soft.truncated else "ok"
    return GenerationResult(write_smiles(mol), status, soft.tree.n_nodes)


def encode_and_generate(store: ParamStore, cfg: ModelConfig, vocab: Vocabulary,
                        mol: MolGraph, target: np.ndarray) -> GenerationResult:
    tree = vocab.annotate(decompose(mol))
    z_t, z_g = posterior_means(store, cfg, mol, tree)
    return generate_one(store, cfg, vocab, z_t, z_g, target)
