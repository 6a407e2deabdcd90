"""Networks over chem/junctree structures."""

from .features import ATOM_DIM, BOND_DIM, FeaturizedGraph, featurize
from .networks import (
    DecoderTrace,
    GaussianEncoding,
    LatentCode,
    ModelConfig,
    SoftTree,
    TrainItem,
    decode_tree_free,
    decode_tree_teacher,
    encode_graph,
    encode_tree,
    encode_tree_soft,
    extractor_forward,
    graph_hidden,
    init_extractor_params,
    init_vae_params,
    sample_latent,
    score_candidates,
    soft_decode,
    vae_loss,
)

__all__ = [
    "ATOM_DIM", "BOND_DIM", "FeaturizedGraph", "featurize",
    "DecoderTrace", "GaussianEncoding", "LatentCode", "ModelConfig",
    "SoftTree", "TrainItem", "decode_tree_free", "decode_tree_teacher",
    "encode_graph", "encode_tree", "encode_tree_soft", "extractor_forward", "graph_hidden",
    "init_extractor_params", "init_vae_params", "sample_latent",
    "score_candidates", "soft_decode", "vae_loss",
]
