"""Training: extractor pretraining, VAE pretraining, and the joint loop.

Determinism contract: every random draw comes from a generator seeded by
(seed, stream id, counter), with counters persisted in the checkpoint
metadata, so a killed run resumes bit-identically and the joint loop's
reconstruction pass is the exact continuation of VAE pretraining.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .chem import parse_smiles
from .chem.mol import MolGraph
from .errors import AssemblyFailed, CjtvaeError, UnknownLabel
from .junctree import JunctionTree, Vocabulary, decompose, teacher_assembly_steps
from .model import (
    ModelConfig,
    SoftTree,
    TrainItem,
    encode_tree,
    encode_tree_soft,
    extractor_forward,
    featurize,
    init_extractor_params,
    init_vae_params,
    soft_decode,
    vae_loss,
)
from .nn import ParamStore, adam_step, concat, const, mean_of, scale, sub, sum_squared

_STREAM_EXTRACTOR = 21
_STREAM_VAE_SHUFFLE = 11
_STREAM_VAE_NOISE = 13


@dataclass
class TrainConfig:
    seed: int = 0
    prop_dim: int = 1
    hidden: int = 64
    latent: int = 16
    mpn_iters: int = 3
    max_nodes: int = 30
    batch_size: int = 16
    lr_extractor: float = 1e-3
    lr_vae: float = 1e-3
    lr_joint: float = 1e-3
    beta_kl: float = 0.005
    kl_warmup_frac: float = 0.2
    # explicit warm-up length in steps; when None it is derived from the
    # fraction and the pretraining budget
    kl_warmup_steps: int | None = None
    extractor_steps: int = 2000
    vae_epochs: int = 60
    joint_epochs: int = 10
    lam: float = 1.0
    option: str = "I"  # "I" | "II" | "I+II" | "none"
    convergence_tol: float = 1e-4
    convergence_window: int = 10

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.hidden, self.latent, self.prop_dim,
                           self.mpn_iters, self.max_nodes)

    def validate(self) -> None:
        if self.joint_epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch size >= 1")
        if self.lam < 0 or self.prop_dim < 1:
            raise ValueError("lambda must be >= 0 and property dim >= 1")
        if self.option not in ("I", "II", "I+II", "none"):
            raise ValueError(f"unknown option {self.option!r}")


@dataclass
class TrainReport:
    seed: int
    config: dict
    steps: list[dict] = field(default_factory=list)
    extractor_curve: list[float] = field(default_factory=list)
    wall_clock: float = 0.0
    skipped: dict = field(default_factory=dict)


def _rng(seed: int, stream: int, counter: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, stream, counter]))


def _f32(x: float) -> float:
    """Quantize to float32 so convergence decisions survive checkpoint
    round-trips bit-exactly."""
    return float(np.float32(x))


def _converged(history: list[float], window: int, tol: float) -> bool:
    if len(history) <= window:
        return False
    best_old = min(history[:-window])
    current = min(history[-window:])
    if abs(best_old) < 1e-12:
        return current >= best_old - 1e-12
    return (best_old - current) / abs(best_old) < tol


def _get_history(store: ParamStore, key: str) -> list[float]:
    if key not in store.meta:
        return []
    return [float(v) for v in store.meta[key]]


def _set_history(store: ParamStore, key: str, history: list[float]) -> None:
    store.meta[key] = np.asarray(history, dtype=np.float64)


def build_items(smiles: list[str], scores: np.ndarray, vocab: Vocabulary
                ) -> tuple[list[TrainItem], dict]:
    """Featurize, decompose, and precompute assembly steps per molecule.

    Molecules that fail to parse, carry out-of-vocabulary clusters, or
    break ground-truth reassembly are skipped with counters.
    """
    items: list[TrainItem] = []
    skipped = {"parse": 0, "oov": 0, "assembly": 0}
    for idx, text in enumerate(smiles):
        try:
            mol = parse_smiles(text)
            tree = vocab.annotate(decompose(mol))
        except UnknownLabel:
            skipped["oov"] += 1
            continue
        except CjtvaeError:
            skipped["parse"] += 1
            continue
        try:
            steps = [(list(map(featurize, graphs)), true_idx)
                     for _, graphs, true_idx in teacher_assembly_steps(mol, tree)]
        except AssemblyFailed:
            skipped["assembly"] += 1
            continue
        items.append(TrainItem(text, tree, featurize(mol),
                               np.asarray(scores[idx], dtype=np.float64), steps))
    return items, skipped


# ---------------------------------------------------------------------------
# Extractor pretraining


def extractor_batch_loss(store: ParamStore, cfg: ModelConfig,
                         batch: list[TrainItem]):
    losses = []
    for item in batch:
        pred = extractor_forward(store, cfg, item.tree)
        losses.append(sum_squared(sub(pred, const(item.props))))
    return mean_of(losses)


def extractor_dataset_mse(store: ParamStore, cfg: ModelConfig,
                          items: list[TrainItem]) -> float:
    total = 0.0
    for item in items:
        pred = extractor_forward(store, cfg, item.tree)
        total += float(np.sum((pred.data - item.props) ** 2))
    return total / len(items)


def pretrain_extractor(items: list[TrainItem], cfg: TrainConfig,
                       vocab: Vocabulary,
                       report: TrainReport | None = None,
                       store: ParamStore | None = None) -> ParamStore:
    """Minimize mean squared property error until convergence or step cap.

    Convergence: relative improvement of the smoothed loss below the
    configured tolerance across the evaluation window, or an exactly
    zero loss.
    """
    mcfg = cfg.model_config()
    if store is None:
        store = init_extractor_params(mcfg, len(vocab), cfg.seed)
    history = _get_history(store, "ext_history")
    recent: list[float] = []
    while store.get_meta_int("ext_step") < cfg.extractor_steps:
        step = store.get_meta_int("ext_step")
        rng = _rng(cfg.seed, _STREAM_EXTRACTOR, step)
        batch = [items[i] for i in rng.integers(0, len(items), cfg.batch_size)]
        loss = extractor_batch_loss(store, mcfg, batch)
        loss.backward()
        # linear decay to 10%: the late small steps cut the batch-noise
        # floor roughly threefold on the toy corpora
        lr = cfg.lr_extractor * (1.0 - 0.9 * step / cfg.extractor_steps)
        adam_step(store, lr=lr)
        store.check_finite()
        value = _f32(loss.item())
        recent.append(value)
        if report is not None:
            report.steps.append({"stage": "extractor", "step": step,
                                 "mse": value})
        store.set_meta_int("ext_step", step + 1)
        if len(recent) == 10:
            history.append(_f32(np.mean(recent)))
            recent.clear()
            _set_history(store, "ext_history", history)
            if report is not None:
                report.extractor_curve.append(history[-1])
            if history[-1] < 1e-12 or _converged(
                    history, cfg.convergence_window, cfg.convergence_tol):
                break
    return store


# ---------------------------------------------------------------------------
# VAE pretraining and the joint loop (shared step runner)


def _beta_at(cfg: TrainConfig, step: int, steps_per_epoch: int) -> float:
    warmup = cfg.kl_warmup_steps
    if warmup is None:
        warmup = int(cfg.kl_warmup_frac * cfg.vae_epochs * steps_per_epoch)
    return cfg.beta_kl * min(1.0, step / max(1, warmup))


def _epoch_batches(cfg: TrainConfig, n_items: int, epoch: int) -> list[list[int]]:
    order = _rng(cfg.seed, _STREAM_VAE_SHUFFLE, epoch).permutation(n_items)
    return [list(order[i:i + cfg.batch_size])
            for i in range(0, n_items, cfg.batch_size)]


def _run_vae_epochs(store: ParamStore, items: list[TrainItem], cfg: TrainConfig,
                    n_epochs: int, lr: float, lam: float, option: str,
                    extractor: ParamStore | None, vocab: Vocabulary | None,
                    report: TrainReport | None,
                    use_convergence: bool = False,
                    stage: str = "vae") -> None:
    """The one step loop both pretraining and the joint phase run.

    Epoch and step counters persist in checkpoint metadata: the joint
    loop continues exactly where pretraining stopped, and with lam == 0
    the consistency pass is skipped entirely, reducing the joint loop to
    continued pretraining.
    """
    mcfg = cfg.model_config()
    steps_per_epoch = max(1, -(-len(items) // cfg.batch_size))
    decoder_params = [n for n in store.names() if n.startswith("dec/")]
    history = _get_history(store, "vae_history")
    for _ in range(n_epochs):
        epoch = store.get_meta_int("vae_epoch")
        epoch_losses = []
        for batch_ids in _epoch_batches(cfg, len(items), epoch):
            step = store.get_meta_int("vae_step")
            batch = [items[i] for i in batch_ids]
            noise = _rng(cfg.seed, _STREAM_VAE_NOISE, step)
            beta = _beta_at(cfg, step, steps_per_epoch)
            total, parts = vae_loss(store, mcfg, batch, beta, noise)
            total.backward()
            adam_step(store, lr=lr)
            store.check_finite()
            record = {"stage": stage, "step": step, "loss": _f32(total.item()),
                      **{k: _f32(v) for k, v in parts.items()}}
            epoch_losses.append(record["loss"])

            if lam > 0.0 and option != "none":
                consistency = _consistency_loss(store, extractor, mcfg, vocab,
                                                batch, lam, option)
                consistency.backward()
                # only decoder weights move, and only the ones this pass
                # actually reaches (the assembly head is not on it)
                touched = [n for n in decoder_params
                           if store.params[n].grad is not None]
                adam_step(store, lr=lr, names=touched)
                if extractor is not None:
                    extractor.zero_grads()
                store.zero_grads()
                record["consistency"] = _f32(consistency.item())
            if report is not None:
                report.steps.append(record)
            store.set_meta_int("vae_step", step + 1)
        store.set_meta_int("vae_epoch", epoch + 1)
        if use_convergence:
            history.append(_f32(np.mean(epoch_losses)))
            _set_history(store, "vae_history", history)
            if _converged(history, cfg.convergence_window, cfg.convergence_tol):
                return


def _consistency_loss(store: ParamStore, extractor: ParamStore | None,
                      mcfg: ModelConfig, vocab: Vocabulary,
                      batch: list[TrainItem], lam: float, option: str):
    """Soft-decode the batch's posterior means and pull the decoder
    toward property (Option I) or latent (Option II) consistency.

    The latent is detached, so only decoder parameters can move; the
    extractor is read-only here by contract.
    """
    losses = []
    for item in batch:
        z_mean = encode_tree(store, mcfg, item.tree).mean
        zc = concat([const(z_mean.data), const(item.props)])
        soft = soft_decode(store, mcfg, vocab, zc)
        parts = []
        if option in ("I", "I+II"):
            pred = extractor_forward(extractor, mcfg, soft)
            parts.append(sum_squared(sub(pred, const(item.props))))
        if option in ("II", "I+II"):
            re_mean = encode_tree_soft(store, mcfg, soft).mean
            parts.append(sum_squared(sub(re_mean, const(z_mean.data))))
        losses.append(parts[0] if len(parts) == 1 else
                      scale(mean_of(parts), 2.0))
    return scale(mean_of(losses), lam)


def pretrain_vae(items: list[TrainItem], cfg: TrainConfig,
                 vocab: Vocabulary, report: TrainReport | None = None,
                 store: ParamStore | None = None,
                 n_epochs: int | None = None,
                 use_convergence: bool = True) -> ParamStore:
    """Teacher-forced reconstruction with KL warm-up, to convergence.

    Resuming from a checkpoint continues at the recorded epoch with the
    same batch and noise streams, so the trace matches an uninterrupted
    run bit for bit.
    """
    if store is None:
        store = init_vae_params(cfg.model_config(), len(vocab), cfg.seed)
    if n_epochs is None:
        n_epochs = max(0, cfg.vae_epochs - store.get_meta_int("vae_epoch"))
    _run_vae_epochs(store, items, cfg, n_epochs,
                    cfg.lr_vae, lam=0.0, option="none", extractor=None,
                    vocab=vocab, report=report, use_convergence=use_convergence)
    return store


def joint_loop(items: list[TrainItem], extractor: ParamStore,
               vae: ParamStore, cfg: TrainConfig, vocab: Vocabulary,
               report: TrainReport | None = None) -> tuple[ParamStore, TrainReport]:
    """Per minibatch: one reconstruction step on the whole VAE, then one
    decoder-only consistency step per the configured option. Extractor
    parameters never change."""
    if report is None:
        report = TrainReport(cfg.seed, asdict(cfg))
    start = time.perf_counter()
    remaining = max(0, cfg.joint_epochs - vae.get_meta_int("joint_epochs_done"))
    _run_vae_epochs(vae, items, cfg, remaining, cfg.lr_joint,
                    lam=cfg.lam, option=cfg.option, extractor=extractor,
                    vocab=vocab, report=report, stage="joint")
    vae.set_meta_int("joint_epochs_done",
                     vae.get_meta_int("joint_epochs_done") + remaining)
    report.wall_clock += time.perf_counter() - start
    return vae, report
