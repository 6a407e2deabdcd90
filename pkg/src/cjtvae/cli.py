"""Operator toolchain: preprocess, vocab, train, generate, evaluate,
grad-check.

All commands read a JSON run config; every output is deterministic for a
fixed (config, seed, input files) triple. Wall-clock timings go to a
separate file so logs and checkpoints stay byte-comparable across runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chem import (
    ORACLES,
    morgan_fingerprint,
    normalize_scores,
    parse_smiles,
    tanimoto,
    write_smiles,
)
from .chem.io import read_corpus, read_score_tsv, write_score_tsv
from .errors import CheckpointError, CjtvaeError, NumericFault
from .generate import generate_one, posterior_means
from .junctree import Vocabulary, build_vocabulary, decompose
from .model import ModelConfig, init_vae_params, vae_loss
from .nn import ParamStore, grad_check
from .training import (
    TrainConfig,
    TrainReport,
    build_items,
    joint_loop,
    pretrain_extractor,
    pretrain_vae,
)

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass
class RunConfig:
    corpus: str = "corpus.txt"
    scores: str = "scores.tsv"
    vocabulary: str = "vocab.txt"
    checkpoint_dir: str = "checkpoints"
    output_dir: str = "out"
    properties: list[str] = field(default_factory=lambda: ["synthetic"])
    fingerprint_radius: int = 2
    fingerprint_nbits: int = 2048
    test_fraction: float = 0.1
    train: TrainConfig = field(default_factory=TrainConfig)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        fp = raw.pop("fingerprint", {})
        train_raw = raw.pop("train", {})
        cfg = cls(**raw)
        cfg.fingerprint_radius = int(fp.get("radius", cfg.fingerprint_radius))
        cfg.fingerprint_nbits = int(fp.get("nbits", cfg.fingerprint_nbits))
        cfg.train = TrainConfig(**train_raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for name in self.properties:
            if name not in ORACLES:
                raise ValueError(f"unknown property oracle {name!r}; "
                                 f"known: {sorted(ORACLES)}")
        if not self.properties:
            raise ValueError("at least one property required")
        self.train.prop_dim = len(self.properties)
        self.train.validate()
        if self.fingerprint_nbits & (self.fingerprint_nbits - 1):
            raise ValueError("fingerprint nbits must be a power of two")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in [0, 1)")


def _workers() -> int:
    raw = os.environ.get("CJTVAE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _vocab_hash(path: str) -> bytes:
    return hashlib.sha256(Path(path).read_bytes()).digest()


def _model_config_from_meta(store: ParamStore) -> ModelConfig:
    return ModelConfig(
        hidden=store.get_meta_int("hidden"),
        latent=store.get_meta_int("latent"),
        prop_dim=store.get_meta_int("prop_dim"),
        mpn_iters=store.get_meta_int("mpn_iters"),
        max_nodes=store.get_meta_int("max_nodes", 30),
    )


def _stamp_meta(store: ParamStore, cfg: RunConfig) -> None:
    store.set_meta_bytes("vocab_hash", _vocab_hash(cfg.vocabulary))
    tc = cfg.train
    store.set_meta_int("prop_dim", tc.prop_dim)
    store.set_meta_int("hidden", tc.hidden)
    store.set_meta_int("latent", tc.latent)
    store.set_meta_int("mpn_iters", tc.mpn_iters)
    store.set_meta_int("max_nodes", tc.max_nodes)


def _check_meta(store: ParamStore, cfg: RunConfig) -> str | None:
    want = _vocab_hash(cfg.vocabulary)
    have = store.get_meta_bytes("vocab_hash")
    if have != want:
        return "checkpoint was trained against a different vocabulary file"
    if store.get_meta_int("prop_dim") != len(cfg.properties):
        return (f"checkpoint property dimension "
                f"{store.get_meta_int('prop_dim')} != configured "
                f"{len(cfg.properties)}")
    return None


# ---------------------------------------------------------------------------
# Commands


def cmd_preprocess(cfg: RunConfig, out_path: str | None) -> int:
    lines = read_corpus(cfg.corpus)
    parsed = []
    skipped = 0
    for text in lines:
        try:
            parsed.append((text, parse_smiles(text)))
        except CjtvaeError:
            skipped += 1
    if not parsed:
        print("error: no usable molecules in corpus", file=sys.stderr)
        return EXIT_CONFIG

    oracles = [ORACLES[name] for name in cfg.properties]
    workers = _workers()

    def score_one(entry):
        _, mol = entry
        return [oracle(mol) for oracle in oracles]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(score_one, parsed))
    else:
        raw = [score_one(e) for e in parsed]
    raw_mat = np.asarray(raw, dtype=np.float64)

    degenerate = []
    columns = []
    for k, name in enumerate(cfg.properties):
        normalized = normalize_scores(raw_mat[:, k])
        columns.append(normalized.values)
        if normalized.degenerate:
            degenerate.append(name)
    mat = np.stack(columns, axis=1)

    rows = [(text, list(mat[i])) for i, (text, _) in enumerate(parsed)]
    out = out_path or cfg.scores
    write_score_tsv(out, rows, cfg.properties)
    print(f"wrote {len(rows)} rows to {out}; skipped {skipped} unparseable")
    if degenerate:
        print(f"warning: degenerate score range for {', '.join(degenerate)}; "
              f"column forced to zero")
    return 0


def cmd_vocab(cfg: RunConfig, out_path: str | None) -> int:
    lines = read_corpus(cfg.corpus)
    mols = []
    skipped = 0
    for text in lines:
        try:
            mols.append(parse_smiles(text))
        except CjtvaeError:
            skipped += 1
    if not mols:
        print("error: no usable molecules in corpus", file=sys.stderr)
        return EXIT_CONFIG
    vocab = build_vocabulary(mols)
    out = out_path or cfg.vocabulary
    vocab.save(out)
    print(f"wrote {len(vocab)} cluster labels to {out}; "
          f"skipped {skipped} unparseable")
    return 0


def _hash_split(smiles: list[str], test_fraction: float
                ) -> tuple[list[int], list[int]]:
    """Stable 90/10-style split keyed by canonical form, not file order."""
    train_ids, test_ids = [], []
    threshold = int(test_fraction * 1000)
    for i, text in enumerate(smiles):
        try:
            canon = write_smiles(parse_smiles(text))
        except CjtvaeError:
            train_ids.append(i)
            continue
        digest = hashlib.sha256(canon.encode()).digest()
        bucket = int.from_bytes(digest[:4], "big") % 1000
        (test_ids if bucket < threshold else train_ids).append(i)
    return train_ids, test_ids


def cmd_train(cfg: RunConfig, stage: str, checkpoint: str | None,
              seed: int | None) -> int:
    if seed is not None:
        cfg.train.seed = seed
    for path, what in ((cfg.vocabulary, "vocabulary"), (cfg.scores, "scores")):
        if not Path(path).exists():
            print(f"error: {what} file {path} not found (run the "
                  f"vocab/preprocess commands first)", file=sys.stderr)
            return EXIT_CONFIG
    vocab = Vocabulary.load(cfg.vocabulary)
    names, smiles, scores = read_score_tsv(cfg.scores)
    if len(names) != len(cfg.properties):
        print(f"error: score file has {len(names)} properties, config has "
              f"{len(cfg.properties)}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(cfg.output_dir)
    ckpt_dir = Path(cfg.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    train_ids, test_ids = _hash_split(smiles, cfg.test_fraction)
    (out_dir / "train_split.txt").write_text(
        "\n".join(smiles[i] for i in train_ids) + "\n", encoding="utf-8")
    (out_dir / "test_split.txt").write_text(
        "\n".join(smiles[i] for i in test_ids) + ("\n" if test_ids else ""),
        encoding="utf-8")

    items, skipped = build_items([smiles[i] for i in train_ids],
                                 scores[train_ids], vocab)
    if not items:
        print("error: no trainable molecules after skips", file=sys.stderr)
        return EXIT_CONFIG
    print(f"training on {len(items)} molecules "
          f"(skipped {sum(skipped.values())}: {skipped}); "
          f"{len(test_ids)} held out")

    report = TrainReport(cfg.train.seed, json.loads(json.dumps(
        cfg.train.__dict__)))
    report.skipped = skipped
    t_start = time.perf_counter()
    resume = None
    if checkpoint:
        resume = ParamStore.load(checkpoint)
        problem = _check_meta(resume, cfg)
        if problem:
            print(f"error: {problem}", file=sys.stderr)
            return EXIT_CONFIG

    try:
        if stage in ("extractor", "all"):
            store = resume if stage == "extractor" and resume else None
            ext = pretrain_extractor(items, cfg.train, vocab, report, store)
            _stamp_meta(ext, cfg)
            ext.save(ckpt_dir / "extractor.ckpt")
            print(f"extractor checkpoint: {ckpt_dir / 'extractor.ckpt'}")
        if stage in ("vae", "all"):
            store = resume if stage == "vae" and resume else None
            vae = pretrain_vae(items, cfg.train, vocab, report, store)
            _stamp_meta(vae, cfg)
            vae.save(ckpt_dir / "vae.ckpt")
            print(f"vae checkpoint: {ckpt_dir / 'vae.ckpt'}")
        if stage in ("joint", "all"):
            ext_path = ckpt_dir / "extractor.ckpt"
            vae_path = ckpt_dir / "vae.ckpt"
            if not ext_path.exists() or not vae_path.exists():
                print("error: joint stage needs extractor.ckpt and vae.ckpt",
                      file=sys.stderr)
                return EXIT_CONFIG
            ext = ParamStore.load(ext_path)
            vae = (resume if stage == "joint" and resume
                   else ParamStore.load(vae_path))
            for store_ in (ext, vae):
                problem = _check_meta(store_, cfg)
                if problem:
                    print(f"error: {problem}", file=sys.stderr)
                    return EXIT_CONFIG
            vae, report = joint_loop(items, ext, vae, cfg.train, vocab, report)
            _stamp_meta(vae, cfg)
            vae.save(ckpt_dir / "joint.ckpt")
            print(f"joint checkpoint: {ckpt_dir / 'joint.ckpt'}")
    except NumericFault as exc:
        print(f"numeric fault: {exc}; last completed checkpoints retained",
              file=sys.stderr)
        return EXIT_NUMERIC

    log_path = out_dir / "train_log.jsonl"
    with log_path.open("w", encoding="utf-8") as fh:
        for record in report.steps:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    # wall clock stays out of the deterministic log
    (out_dir / "timing.txt").write_text(
        f"wall_clock_seconds={time.perf_counter() - t_start:.3f}\n",
        encoding="utf-8")
    print(f"log: {log_path} ({len(report.steps)} records)")
    return 0


def cmd_generate(cfg: RunConfig, checkpoint: str, input_path: str,
                 target_c: str, out_path: str | None) -> int:
    try:
        store = ParamStore.load(checkpoint)
    except (CheckpointError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problem = _check_meta(store, cfg)
    if problem:
        print(f"error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    mcfg = _model_config_from_meta(store)
    vocab = Vocabulary.load(cfg.vocabulary)

    try:
        target = np.array([float(x) for x in target_c.split(",")])
    except ValueError:
        print(f"error: bad --target-c {target_c!r}", file=sys.stderr)
        return EXIT_CONFIG
    if target.shape[0] != mcfg.prop_dim:
        print(f"error: --target-c has {target.shape[0]} entries, model "
              f"expects {mcfg.prop_dim}", file=sys.stderr)
        return EXIT_CONFIG
    if np.any(target < 0) or np.any(target > 1):
        print("error: --target-c entries must lie in [0, 1]", file=sys.stderr)
        return EXIT_CONFIG

    oracles = [ORACLES[name] for name in cfg.properties]
    rows = []
    counts = {"ok": 0, "assembly_failed": 0, "truncated": 0,
              "parse_failed": 0, "oov": 0}
    for text in read_corpus(input_path):
        record = {"input": text, "output": "", "similarity": "",
                  "status": "", }
        for name in cfg.properties:
            record[f"{name}_before"] = ""
            record[f"{name}_after"] = ""
            record[f"{name}_improvement"] = ""
        try:
            mol = parse_smiles(text)
        except CjtvaeError:
            record["status"] = "parse_failed"
            counts["parse_failed"] += 1
            rows.append(record)
            continue
        try:
            tree = vocab.annotate(decompose(mol))
        except CjtvaeError:
            record["status"] = "oov"
            counts["oov"] += 1
            rows.append(record)
            continue
        z_t, z_g = posterior_means(store, mcfg, mol, tree)
        result = generate_one(store, mcfg, vocab, z_t, z_g, target)
        record["status"] = result.status
        counts[result.status] += 1
        for k, name in enumerate(cfg.properties):
            record[f"{name}_before"] = f"{oracles[k](mol):.6f}"
        if result.smiles is not None:
            out_mol = parse_smiles(result.smiles)
            fp_in = morgan_fingerprint(mol, cfg.fingerprint_radius,
                                       cfg.fingerprint_nbits)
            fp_out = morgan_fingerprint(out_mol, cfg.fingerprint_radius,
                                        cfg.fingerprint_nbits)
            record["output"] = result.smiles
            record["similarity"] = f"{tanimoto(fp_in, fp_out):.6f}"
            for k, name in enumerate(cfg.properties):
                before = oracles[k](mol)
                after = oracles[k](out_mol)
                record[f"{name}_after"] = f"{after:.6f}"
                record[f"{name}_improvement"] = f"{after - before:.6f}"
        rows.append(record)

    out = Path(out_path) if out_path else Path(cfg.output_dir) / "generated.tsv"
    out.parent.mkdir(parents=True, exist_ok=True)
    header = list(rows[0].keys()) if rows else ["input"]
    with out.open("w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for record in rows:
            fh.write("\t".join(str(record[h]) for h in header) + "\n")
    print(f"wrote {len(rows)} records to {out}; status counts: {counts}")
    return 0 if rows else EXIT_CONFIG


def cmd_evaluate(cfg: RunConfig, records_path: str, out_path: str | None) -> int:
    lines = Path(records_path).read_text(encoding="utf-8").splitlines()
    if len(lines) < 2:
        print("error: no records to evaluate", file=sys.stderr)
        return EXIT_CONFIG
    header = lines[0].split("\t")
    at = {name: k for k, name in enumerate(header)}
    rows = [line.split("\t") for line in lines[1:] if line.strip()]
    usable = [r for r in rows if r[at["similarity"]] != ""]
    if not usable:
        print("error: no successful generations to evaluate", file=sys.stderr)
        return EXIT_CONFIG

    sims = np.array([float(r[at["similarity"]]) for r in usable])
    print(f"records: {len(rows)} total, {len(usable)} decoded")
    out_dir = Path(out_path) if out_path else Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in cfg.properties:
        key = f"{name}_improvement"
        if key not in at:
            continue
        imps = np.array([float(r[at[key]]) for r in usable])
        print(f"CJTVAE, {sims.mean():.3f}, {imps.mean():.3f}  "
              f"# property={name} (mean similarity, mean improvement)")
        scatter = out_dir / f"scatter_{name}.csv"
        with scatter.open("w", encoding="utf-8") as fh:
            fh.write("similarity,improvement\n")
            for s, i in zip(sims, imps):
                fh.write(f"{s:.6f},{i:.6f}\n")
        print(f"scatter data: {scatter}")
    return 0


def cmd_grad_check(cfg: RunConfig, n_probes: int, seed: int | None) -> int:
    lines = read_corpus(cfg.corpus)
    mols = []
    for text in lines:
        try:
            mols.append((text, parse_smiles(text)))
        except CjtvaeError:
            continue
        if len(mols) == 3:
            break
    if not mols:
        print("error: no parseable molecules for the probe batch",
              file=sys.stderr)
        return EXIT_CONFIG
    vocab = build_vocabulary(m for _, m in mols)
    tc = cfg.train
    probe_seed = tc.seed if seed is None else seed
    items, _ = build_items([t for t, _ in mols],
                           np.full((len(mols), tc.prop_dim), 0.5), vocab)
    mcfg = ModelConfig(hidden=12, latent=6, prop_dim=tc.prop_dim,
                       mpn_iters=2, max_nodes=tc.max_nodes)
    store = init_vae_params(mcfg, len(vocab), probe_seed)

    def loss_fn():
        return vae_loss(store, mcfg, items, 0.1,
                        np.random.default_rng(probe_seed))[0]

    err = grad_check(loss_fn, store, n_probes=n_probes, seed=probe_seed)
    print(f"max relative gradient error over {n_probes} probes: {err:.3e}")
    if err > 1e-4:
        print("FAIL: exceeds 1e-4", file=sys.stderr)
        return 1
    print("PASS: within 1e-4")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="cjtvae",
        description="controllable junction-tree VAE toolchain")
    parser.add_argument("command",
                        choices=["preprocess", "vocab", "train", "generate",
                                 "evaluate", "grad-check"])
    parser.add_argument("--config", required=True, help="run config JSON")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default=None)
    parser.add_argument("--stage", default="all",
                        choices=["all", "extractor", "vae", "joint"])
    parser.add_argument("--checkpoint", default=None)
    parser.add_argument("--target-c", default="1.0",
                        help="comma-separated property targets in [0,1]")
    parser.add_argument("--input", default=None,
                        help="input SMILES file (generate) or records "
                             "TSV (evaluate)")
    parser.add_argument("--probes", type=int, default=50)
    args = parser.parse_args(argv)

    try:
        cfg = RunConfig.from_file(args.config)
    except (OSError, ValueError, TypeError, KeyError) as exc:
        print(f"error: bad config {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "preprocess":
        return cmd_preprocess(cfg, args.out)
    if args.command == "vocab":
        return cmd_vocab(cfg, args.out)
    if args.command == "train":
        return cmd_train(cfg, args.stage, args.checkpoint, args.seed)
    if args.command == "generate":
        if not args.checkpoint:
            print("error: generate needs --checkpoint", file=sys.stderr)
            return EXIT_CONFIG
        input_path = args.input or cfg.corpus
        return cmd_generate(cfg, args.checkpoint, input_path,
                            args.target_c, args.out)
    if args.command == "evaluate":
        records = args.input or str(Path(cfg.output_dir) / "generated.tsv")
        return cmd_evaluate(cfg, records, args.out)
    if args.command == "grad-check":
        return cmd_grad_check(cfg, args.probes, args.seed)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
