"""Acceptance criteria, one test per criterion, each printing a verdict.

Run with -s to see the PASS lines and timings.
"""

import json
import time
from math import comb
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from cjtvae.chem import (
    normalize_scores,
    parse_smiles,
    synthetic_property,
    write_smiles,
)
from cjtvae.cli import main as cli_main
from cjtvae.errors import (
    AssemblyFailed,
    CjtvaeError,
    SmilesSyntaxError,
    UnsupportedFeature,
    ValenceError,
)
from cjtvae.generate import encode_and_generate
from cjtvae.junctree import (
    assemble,
    build_vocabulary,
    decompose,
    oracle_scorer,
    teacher_assembly_steps,
)
from cjtvae.model import (
    ModelConfig,
    SoftTree,
    decode_tree_teacher,
    encode_graph,
    encode_tree,
    extractor_forward,
    featurize,
    init_extractor_params,
    init_vae_params,
    score_candidates,
    vae_loss,
)
from cjtvae.nn import ParamStore, concat, const, grad_check, kl_standard_normal, sum_squared, add
from cjtvae.training import (
    TrainConfig,
    TrainReport,
    build_items,
    extractor_dataset_mse,
    joint_loop,
    pretrain_extractor,
    pretrain_vae,
)

from corpusgen import size_varied_corpus, toy_corpus


def verdict(number: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {number}: {detail}"


@pytest.fixture(scope="module")
def corpus1000():
    return toy_corpus(1000, seed=7)


def test_criterion_01_parser_round_trip(corpus1000):
    start = time.perf_counter()
    ok = 0
    for smiles in corpus1000:
        mol = parse_smiles(smiles)
        text = write_smiles(mol)
        if write_smiles(parse_smiles(text)) == text:
            ok += 1
    elapsed = time.perf_counter() - start

    rejections = [
        ("C.C", UnsupportedFeature),
        ("F/C=C/F", UnsupportedFeature),
        ("[13CH4]", UnsupportedFeature),
        ("C[C@@H](N)O", UnsupportedFeature),
        ("C(", SmilesSyntaxError),
        ("C1CC", SmilesSyntaxError),
        ("CXC", SmilesSyntaxError),
        ("C(C)(C)(C)(C)C", ValenceError),
    ]
    classes_ok = True
    for text, expected in rejections:
        try:
            parse_smiles(text)
            classes_ok = False
        except expected:
            pass
        except CjtvaeError:
            classes_ok = False

    verdict(1, ok == len(corpus1000) and classes_ok and elapsed < 10.0,
            f"round-trip {ok}/{len(corpus1000)}, error classes "
            f"{'ok' if classes_ok else 'WRONG'}, {elapsed:.1f}s (< 10s)")


def test_criterion_02_junction_tree_coverage_and_reassembly(corpus1000):
    start = time.perf_counter()
    cover = tree_ok = rebuilt = 0
    failures = []
    for smiles in corpus1000:
        mol = parse_smiles(smiles)
        tree = decompose(mol)
        atoms = set()
        bonds = set()
        for cluster in tree.nodes:
            atoms.update(cluster.atom_indices)
            members = set(cluster.atom_indices)
            for u, v, _ in mol.bonds:
                if u in members and v in members:
                    bonds.add(frozenset((u, v)))
        if atoms == set(range(mol.n_atoms)) and \
                bonds == {frozenset((u, v)) for u, v, _ in mol.bonds}:
            cover += 1
        if len(tree.edges) == tree.n_nodes - 1:
            tree_ok += 1
        try:
            out = assemble(tree, oracle_scorer(mol, tree))
            if write_smiles(out) == write_smiles(mol):
                rebuilt += 1
            else:
                failures.append((smiles, "nonisomorphic: symmetric attachment"))
        except AssemblyFailed as exc:
            failures.append((smiles, f"assembly failed: {exc}"))
    elapsed = time.perf_counter() - start
    for smiles, why in failures[:5]:
        print(f"  reassembly failure [{why}]: {smiles}")
    n = len(corpus1000)
    verdict(2, cover == n and tree_ok == n and rebuilt >= 0.95 * n
            and elapsed < 30.0,
            f"coverage {cover}/{n}, tree {tree_ok}/{n}, reassembly "
            f"{rebuilt}/{n} (>= 95%), {len(failures)} failures logged, "
            f"{elapsed:.1f}s (< 30s)")


def test_criterion_03_gradient_correctness():
    start = time.perf_counter()
    smiles = ["CCO", "Cc1ccccc1", "CC(=O)O"]
    mols = [parse_smiles(s) for s in smiles]
    vocab = build_vocabulary(mols)
    cfg = ModelConfig(hidden=12, latent=5, prop_dim=1, mpn_iters=2,
                      max_nodes=12)
    store = init_vae_params(cfg, len(vocab), seed=3)
    ext = init_extractor_params(cfg, len(vocab), seed=4)
    rng = np.random.default_rng(6)
    ext.params["ext/head"].data = rng.standard_normal(
        ext.params["ext/head"].data.shape) * 0.5
    items, _ = build_items(smiles, np.full((3, 1), 0.4), vocab)
    trees = [it.tree for it in items]
    graphs = [it.graph for it in items]
    zc = const(np.full(cfg.latent + cfg.prop_dim, 0.3))
    cand_step = next((it.assembly_steps[0] for it in items
                      if it.assembly_steps), None)

    def graph_encoder_loss():
        enc = encode_graph(store, cfg, graphs[1])
        return add(sum_squared(enc.mean), sum_squared(enc.log_var))

    def tree_encoder_loss():
        enc = encode_tree(store, cfg, trees[1])
        return add(sum_squared(enc.mean), sum_squared(enc.log_var))

    def tree_decoder_loss():
        return decode_tree_teacher(store, cfg, trees[1], zc).loss

    def scoring_loss():
        cands, true_idx = cand_step
        return score_candidates(store, cfg, cands, zc, true_idx)[2]

    def extractor_loss():
        return sum_squared(extractor_forward(ext, cfg, trees[1]))

    def full_loss():
        return vae_loss(store, cfg, items, 0.1, np.random.default_rng(42))[0]

    def view(base: ParamStore, *prefixes: str) -> ParamStore:
        # probe only the sub-network's own parameters; tensors are shared
        # with the full store, so the loss still sees everything
        sub = ParamStore()
        sub.params = {name: t for name, t in base.params.items()
                      if name.startswith(prefixes)}
        return sub

    checks = [
        ("graph encoder", graph_encoder_loss, view(store, "genc/")),
        ("tree encoder", tree_encoder_loss, view(store, "tenc/")),
        ("tree decoder", tree_decoder_loss,
         view(store, "dec/embed", "dec/gru", "dec/topo", "dec/label")),
        ("candidate scoring", scoring_loss, view(store, "dec/assm", "genc/")),
        ("extractor", extractor_loss, ext),
        ("full objective", full_loss, store),
    ]
    worst = {}
    for name, fn, which in checks:
        worst[name] = grad_check(fn, which, n_probes=50, seed=11)
    elapsed = time.perf_counter() - start
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    verdict(3, max(worst.values()) <= 1e-4 and elapsed < 120.0,
            f"{detail}, {elapsed:.1f}s (< 2min)")


def test_criterion_04_analytic_kl():
    exact0 = kl_standard_normal(const([0.0]), const([0.0])).item()
    exact1 = kl_standard_normal(const([1.0]), const([0.0])).item()
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(100):
        mu = float(rng.uniform(-2, 2))
        lv = float(rng.uniform(-2, 2))
        var = np.exp(lv)

        def integrand(x):
            q = np.exp(-(x - mu) ** 2 / (2 * var)) / np.sqrt(2 * np.pi * var)
            p = np.exp(-x ** 2 / 2) / np.sqrt(2 * np.pi)
            return q * np.log(q / p) if q > 1e-300 else 0.0

        expected, _ = quad(integrand, mu - 12 * np.sqrt(var),
                           mu + 12 * np.sqrt(var), limit=200)
        got = kl_standard_normal(const([mu]), const([lv])).item()
        worst = max(worst, abs(got - expected))
    verdict(4, exact0 == 0.0 and exact1 == 0.5 and worst <= 1e-3,
            f"kl(0,0)={exact0}, kl(1,0)={exact1}, quadrature max "
            f"|err|={worst:.2e} (<= 1e-3)")


def test_criterion_05_overfit_reconstruction():
    start = time.perf_counter()
    corpus = toy_corpus(32, seed=3)
    mols = [parse_smiles(s) for s in corpus]
    vocab = build_vocabulary(mols)
    scores = np.array([[synthetic_property(m)] for m in mols])
    cfg = TrainConfig(seed=2, hidden=32, latent=8, mpn_iters=2, batch_size=16,
                      vae_epochs=150, beta_kl=0.005, lr_vae=2e-3,
                      convergence_window=10 ** 9)
    items, _ = build_items(corpus, scores, vocab)
    report = TrainReport(cfg.seed, {})
    pretrain_vae(items, cfg, vocab, report=report, use_convergence=False)
    elapsed = time.perf_counter() - start
    hit = next((r["step"] for r in report.steps
                if r["stage"] == "vae" and r["label_acc"] >= 0.9), None)
    verdict(5, hit is not None and hit < 2000 and elapsed < 600.0,
            f"90% teacher-forced label accuracy at step {hit} (< 2000), "
            f"{elapsed:.0f}s (< 10min)")


def test_criterion_06_extractor_fidelity():
    start = time.perf_counter()
    corpus = toy_corpus(200, seed=7)
    mols = [parse_smiles(s) for s in corpus]
    vocab = build_vocabulary(mols)
    scores = np.array([[synthetic_property(m)] for m in mols])
    items, _ = build_items(corpus, scores, vocab)
    cfg = TrainConfig(seed=5, hidden=32, latent=8, mpn_iters=2, batch_size=16,
                      extractor_steps=2500, lr_extractor=3e-3,
                      convergence_tol=0.0, convergence_window=10 ** 9)
    store = pretrain_extractor(items, cfg, vocab)
    mse = extractor_dataset_mse(store, cfg.model_config(), items)

    tree = items[0].tree
    rows = []
    for label_id in tree.node_labels:
        onehot = np.zeros(len(vocab))
        onehot[label_id] = 1.0
        rows.append(const(onehot))
    hard = extractor_forward(store, cfg.model_config(), tree).data
    soft = extractor_forward(store, cfg.model_config(),
                             SoftTree(tree, rows)).data
    identical = np.array_equal(hard, soft)
    elapsed = time.perf_counter() - start
    verdict(6, mse < 1e-3 and identical,
            f"train MSE {mse:.2e} (< 1e-3), hard/soft predictions "
            f"{'bit-identical' if identical else 'DIFFER'}, {elapsed:.0f}s")


def test_criterion_07_directional_control():
    start = time.perf_counter()
    corpus_all = size_varied_corpus(300, seed=11)
    train_smiles = corpus_all[:200]
    mols = [parse_smiles(s) for s in train_smiles]
    vocab = build_vocabulary(mols)
    scores = np.array([[synthetic_property(m)] for m in mols])
    cfg = TrainConfig(seed=5, hidden=32, latent=8, mpn_iters=2, batch_size=16,
                      extractor_steps=2000, vae_epochs=60, joint_epochs=12,
                      lam=2.0, option="I", lr_vae=2e-3, lr_joint=1e-3,
                      lr_extractor=2e-3, beta_kl=0.01,
                      convergence_window=10 ** 9)
    items, _ = build_items(train_smiles, scores, vocab)
    ext = pretrain_extractor(items, cfg, vocab)
    report = TrainReport(cfg.seed, {})
    vae = pretrain_vae(items, cfg, vocab, report=report, use_convergence=False)
    vae, report = joint_loop(items, ext, vae, cfg, vocab, report)

    held = []
    for smiles in corpus_all[200:]:
        try:
            mol = parse_smiles(smiles)
            vocab.annotate(decompose(mol))
            held.append(mol)
        except CjtvaeError:
            continue
        if len(held) == 50:
            break

    mcfg = cfg.model_config()
    wins = ties = fails = 0
    diffs = []
    for mol in held:
        hi = encode_and_generate(vae, mcfg, vocab, mol, np.array([1.0]))
        lo = encode_and_generate(vae, mcfg, vocab, mol, np.array([0.0]))
        if hi.smiles is None or lo.smiles is None:
            fails += 1
            continue
        p_hi = synthetic_property(parse_smiles(hi.smiles))
        p_lo = synthetic_property(parse_smiles(lo.smiles))
        diffs.append(p_hi - p_lo)
        if p_hi > p_lo:
            wins += 1
        elif p_hi == p_lo:
            ties += 1
    n_eff = len(diffs) - ties
    p_value = (sum(comb(n_eff, k) for k in range(wins, n_eff + 1))
               / 2 ** n_eff) if n_eff else 1.0
    mean_diff = float(np.mean(diffs)) if diffs else float("nan")
    elapsed = time.perf_counter() - start
    verdict(7, len(held) == 50 and mean_diff > 0 and p_value < 0.05
            and elapsed < 1200.0,
            f"pairs {len(diffs)} (fails {fails}), wins {wins}, ties {ties}, "
            f"mean property diff {mean_diff:+.4f} (> 0), sign test "
            f"p={p_value:.2e} (< 0.05), {elapsed:.0f}s (< 20min)")


def test_criterion_08_training_determinism(tmp_path):
    from test_cli import write_config, write_corpus

    digests = []
    for run in ("a", "b"):
        root = tmp_path / run
        root.mkdir()
        write_corpus(root, size_varied_corpus(24, seed=13))
        cfg_path = write_config(root, train={
            "seed": 11, "hidden": 12, "latent": 5, "mpn_iters": 2,
            "batch_size": 8, "extractor_steps": 40, "vae_epochs": 3,
            "joint_epochs": 2, "lam": 1.0, "option": "I",
            "convergence_window": 10 ** 9})
        assert cli_main(["preprocess", "--config", str(cfg_path)]) == 0
        assert cli_main(["vocab", "--config", str(cfg_path)]) == 0
        assert cli_main(["train", "--config", str(cfg_path)]) == 0
        blob = b""
        for name in ("ckpt/extractor.ckpt", "ckpt/vae.ckpt",
                     "ckpt/joint.ckpt", "out/train_log.jsonl"):
            blob += (root / name).read_bytes()
        digests.append(blob)
    runs_identical = digests[0] == digests[1]

    ckpt = tmp_path / "a" / "ckpt" / "joint.ckpt"
    loaded = ParamStore.load(ckpt)
    resaved = tmp_path / "resaved.ckpt"
    loaded.save(resaved)
    round_trip = ckpt.read_bytes() == resaved.read_bytes()
    verdict(8, runs_identical and round_trip,
            f"two runs byte-identical: {runs_identical}, "
            f"save->load->save byte-identical: {round_trip}")


def test_criterion_09_normalization_contract():
    rng = np.random.default_rng(17)
    raw = rng.normal(3.0, 11.0, size=10_000)
    result = normalize_scores(raw)
    lo = np.percentile(raw, 5)
    hi = np.percentile(raw, 95)
    in_range = result.values.min() >= 0.0 and result.values.max() <= 1.0
    edges = (np.all(result.values[raw <= lo] == 0.0)
             and np.all(result.values[raw >= hi] == 1.0))
    order = np.argsort(raw)
    monotone = bool(np.all(np.diff(result.values[order]) >= 0.0))
    verdict(9, in_range and edges and monotone,
            f"range ok: {in_range}, percentile edges map to 0/1: {edges}, "
            f"monotone: {monotone} (10,000 values)")


def test_criterion_10_joint_loop_reduction():
    corpus = size_varied_corpus(16, seed=19)
    mols = [parse_smiles(s) for s in corpus]
    vocab = build_vocabulary(mols)
    scores = np.array([[synthetic_property(m)] for m in mols])
    items, _ = build_items(corpus, scores, vocab)
    base = dict(seed=3, hidden=12, latent=5, mpn_iters=2, batch_size=8,
                lr_vae=2e-3, lr_joint=2e-3, beta_kl=0.01,
                kl_warmup_steps=2 * len(items),
                convergence_window=10 ** 9, extractor_steps=30)

    cfg_a = TrainConfig(**base, vae_epochs=2, joint_epochs=3,
                        lam=0.0, option="none")
    report_a = TrainReport(cfg_a.seed, {})
    store_a = pretrain_vae(items, cfg_a, vocab, report=report_a,
                           use_convergence=False)
    ext = pretrain_extractor(items, cfg_a, vocab)
    store_a, report_a = joint_loop(items, ext, store_a, cfg_a, vocab, report_a)

    cfg_b = TrainConfig(**base, vae_epochs=5, joint_epochs=0)
    report_b = TrainReport(cfg_b.seed, {})
    store_b = pretrain_vae(items, cfg_b, vocab, report=report_b,
                           use_convergence=False)

    trace_a = [r["loss"] for r in report_a.steps]
    trace_b = [r["loss"] for r in report_b.steps]
    traces_equal = trace_a == trace_b
    params_equal = all(np.array_equal(store_a[n].data, store_b[n].data)
                       for n in store_a.names())
    verdict(10, traces_equal and params_equal and len(trace_a) >= 10,
            f"loss traces identical over {len(trace_a)} steps: {traces_equal}, "
            f"final parameters bit-identical: {params_equal}")
