"""Fingerprints, similarity, property oracles, normalization."""

import numpy as np
import pytest

from cjtvae.chem import (
    Fingerprint,
    crippen_logp,
    morgan_fingerprint,
    normalize_scores,
    parse_smiles,
    penalized_logp,
    synthetic_property,
    tanimoto,
)
from cjtvae.chem.crippen import CONTRIBUTIONS, fallback_counts
from cjtvae.errors import EmptyInput, ValenceError, WidthMismatch
from cjtvae.chem.mol import MolGraph


def test_methane_radius0_single_bit():
    fp = morgan_fingerprint(parse_smiles("C"), radius=0, nbits=2048)
    assert fp.popcount() == 1


def test_ethane_radius1_few_bits():
    # two identical round-0 environments and two identical round-1
    # environments: at most 2 distinct hashes, so at most 2 bits
    fp = morgan_fingerprint(parse_smiles("CC"), radius=1, nbits=2048)
    assert 1 <= fp.popcount() <= 4


def test_fingerprint_order_invariance():
    a = morgan_fingerprint(parse_smiles("CC(=O)Oc1ccccc1C(=O)O"), 2, 2048)
    b = morgan_fingerprint(parse_smiles("O=C(O)c1ccccc1OC(C)=O"), 2, 2048)
    assert a.bits == b.bits


def test_fingerprint_rejects_bad_width():
    with pytest.raises(ValueError):
        morgan_fingerprint(parse_smiles("C"), 2, 1000)


def test_tanimoto_identity_and_disjoint():
    f = morgan_fingerprint(parse_smiles("CCO"), 2, 512)
    assert tanimoto(f, f) == 1.0
    a = Fingerprint(frozenset({1, 2}), 64, 1)
    b = Fingerprint(frozenset({3, 4}), 64, 1)
    assert tanimoto(a, b) == 0.0
    empty = Fingerprint(frozenset(), 64, 1)
    assert tanimoto(empty, empty) == 1.0


def test_tanimoto_half():
    a = Fingerprint(frozenset({1, 2, 3}), 64, 1)
    b = Fingerprint(frozenset({2, 3, 4}), 64, 1)
    assert tanimoto(a, b) == 0.5


def test_tanimoto_width_mismatch():
    a = Fingerprint(frozenset({1}), 64, 1)
    b = Fingerprint(frozenset({1}), 128, 1)
    with pytest.raises(WidthMismatch):
        tanimoto(a, b)


def test_tanimoto_symmetry_and_bounds():
    rng = np.random.default_rng(0)
    mols = ["CCO", "c1ccccc1", "CC(=O)O", "CCN", "C1CCCCC1"]
    fps = [morgan_fingerprint(parse_smiles(s), 2, 1024) for s in mols]
    for i in range(len(fps)):
        for j in range(len(fps)):
            t = tanimoto(fps[i], fps[j])
            assert 0.0 <= t <= 1.0
            assert t == tanimoto(fps[j], fps[i])


def test_crippen_methane_from_table():
    # one aliphatic CH4 carbon plus four hydrocarbon hydrogens
    expected = CONTRIBUTIONS["C1"] + 4 * CONTRIBUTIONS["H1"]
    assert crippen_logp(parse_smiles("C")) == pytest.approx(expected)


def test_crippen_ch2_increment():
    ethane = crippen_logp(parse_smiles("CC"))
    methane = crippen_logp(parse_smiles("C"))
    increment = CONTRIBUTIONS["C1"] + 2 * CONTRIBUTIONS["H1"]
    assert ethane - methane == pytest.approx(increment)


def test_crippen_empty_molecule_rejected():
    with pytest.raises(ValenceError):
        crippen_logp(MolGraph())


def test_crippen_fallback_counter():
    before = sum(fallback_counts.values())
    crippen_logp(parse_smiles("BrB(Br)Br"))  # boron has no table entry
    assert sum(fallback_counts.values()) > before


def test_penalized_logp_acyclic_equals_crippen():
    mol = parse_smiles("CCCCO")
    assert penalized_logp(mol) == crippen_logp(mol)


def test_penalized_logp_ring_penalty():
    ring8 = parse_smiles("C1CCCCCCC1")
    assert penalized_logp(ring8) == pytest.approx(crippen_logp(ring8) - 2)
    benzene = parse_smiles("c1ccccc1")
    assert penalized_logp(benzene) == pytest.approx(crippen_logp(benzene))


def test_synthetic_property_values():
    assert synthetic_property(parse_smiles("C")) == pytest.approx(0.025)
    assert synthetic_property(parse_smiles("C" * 20)) == pytest.approx(0.5)
    assert synthetic_property(parse_smiles("C" * 45)) == 1.0


def test_normalize_edges_map_to_0_and_1():
    rng = np.random.default_rng(3)
    raw = rng.normal(size=500)
    result = normalize_scores(raw)
    lo = np.percentile(raw, 5)
    hi = np.percentile(raw, 95)
    assert np.all(result.values[raw <= lo] == 0.0)
    assert np.all(result.values[raw >= hi] == 1.0)
    assert result.values.min() == 0.0 and result.values.max() == 1.0
    assert not result.degenerate


def test_normalize_matches_manual_interpolation():
    # independent percentile: linear interpolation on the sorted array
    rng = np.random.default_rng(9)
    raw = rng.uniform(-5, 7, size=41)
    s = np.sort(raw)
    def pct(q):
        pos = q / 100 * (len(s) - 1)
        lo, hi = int(np.floor(pos)), int(np.ceil(pos))
        frac = pos - lo
        return s[lo] * (1 - frac) + s[hi] * frac
    p5, p95 = pct(5), pct(95)
    expected = (np.clip(raw, p5, p95) - p5) / (p95 - p5)
    result = normalize_scores(raw)
    assert np.allclose(result.values, expected, atol=1e-12)


def test_normalize_constant_input():
    result = normalize_scores(np.full(17, 3.3))
    assert result.degenerate
    assert np.all(result.values == 0.0)


def test_normalize_monotone():
    rng = np.random.default_rng(11)
    raw = rng.normal(size=200)
    values = normalize_scores(raw).values
    order = np.argsort(raw)
    assert np.all(np.diff(values[order]) >= 0.0)


def test_normalize_empty():
    with pytest.raises(EmptyInput):
        normalize_scores([])
