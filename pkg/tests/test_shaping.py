import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from w4d import shaping as sh

P4 = [0.4, 0.3, 0.2, 0.1]


# -- entropy ---------------------------------------------------------------

def test_entropy_examples():
    assert sh.entropy(sh.Distribution1D.uniform(4)) == pytest.approx(2.0, abs=1e-12)
    # oracle: direct evaluation with numpy
    p = np.array(P4)
    assert sh.entropy(sh.Distribution1D.pam(P4)) == pytest.approx(-(p * np.log2(p)).sum(), rel=1e-12)
    assert sh.entropy(sh.Distribution1D.pam(P4)) == pytest.approx(1.8464, abs=1e-4)
    assert sh.entropy(sh.Distribution1D.pam([1, 0, 0, 0])) == 0.0


@pytest.mark.parametrize("probs", [[0.5, 0.6], [-0.1, 1.1], []])
def test_distribution_rejects_bad_probs(probs):
    with pytest.raises(sh.ShapingError):
        sh.Distribution1D.pam(probs)


def test_distribution_rejects_bad_levels():
    with pytest.raises(sh.ShapingError):
        sh.Distribution1D((3.0, 1.0), (0.5, 0.5))
    with pytest.raises(sh.ShapingError):
        sh.Distribution1D((0.0, 1.0), (0.5, 0.5))


@pytest.mark.parametrize("h", [0.5, 1.0, 1.5, 1.9])
def test_maxwell_boltzmann_hits_entropy(h):
    d = sh.maxwell_boltzmann(4, h)
    assert sh.entropy(d) == pytest.approx(h, abs=1e-9)
    assert all(a >= b for a, b in zip(d.probs, d.probs[1:]))


def test_maxwell_boltzmann_uniform_limit():
    assert sh.maxwell_boltzmann(4, 2.0).probs == (0.25,) * 4
    with pytest.raises(sh.ShapingError):
        sh.maxwell_boltzmann(4, 2.5)


# -- CCDM rate, encode, decode ---------------------------------------------

def test_ccdm_rate_examples():
    assert sh.ccdm_rate(sh.Composition((4, 0, 0, 0))) == 0
    assert sh.ccdm_rate(sh.Composition((1, 1, 1, 1))) == 4
    assert sh.ccdm_rate(sh.Composition((2, 2))) == 2


def test_ccdm_rate_long_blocks_match_exact_count():
    # oracle: bit length of the exact big-integer multinomial
    for counts in [(4000, 3000, 2000, 1000), (40000, 30000, 20000, 10000), (2049, 1)]:
        comp = sh.Composition(counts)
        exact = math.factorial(comp.n)
        for c in counts:
            exact //= math.factorial(c)
        assert sh.ccdm_rate(comp) == exact.bit_length() - 1


def test_ccdm_rate_no_overflow_at_one_million():
    comp = sh.Composition((400_000, 300_000, 200_000, 100_000))
    h = sh.entropy(sh.Distribution1D.pam(P4))
    k = sh.ccdm_rate(comp)
    assert 0 < k < comp.n * h
    # rate loss of a multinomial is about (M-1)/2 * log2(N) bits
    assert comp.n * h - k < 1.5 * math.log2(comp.n) + 5


def test_ccdm_single_codeword():
    assert sh.ccdm_encode([], sh.Composition((4, 0, 0, 0))).tolist() == [0, 0, 0, 0]


def test_ccdm_exhaustive_two_level():
    comp = sh.Composition((2, 2))
    words = {tuple(sh.ccdm_encode(list(b), comp)) for b in itertools.product([0, 1], repeat=2)}
    assert len(words) == 4
    assert all(sorted(w) == [0, 0, 1, 1] for w in words)


def test_ccdm_wrong_bit_count():
    with pytest.raises(sh.ShapingError):
        sh.ccdm_encode([0, 1, 1], sh.Composition((2, 2)))


def test_ccdm_decode_detects_composition_mismatch():
    with pytest.raises(sh.ShapingError, match="composition"):
        sh.ccdm_decode([0, 0, 0, 1], sh.Composition((2, 2)))


def test_ccdm_decode_rejects_unused_codeword():
    comp = sh.Composition((2, 2))
    used = {tuple(sh.ccdm_encode(list(b), comp)) for b in itertools.product([0, 1], repeat=2)}
    unused = [w for w in set(itertools.permutations([0, 0, 1, 1])) if w not in used]
    assert len(unused) == 2
    for w in unused:
        with pytest.raises(sh.ShapingError):
            sh.ccdm_decode(list(w), comp)


def test_ccdm_roundtrip_1000_random(rng):
    for _ in range(1000):
        m = int(rng.integers(2, 6))
        counts = tuple(int(c) for c in rng.integers(0, 12, size=m))
        if sum(counts) == 0:
            counts = (1,) + counts[1:]
        comp = sh.Composition(counts)
        bits = rng.integers(0, 2, size=sh.ccdm_rate(comp)).tolist()
        word = sh.ccdm_encode(bits, comp)
        assert tuple(np.bincount(word, minlength=m)) == counts
        assert sh.ccdm_decode(word, comp) == bits


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 40), min_size=2, max_size=5).filter(lambda c: sum(c) > 0),
       st.randoms(use_true_random=False))
def test_ccdm_roundtrip_property(counts, r):
    comp = sh.Composition(tuple(counts))
    bits = [r.getrandbits(1) for _ in range(sh.ccdm_rate(comp))]
    word = sh.ccdm_encode(bits, comp)
    assert tuple(np.bincount(word, minlength=len(counts))) == comp.counts
    assert sh.ccdm_decode(word, comp) == bits


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=2, max_size=4).filter(lambda c: 0 < sum(c) <= 10))
def test_ccdm_injective_property(counts):
    comp = sh.Composition(tuple(counts))
    k = sh.ccdm_rate(comp)
    words = {tuple(sh.ccdm_encode(list(b), comp)) for b in itertools.product([0, 1], repeat=k)}
    assert len(words) == 2 ** k


# -- compositions and rate loss --------------------------------------------

def _brute_force_composition(probs, n):
    best, best_kl = None, math.inf
    for c in itertools.product(range(n + 1), repeat=len(probs)):
        if sum(c) != n:
            continue
        kl = sum(ci / n * math.log(ci / n / p) for ci, p in zip(c, probs) if ci)
        if kl < best_kl - 1e-15:
            best, best_kl = c, kl
    return best, best_kl


def test_composition_examples():
    assert sh.composition_for(sh.Distribution1D.pam(P4), 10).counts == (4, 3, 2, 1)
    assert sh.composition_for(sh.Distribution1D.uniform(4), 8).counts == (2, 2, 2, 2)
    d = sh.Distribution1D.pam(P4)
    best, best_kl = _brute_force_composition(P4, 4)
    got = sh.composition_for(d, 4)
    assert sh.kl_divergence(got, d) == pytest.approx(best_kl, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=4), st.integers(1, 12))
def test_composition_is_kl_optimal(weights, n):
    probs = [w / sum(weights) for w in weights]
    probs[-1] = 1.0 - sum(probs[:-1])
    d = sh.Distribution1D.pam(probs)
    got = sh.composition_for(d, n)
    assert got.n == n
    _, best_kl = _brute_force_composition(d.probs, n)
    assert sh.kl_divergence(got, d) <= best_kl + 1e-12


def test_rate_loss_decreases_with_blocklength():
    d = sh.maxwell_boltzmann(4, 1.5)
    losses = [sh.rate_loss(sh.composition_for(d, n)) for n in (16, 64, 256, 1024, 10000)]
    assert all(x >= 0 for x in losses)
    assert all(a > b for a, b in zip(losses, losses[1:]))


# -- 4D mapping --------------------------------------------------------------

def test_map_4d_definition():
    s = sh.map_4d([1, 3, 5, 7], [1, 1, 1, 1])
    assert s.x.tolist() == [1 + 3j] and s.y.tolist() == [5 + 7j]


def test_map_4d_rejects_ragged_input():
    with pytest.raises(sh.ShapingError):
        sh.map_4d([1, 3, 5], [1, 1, 1])


def test_map_4d_energy_matches_distribution(rng):
    d = sh.Distribution1D.pam(P4)
    comp = sh.composition_for(d, 40)
    levels = np.array(d.levels)
    amps = np.concatenate([levels[sh.ccdm_encode(rng.integers(0, 2, sh.ccdm_rate(comp)).tolist(), comp)]
                           for _ in range(10)])
    s = sh.map_4d(amps, rng.integers(0, 2, amps.size) * 2 - 1)
    expected = 4 * sum(q * a * a for q, a in zip(comp.empirical(), d.levels))
    assert s.energy() == pytest.approx(expected, rel=1e-9)


def test_codeword_histogram_follows_permuted_composition(rng):
    d = sh.Distribution1D.pam(P4)
    perm = sh.permutations_4d(d)[7]
    seq = sh.shaped_sequence(d, 40, 10, rng, perm)  # exactly 4 codewords
    raw = np.abs(seq.as_real()).ravel()
    raw = np.rint(raw / raw.min()).astype(int)
    target = sh.composition_for(d.permuted(perm), 40)
    for word in raw.reshape(-1, 40):
        hist = [int(np.sum(word == a)) for a in (1, 3, 5, 7)]
        assert tuple(hist) == target.counts


def test_short_blocklength_is_not_factorizable(rng):
    """Chi-square independence test between two dimensions of one symbol."""
    d = sh.Distribution1D.pam(P4)
    seq = sh.shaped_sequence(d, 16, 100_000, rng)  # 4 symbols per codeword
    r = np.abs(seq.as_real())
    lv = np.unique(np.round(r, 9))
    idx = np.searchsorted(lv, np.round(r, 9))
    table = np.zeros((lv.size, lv.size))
    np.add.at(table, (idx[:, 0], idx[:, 1]), 1)
    _, p, _, _ = stats.chi2_contingency(table)
    assert p < 0.01


def test_permutation_counts():
    assert len(sh.permutations_4d(sh.Distribution1D.pam(P4))) == 24
    with pytest.warns(UserWarning):
        assert len(sh.permutations_4d(sh.Distribution1D.uniform(4))) == 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert len(sh.permutations_4d(sh.Distribution1D.pam([0.5, 0.5, 0, 0]))) == 6


def test_permutations_preserve_entropy():
    d = sh.maxwell_boltzmann(4, 1.5)
    h = sh.entropy(d)
    for perm in sh.permutations_4d(d):
        assert sh.entropy(d.permuted(perm)) == pytest.approx(h, abs=1e-14)


# -- sequences ---------------------------------------------------------------

def test_shaped_sequence_normalized_and_deterministic():
    d = sh.maxwell_boltzmann(4, 1.5)
    a = sh.shaped_sequence(d, 64, 1000, np.random.default_rng(3))
    b = sh.shaped_sequence(d, 64, 1000, np.random.default_rng(3))
    assert a.energy() == pytest.approx(2.0, rel=1e-12)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.codeword_symbols == 16


def test_sequence_csv_roundtrip(tmp_path, rng):
    s = sh.qam_sequence(16, 50, rng)
    s.to_csv(tmp_path / "s.csv")
    t = sh.SymbolSequence.from_csv(tmp_path / "s.csv")
    assert np.array_equal(s.x, t.x) and np.array_equal(s.y, t.y)
