"""Finite-blocklength 4D probabilistic shaping.

Amplitudes are drawn by a constant-composition distribution matcher (CCDM),
combined with uniform sign bits and spread over the four real dimensions
(I_x, Q_x, I_y, Q_y) of a dual-polarization symbol.
"""
from __future__ import annotations

import csv
import heapq
import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize


class ShapingError(ValueError):
    pass


@dataclass(frozen=True)
class Distribution1D:
    """Amplitude levels (strictly increasing, positive) with probabilities."""

    levels: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(float(a) for a in self.levels)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "probs", probs)
        if len(levels) != len(probs) or not levels:
            raise ShapingError("levels and probs must be nonempty and of equal length")
        if any(p < 0 for p in probs):
            raise ShapingError("probabilities must be nonnegative")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ShapingError(f"probabilities sum to {math.fsum(probs)!r}, not 1")
        if levels[0] <= 0 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ShapingError("levels must be positive and strictly increasing")

    @classmethod
    def pam(cls, probs: Sequence[float]) -> "Distribution1D":
        """Odd-integer amplitude levels 1, 3, 5, ... (the positive half of a PAM)."""
        return cls(tuple(2 * i + 1 for i in range(len(probs))), tuple(probs))

    @classmethod
    def uniform(cls, n_levels: int) -> "Distribution1D":
        return cls.pam([1.0 / n_levels] * n_levels)

    def energy(self) -> float:
        return math.fsum(p * a * a for a, p in zip(self.levels, self.probs))

    def permuted(self, perm: "PermutationAssignment") -> "Distribution1D":
        return Distribution1D(self.levels, tuple(self.probs[j] for j in perm.order))


@dataclass(frozen=True)
class Composition:
    """Occurrence count of each amplitude level in a CCDM codeword."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        object.__setattr__(self, "counts", counts)
        if any(c < 0 for c in counts):
            raise ShapingError("counts must be nonnegative")
        if sum(counts) < 1:
            raise ShapingError("blocklength must be at least 1")

    @property
    def n(self) -> int:
        return sum(self.counts)

    def empirical(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


@dataclass(frozen=True)
class PermutationAssignment:
    """Which base probability goes to which amplitude level.

    ``order[i] = j`` assigns ``probs[j]`` of the base distribution to
    ``levels[i]``. The same assignment is used on all four dimensions.
    """

    order: tuple[int, ...]
    index: int = 0

    @classmethod
    def identity(cls, n_levels: int = 4) -> "PermutationAssignment":
        return cls(tuple(range(n_levels)), 0)


@dataclass
class SymbolSequence:
    """Dual-polarization symbols; ``codeword_symbols`` is the CCDM codeword
    length expressed in 4D symbols (``None`` for unstructured sequences)."""

    x: np.ndarray
    y: np.ndarray
    codeword_symbols: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=complex)
        self.y = np.asarray(self.y, dtype=complex)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ValueError("x and y must be 1D arrays of equal length")

    def __len__(self) -> int:
        return self.x.size

    def energy(self) -> float:
        """Mean 4D symbol energy E[|x|^2 + |y|^2]."""
        return float(np.mean(np.abs(self.x) ** 2 + np.abs(self.y) ** 2))

    def normalized(self) -> "SymbolSequence":
        """Scaled so that E[|x|^2 + |y|^2] = 2 (unit power per polarization)."""
        s = math.sqrt(2.0 / self.energy())
        return SymbolSequence(self.x * s, self.y * s, self.codeword_symbols, dict(self.meta))

    def as_real(self) -> np.ndarray:
        """(n, 4) array of I_x, Q_x, I_y, Q_y."""
        return np.stack([self.x.real, self.x.imag, self.y.real, self.y.imag], axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "Ix", "Qx", "Iy", "Qy"])
            for i, row in enumerate(self.as_real()):
                w.writerow([i, *(repr(float(v)) for v in row)])

    @classmethod
    def from_csv(cls, path) -> "SymbolSequence":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])


def entropy(dist: Distribution1D) -> float:
    """Entropy in bits per amplitude."""
    return 0.0 - math.fsum(p * math.log2(p) for p in dist.probs if p > 0)


def maxwell_boltzmann(n_levels: int, h_amp: float) -> Distribution1D:
    """PAM amplitudes 1, 3, ... with p ~ exp(-lam a^2), lam set so the
    amplitude entropy is ``h_amp`` bits (sign bit excluded).

    A square QAM built from it carries 2 * (h_amp + 1) bits per 2D symbol.
    """
    hmax = math.log2(n_levels)
    if not 0 < h_amp <= hmax + 1e-12:
        raise ShapingError(f"amplitude entropy must lie in (0, {hmax:g}] bits")
    a2 = (2.0 * np.arange(n_levels) + 1) ** 2

    def dist(lam):
        w = np.exp(-lam * (a2 - a2[0]))
        return w / w.sum()

    def gap(lam):
        p = dist(lam)
        return -float(np.sum(p * np.log2(np.where(p > 0, p, 1.0)))) - h_amp

    if abs(h_amp - hmax) < 1e-12:
        return Distribution1D.uniform(n_levels)
    lam = optimize.brentq(gap, 0.0, 50.0, xtol=1e-15)
    p = dist(lam)
    return Distribution1D.pam(p / math.fsum(p))


def _multinomial(counts: Sequence[int]) -> int:
    total, remaining = 1, sum(counts)
    for c in counts:
        total *= math.comb(remaining, c)
        remaining -= c
    return total


def ccdm_rate(comp: Composition) -> int:
    """Number of input bits k = floor(log2 multinomial(N; counts)).

    Long blocks use log-gamma; the exact big-integer count is only formed
    when the float estimate lies too close to an integer to floor safely.
    """
    if comp.n > 2048:
        lg = (math.lgamma(comp.n + 1) - math.fsum(math.lgamma(c + 1) for c in comp.counts)) / math.log(2)
        if abs(lg - round(lg)) > 1e-9 * max(lg, 1.0):
            return int(math.floor(lg))
    return _multinomial(comp.counts).bit_length() - 1


def _bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        if b not in (0, 1):
            raise ShapingError("bits must be 0 or 1")
        value = (value << 1) | int(b)
    return value


def ccdm_encode(bits: Sequence[int], comp: Composition) -> np.ndarray:
    """Map ``ccdm_rate(comp)`` bits to a codeword of level indices.

    Exact arithmetic coding on the shrinking composition: at every position
    the interval is split among the remaining levels in proportion to the
    number of codewords that complete the prefix. With integer interval
    bounds this is the lexicographic unranking of multiset permutations; the
    2^k input points are spread evenly over the full codeword range so that
    no part of the codebook is favored.
    """
    k = ccdm_rate(comp)
    if len(bits) != k:
        raise ShapingError(f"expected {k} input bits, got {len(bits)}")
    counts = list(comp.counts)
    n = comp.n
    total = _multinomial(counts)
    # the input interval [r, r+1) / 2^k is scaled onto the whole codeword range
    r = _bits_to_int(bits) * total >> k
    out = np.empty(n, dtype=np.int64)
    for pos in range(n):
        remaining = n - pos
        for sym, c in enumerate(counts):
            if c == 0:
                continue
            # completions starting with sym
            sub = total * c // remaining
            if r < sub:
                out[pos] = sym
                counts[sym] -= 1
                total = sub
                break
            r -= sub
    return out


def ccdm_decode(codeword: Sequence[int], comp: Composition) -> list[int]:
    """Inverse of :func:`ccdm_encode`."""
    codeword = np.asarray(codeword, dtype=np.int64)
    if codeword.size != comp.n or np.any(codeword < 0) or np.any(codeword >= len(comp.counts)):
        raise ShapingError("codeword length or alphabet does not match the composition")
    if tuple(np.bincount(codeword, minlength=len(comp.counts))) != comp.counts:
        raise ShapingError("codeword composition mismatch (lost synchronization?)")
    counts = list(comp.counts)
    n = comp.n
    total = _multinomial(counts)
    r = 0
    for pos, sym in enumerate(codeword.tolist()):
        remaining = n - pos
        for s in range(sym):
            if counts[s]:
                r += total * counts[s] // remaining
        total = total * counts[sym] // remaining
        counts[sym] -= 1
    k = ccdm_rate(comp)
    full = _multinomial(comp.counts)
    value = -((-r << k) // full)  # ceil(r * 2^k / full)
    if value >> k or (value * full) >> k != r:
        raise ShapingError("codeword is not in the image of the encoder")
    return [(value >> (k - 1 - i)) & 1 for i in range(k)]


def composition_for(dist: Distribution1D, n: int) -> Composition:
    """Integer composition of length ``n`` closest in KL divergence to ``dist``.

    D(q||p) is separable and convex in the counts, so unit-by-unit greedy
    allocation from zero is optimal. Ties go to the lowest level index.
    """
    if n < 1:
        raise ShapingError("blocklength must be at least 1")
    probs = dist.probs

    def cost(i, c):
        return 0.0 if c == 0 else c * math.log(c / (n * probs[i]))

    counts = [0] * len(probs)
    heap = [(cost(i, 1), i) for i, p in enumerate(probs) if p > 0]
    heapq.heapify(heap)
    for _ in range(n):
        _, i = heapq.heappop(heap)
        counts[i] += 1
        heapq.heappush(heap, (cost(i, counts[i] + 1) - cost(i, counts[i]), i))
    return Composition(tuple(counts))


def kl_divergence(comp: Composition, dist: Distribution1D) -> float:
    q = comp.empirical()
    return math.fsum(
        qi * math.log(qi / pi) if qi > 0 else 0.0 for qi, pi in zip(q, dist.probs)
    ) if all(pi > 0 or qi == 0 for qi, pi in zip(q, dist.probs)) else math.inf


def rate_loss(comp: Composition) -> float:
    """Entropy of the composition's empirical law minus the CCDM rate (bits/amplitude)."""
    h = -math.fsum(q * math.log2(q) for q in comp.empirical() if q > 0)
    return h - ccdm_rate(comp) / comp.n


def map_4d(amplitudes: Sequence[float], signs: Sequence[int],
           perm: PermutationAssignment | None = None,
           levels: Sequence[float] | None = None) -> SymbolSequence:
    """Block-interleave 4 consecutive signed amplitudes into (I_x, Q_x, I_y, Q_y).

    If ``perm`` is given, amplitude ``levels[j]`` is relabelled to
    ``levels[perm.order.index(j)]``, i.e. probabilities follow the assignment.
    """
    a = np.asarray(amplitudes, dtype=float)
    s = np.asarray(signs)
    if a.size % 4:
        raise ShapingError("number of amplitudes must be divisible by 4")
    if s.shape != a.shape:
        raise ShapingError("need one sign per amplitude")
    if perm is not None:
        if levels is None:
            raise ShapingError("relabelling by permutation needs the level set")
        lv = np.asarray(levels, dtype=float)
        idx = np.searchsorted(lv, a)
        inverse = np.argsort(perm.order)
        a = lv[inverse[idx]]
    v = (a * np.where(s > 0, 1.0, -1.0)).reshape(-1, 4)
    return SymbolSequence(v[:, 0] + 1j * v[:, 1], v[:, 2] + 1j * v[:, 3])


def permutations_4d(dist: Distribution1D) -> list[PermutationAssignment]:
    """All distinct assignments of the probability vector onto the levels."""
    seen: dict[tuple[float, ...], tuple[int, ...]] = {}
    for order in itertools.permutations(range(len(dist.probs))):
        key = tuple(dist.probs[j] for j in order)
        seen.setdefault(key, order)
    n_all = math.factorial(len(dist.probs))
    if len(seen) < n_all:
        warnings.warn(
            f"repeated probabilities: {len(seen)} distinct assignments instead of {n_all}",
            stacklevel=2,
        )
    return [PermutationAssignment(order, i) for i, order in enumerate(seen.values())]


def shaped_sequence(dist: Distribution1D, blocklength: int, n_symbols: int,
                    rng: np.random.Generator,
                    perm: PermutationAssignment | None = None) -> SymbolSequence:
    """Generate ``n_symbols`` 4D-PS symbols from CCDM codewords of ``blocklength`` amplitudes.

    Codewords are concatenated back to back; the last one is truncated when
    ``4 * n_symbols`` is not a multiple of ``blocklength``. Output is
    normalized to unit power per polarization.
    """
    target = dist.permuted(perm) if perm is not None else dist
    comp = composition_for(target, blocklength)
    k = ccdm_rate(comp)
    n_amp = 4 * n_symbols
    n_words = -(-n_amp // blocklength)
    levels = np.asarray(dist.levels)
    if k == 0:
        word = levels[ccdm_encode([], comp)]
        amps = np.tile(word, n_words)
    else:
        bits = rng.integers(0, 2, size=(n_words, k))
        amps = np.concatenate([levels[ccdm_encode(b.tolist(), comp)] for b in bits])
    amps = amps[:n_amp]
    signs = rng.integers(0, 2, size=n_amp) * 2 - 1
    seq = map_4d(amps, signs).normalized()
    seq.codeword_symbols = blocklength / 4
    seq.meta.update(blocklength=blocklength, counts=comp.counts, rate_bits=k)
    return seq


def iid_sequence(dist: Distribution1D, n_symbols: int, rng: np.random.Generator,
                 perm: PermutationAssignment | None = None) -> SymbolSequence:
    """I.i.d. amplitudes from ``dist`` (the infinite-blocklength limit)."""
    target = dist.permuted(perm) if perm is not None else dist
    amps = rng.choice(np.asarray(target.levels), size=4 * n_symbols, p=np.asarray(target.probs))
    signs = rng.integers(0, 2, size=4 * n_symbols) * 2 - 1
    return map_4d(amps, signs).normalized()


def gaussian_sequence(n_symbols: int, rng: np.random.Generator) -> SymbolSequence:
    """Circularly-symmetric complex Gaussian symbols, unit power per polarization."""
    z = rng.standard_normal((4, n_symbols)) / math.sqrt(2)
    return SymbolSequence(z[0] + 1j * z[1], z[2] + 1j * z[3])


def qam_sequence(order: int, n_symbols: int, rng: np.random.Generator) -> SymbolSequence:
    """Uniform square PM-QAM, independent polarizations (PM-2D i.i.d.)."""
    side = int(round(math.sqrt(order)))
    if side * side != order:
        raise ShapingError("order must be a square")
    pam = np.arange(-side + 1, side, 2, dtype=float)
    v = rng.choice(pam, size=(4, n_symbols))
    return SymbolSequence(v[0] + 1j * v[1], v[2] + 1j * v[3]).normalized()
