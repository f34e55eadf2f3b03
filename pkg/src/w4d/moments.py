"""Joint moments of dual-polarization symbols and the modulation coefficients
derived from them.

Moments are indexed by ``(p, q, r, s)`` for E[x^p conj(x)^q y^r conj(y)^s]
and normalized by the per-polarization power E[(|x|^2 + |y|^2)/2] raised to
half the order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import pairing
from .pairing import X, XC

MAX_ORDER = 6
NORMALIZATIONS = ("memory", "per_window", "global")


class MomentError(ValueError):
    pass


def moment_indices(max_order: int = MAX_ORDER) -> list[tuple[int, int, int, int]]:
    return [idx for idx in itertools.product(range(max_order + 1), repeat=4)
            if sum(idx) <= max_order]


def _index_of(comps) -> tuple[int, int, int, int]:
    counts = [0, 0, 0, 0]
    for c in comps:
        counts[c] += 1
    return tuple(counts)


@dataclass
class MomentSet:
    values: dict[tuple[int, int, int, int], complex]
    windowed: bool = False
    window: int | None = None
    normalization: str | None = None
    n: int = 0
    stderr: dict[tuple[int, int, int, int], float] = field(default_factory=dict)

    def __getitem__(self, idx) -> complex:
        try:
            return self.values[tuple(idx)]
        except KeyError:
            raise MomentError(f"missing moment entry (p,q,r,s)={tuple(idx)}") from None

    def of(self, comps) -> complex:
        return self[_index_of(comps)]

    def cumulant(self, comps) -> complex:
        """Joint cumulant of the listed components (ids from :mod:`w4d.pairing`)."""
        return _cumulant(self, tuple(sorted(comps)))

    def swapped(self) -> "MomentSet":
        """Moments of the sequence with x and y exchanged."""
        vals = {(r, s, p, q): v for (p, q, r, s), v in self.values.items()}
        err = {(r, s, p, q): v for (p, q, r, s), v in self.stderr.items()}
        return MomentSet(vals, self.windowed, self.window, self.normalization, self.n, err)

    def dumps(self) -> str:
        lines = ["# w4d MomentSet v1",
                 f"windowed {int(self.windowed)}",
                 f"window {self.window if self.window is not None else '-'}",
                 f"normalization {self.normalization or '-'}",
                 f"n {self.n}"]
        for idx in sorted(self.values):
            v = complex(self.values[idx])
            e = self.stderr.get(idx)
            lines.append("m {} {} {} {} {!r} {!r} {}".format(
                *idx, v.real, v.imag, "-" if e is None else repr(float(e))))
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "MomentSet":
        head: dict[str, str] = {}
        values, stderr = {}, {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "m":
                idx = tuple(int(v) for v in parts[1:5])
                values[idx] = complex(float(parts[5]), float(parts[6]))
                if parts[7] != "-":
                    stderr[idx] = float(parts[7])
            else:
                head[parts[0]] = parts[1]
        window = None if head.get("window", "-") == "-" else int(head["window"])
        norm = None if head.get("normalization", "-") == "-" else head["normalization"]
        return cls(values, bool(int(head.get("windowed", 0))), window, norm,
                   int(head.get("n", 0)), stderr)


def _cumulant(m: MomentSet, comps: tuple[int, ...]) -> complex:
    total = 0j
    for part in pairing.set_partitions(comps):
        if any(len(b) % 2 for b in part):
            continue  # odd moments vanish for sign-symmetric symbols
        k = len(part)
        term = (-1) ** (k - 1) * math.factorial(k - 1)
        for b in part:
            term *= m.of(b)
        total += term
    return total


def _moment_from_cumulants(cum, comps: tuple[int, ...]) -> complex:
    total = 0j
    for part in pairing.set_partitions(comps):
        if any(len(b) % 2 for b in part):
            continue
        term = 1 + 0j
        for b in part:
            term *= cum(tuple(sorted(b)))
        total += term
    return total


def _powers(z: np.ndarray, n: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    up = [np.ones_like(z)]
    for _ in range(n):
        up.append(up[-1] * z)
    return up, [np.conj(u) for u in up]


def _sum_complex(a: np.ndarray) -> complex:
    # numpy's pairwise summation: relative error ~ eps * log2(n)
    return complex(np.sum(a))


def _power_of(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.sum(np.abs(x) ** 2 + np.abs(y) ** 2)) / (2 * x.size)


def joint_moments(seq, max_order: int = MAX_ORDER) -> MomentSet:
    """Empirical normalized joint moments over the whole sequence."""
    n = len(seq)
    if n == 0:
        raise MomentError("empty sequence")
    p2 = _power_of(seq.x, seq.y)
    xp, xc = _powers(seq.x / math.sqrt(p2), max_order)
    yp, yc = _powers(seq.y / math.sqrt(p2), max_order)
    values, stderr = {}, {}
    for idx in moment_indices(max_order):
        p, q, r, s = idx
        prod = (xp[p] * xc[q]) * (yp[r] * yc[s])
        values[idx] = _sum_complex(prod) / n
        stderr[idx] = float(np.std(prod) / math.sqrt(n)) if n > 1 else math.inf
    return MomentSet(values, False, None, None, n, stderr)


def _sliding_mean(a: np.ndarray, w: int) -> np.ndarray:
    c = np.concatenate([[0], np.cumsum(a)])
    return (c[w:] - c[:-w]) / w


def _window_mask(seq, w: int, per_codeword: bool) -> np.ndarray:
    n_pos = len(seq) - w + 1
    if not per_codeword:
        return np.ones(n_pos, dtype=bool)
    if not seq.codeword_symbols:
        raise MomentError("per-codeword windows need codeword metadata")
    n_amp = 4 * seq.codeword_symbols
    t = np.arange(n_pos)
    first = (4 * t) // n_amp
    last = (4 * (t + w) - 1) // n_amp
    mask = first == last
    if not mask.any():
        raise MomentError(f"window {w} does not fit inside a codeword")
    return mask


def windowed_moments(seq, w: int, normalization: str = "memory",
                     per_codeword: bool = False, max_order: int = MAX_ORDER) -> MomentSet:
    """Sliding-window moments with window length ``w`` (symbols).

    ``per_window``: raw moments averaged within each window, normalized by
    the window's own power, then averaged over window positions.
    ``global``: raw moments averaged over windows, normalized once.
    ``memory``: fourth-order cumulants pick up the covariance of the
    moving-averaged pair products over the window, so that energy
    fluctuations are measured at the time scale of the channel memory;
    order-2 and order-6 cumulants are kept. The excess is scaled by
    (positions - 1) / (n - 1), so ``w = 1`` and ``w = len(seq)`` both give the
    standard moments.

    Windows never extend past the sequence ends.
    """
    n = len(seq)
    if n == 0:
        raise MomentError("empty sequence")
    if not 1 <= w <= n:
        raise MomentError(f"window length {w} outside [1, {n}]")
    if normalization not in NORMALIZATIONS:
        raise MomentError(f"unknown window normalization {normalization!r}")
    mask = _window_mask(seq, w, per_codeword)
    if normalization == "memory":
        out = _memory_moments(seq, {w: 1.0}, per_codeword, max_order)
    elif n - w + 1 == 1 or (normalization == "global" and w == 1 and mask.all()):
        out = joint_moments(seq, max_order)
    else:
        out = _sliding_moments(seq, w, mask, normalization, max_order)
    out.windowed, out.window, out.normalization = True, w, normalization
    return out


def _sliding_moments(seq, w, mask, normalization, max_order) -> MomentSet:
    xp, xc = _powers(seq.x, max_order)
    yp, yc = _powers(seq.y, max_order)
    pw = _sliding_mean((np.abs(seq.x) ** 2 + np.abs(seq.y) ** 2) / 2, w)[mask]
    n_pos = int(mask.sum())
    g = _sum_complex(pw.astype(complex)).real / n_pos
    values = {}
    for idx in moment_indices(max_order):
        p, q, r, s = idx
        order = sum(idx)
        win = _sliding_mean((xp[p] * xc[q]) * (yp[r] * yc[s]), w)[mask]
        if normalization == "per_window":
            values[idx] = _sum_complex(win / pw ** (order / 2)) / n_pos
        else:
            values[idx] = _sum_complex(win) / n_pos / g ** (order / 2)
    return MomentSet(values, True, w, normalization, len(seq))


PAIRS = [(a, b) for a in range(4) for b in range(a, 4)]


def _memory_excess(seq, prods, w, per_codeword) -> dict:
    """w * cov(moving averages) - cov(single symbols) for every pair of pair products."""
    mask = _window_mask(seq, w, per_codeword)
    ma = {pr: _sliding_mean(v, w)[mask] for pr, v in prods.items()}
    n_pos = int(mask.sum())

    def cov(u, v, n_):
        return _sum_complex(u * v) / n_ - (_sum_complex(u) / n_) * (_sum_complex(v) / n_)

    # taper: the excess vanishes both at w = 1 and when one window covers
    # the whole sequence, so both ends reduce to the joint moments exactly
    taper = (n_pos - 1) / (len(seq) - 1) if len(seq) > 1 else 0.0
    excess = {}
    for i, pa in enumerate(PAIRS):
        for pb in PAIRS[i:]:
            d = taper * (w * cov(ma[pa], ma[pb], n_pos) - cov(prods[pa], prods[pb], len(seq)))
            excess[(pa, pb)] = excess[(pb, pa)] = d
    return excess


def _memory_moments(seq, weights: dict[int, float], per_codeword, max_order) -> MomentSet:
    base = joint_moments(seq, max_order)
    weights = {w: p for w, p in weights.items() if w != 1 and w != len(seq) and p != 0}
    if not weights:
        return base
    p2 = _power_of(seq.x, seq.y)
    comps = [seq.x, np.conj(seq.x), seq.y, np.conj(seq.y)]
    comps = [c / math.sqrt(p2) for c in comps]
    prods = {pr: comps[pr[0]] * comps[pr[1]] for pr in PAIRS}
    # cumulants are linear in the excess, so a window mixture averages it
    excess = {k: 0j for k in itertools.product(PAIRS, repeat=2)}
    for w in sorted(weights):
        for k, v in _memory_excess(seq, prods, w, per_codeword).items():
            excess[k] += weights[w] * v

    @lru_cache(maxsize=None)
    def cum(comps_: tuple[int, ...]) -> complex:
        k = base.cumulant(comps_)
        if len(comps_) == 4:
            # the three ways of splitting the block into two same-time pairs
            for j in (1, 2, 3):
                a = tuple(sorted((comps_[0], comps_[j])))
                b = tuple(sorted(c for t, c in enumerate(comps_) if t not in (0, j)))
                k += excess[(a, b)]
        return k

    values = dict(base.values)
    for idx in moment_indices(max_order):
        order = sum(idx)
        if order in (4, 6):
            comps_ = tuple(c for c, cnt in enumerate(idx) for _ in range(cnt))
            values[idx] = _moment_from_cumulants(cum, comps_)
    return MomentSet(values, True, None, "memory", len(seq), {})


def mixed_window_moments(seq, weights: dict[int, float], normalization: str = "memory",
                         per_codeword: bool = False, max_order: int = MAX_ORDER) -> MomentSet:
    """Windowed moments averaged over a distribution of window lengths.

    ``weights`` maps window length to probability. In ``memory`` mode the
    window excess of the fourth-order cumulants is averaged; the other
    modes average the moments themselves. The reported ``window`` is the
    rounded mean length.
    """
    n = len(seq)
    if n == 0:
        raise MomentError("empty sequence")
    if not weights or any(p < 0 for p in weights.values()):
        raise MomentError("window weights must be nonempty and nonnegative")
    if abs(math.fsum(weights.values()) - 1.0) > 1e-9:
        raise MomentError("window weights must sum to 1")
    if any(not 1 <= int(w) <= n for w in weights):
        raise MomentError(f"window lengths must lie in [1, {n}]")
    if normalization not in NORMALIZATIONS:
        raise MomentError(f"unknown window normalization {normalization!r}")
    weights = {int(w): float(p) for w, p in weights.items()}
    if normalization == "memory":
        out = _memory_moments(seq, weights, per_codeword, max_order)
    else:
        values: dict = {}
        for w, p in sorted(weights.items()):
            for idx, v in windowed_moments(seq, w, normalization, per_codeword, max_order).values.items():
                values[idx] = values.get(idx, 0j) + p * v
        out = MomentSet(values, True, None, normalization, n, {})
    out.windowed, out.normalization = True, normalization
    out.window = int(round(math.fsum(w * p for w, p in weights.items())))
    return out


def product_moments(dist, perm=None, max_order: int = MAX_ORDER) -> MomentSet:
    """Exact moments when all four dimensions are i.i.d. with law ``dist``
    and independent uniform signs (infinite blocklength)."""
    target = dist.permuted(perm) if perm is not None else dist
    a = np.asarray(target.levels)
    pr = np.asarray(target.probs)
    vals = np.concatenate([a, -a])
    probs = np.concatenate([pr, pr]) / 2
    pts = (vals[:, None] + 1j * vals[None, :]).ravel()
    pp = (probs[:, None] * probs[None, :]).ravel()
    e2 = float(np.sum(pp * np.abs(pts) ** 2))
    pts = pts / math.sqrt(e2)

    def pol_moment(p, q):
        return complex(np.sum(pp * pts ** p * np.conj(pts) ** q))

    values = {idx: pol_moment(idx[0], idx[1]) * pol_moment(idx[2], idx[3])
              for idx in moment_indices(max_order)}
    return MomentSet(values, False, None, None, 0, {})


def gaussian_moments(max_order: int = MAX_ORDER) -> MomentSet:
    """Circularly-symmetric Gaussian, independent unit-power polarizations."""
    values = {}
    for p, q, r, s in moment_indices(max_order):
        vx = math.factorial(p) if p == q else 0
        vy = math.factorial(r) if r == s else 0
        values[(p, q, r, s)] = complex(vx * vy)
    return MomentSet(values, False, None, None, 0, {})


@dataclass
class CoefficientSet:
    """Modulation-dependent NLI coefficients.

    ``var[(q, key)]`` multiplies the variance integral of partition ``key``
    for target polarization ``q``; ``cor[(q, key)]`` multiplies the
    correlation integral used to remove the mean nonlinear rotation;
    ``power[q]`` is E|q|^2.
    """

    var: dict[tuple[str, str], complex]
    cor: dict[tuple[str, str], complex]
    power: dict[str, float]
    label: str = ""

    def max_imag(self) -> float:
        return max((abs(v.imag) for v in self.var.values()), default=0.0)

    def dumps(self) -> str:
        lines = ["# w4d CoefficientSet v1", f"label {self.label or '-'}"]
        for q, pw in sorted(self.power.items()):
            lines.append(f"power {q} {pw!r}")
        for fam, table in (("var", self.var), ("cor", self.cor)):
            for (q, key), v in sorted(table.items()):
                lines.append(f"{fam} {q} {key} {complex(v).real!r} {complex(v).imag!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "CoefficientSet":
        var, cor, power, label = {}, {}, {}, ""
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "label":
                label = "" if parts[1] == "-" else parts[1]
            elif parts[0] == "power":
                power[parts[1]] = float(parts[2])
            else:
                table = var if parts[0] == "var" else cor
                table[(parts[1], parts[2])] = complex(float(parts[3]), float(parts[4]))
        return cls(var, cor, power, label)


def _partition_coefficient(cum, family: str, blocks, q: str) -> complex:
    slots = pairing.slots_for(family)
    total = 0j
    for p in pairing.POLS:
        for pp in pairing.POLS:
            if family == "cor" and pp != "x":
                continue  # no second copy in the correlation family
            term = 1 + 0j
            for b in blocks:
                comps = tuple(sorted(pairing.component(slots[i], p, pp, q) for i in b))
                if not _parity_ok(comps):
                    term = 0
                    break
                term *= cum(comps)
            total += term
    return total


def _parity_ok(comps) -> bool:
    nx = sum(1 for c in comps if c in (X, XC))
    return nx % 2 == 0 and (len(comps) - nx) % 2 == 0


def coefficients_4d(m: MomentSet, label: str = "4d") -> CoefficientSet:
    """Coefficients from the joint 4D cumulants (polarizations may be dependent)."""
    cache: dict[tuple[int, ...], complex] = {}

    def cum(comps):
        if comps not in cache:
            cache[comps] = m.cumulant(comps)
        return cache[comps]

    var, cor = {}, {}
    for q in pairing.POLS:
        for key, blocks in pairing.partitions("var"):
            var[(q, key)] = _partition_coefficient(cum, "var", blocks, q)
        for key, blocks in pairing.partitions("cor"):
            cor[(q, key)] = _partition_coefficient(cum, "cor", blocks, q)
    power = {"x": m[(1, 1, 0, 0)].real, "y": m[(0, 0, 1, 1)].real}
    return CoefficientSet(var, cor, power, label)


@dataclass(frozen=True)
class EgnCoefficients:
    """Per-polarization EGN excess-kurtosis terms."""

    phi_x: float
    psi_x: float
    phi_y: float
    psi_y: float
    mu2_x: float = 1.0
    mu2_y: float = 1.0


def coefficients_egn(m: MomentSet) -> EgnCoefficients:
    """Phi = mu4/mu2^2 - 2 and Psi = mu6/mu2^3 - 9 mu4/mu2^2 + 12 per polarization."""
    out = []
    for two, four, six in (((1, 1, 0, 0), (2, 2, 0, 0), (3, 3, 0, 0)),
                           ((0, 0, 1, 1), (0, 0, 2, 2), (0, 0, 3, 3))):
        mu2, mu4, mu6 = m[two].real, m[four].real, m[six].real
        if mu2 <= 0:
            raise MomentError("zero second moment")
        k = mu4 / mu2 ** 2
        out.append((k - 2, mu6 / mu2 ** 3 - 9 * k + 12, mu2))
    (px, sx, mx), (py, sy, my) = out
    return EgnCoefficients(px, sx, py, sy, mx, my)


def default_window(link, grid) -> int:
    """Dispersion memory 2*pi*|beta2|*L_total*B_ch*R_sym in symbols, clamped to [1, 4096]."""
    w = 2 * math.pi * abs(link.beta2) * link.total_length * grid.b_ch * grid.rs
    return int(min(max(round(w), 1), 4096))


def effective_window(link, grid) -> int:
    """Dispersion memory accumulated over one span's effective length,
    2*pi*|beta2|*L_eff*B_ch*R_sym symbols (at least 1).

    Most of the NLI of a span is generated within L_eff of its input, so
    this is the number of neighbouring symbols whose energies a symbol
    mixes with while it picks up nonlinear distortion.
    """
    w = 2 * math.pi * abs(link.beta2) * link.effective_length * grid.b_ch * grid.rs
    return int(min(max(round(w), 1), 4096))


def spread_window_weights(link, grid, max_window: int = 4096) -> dict[int, float]:
    """Distribution of the dispersive spread across one span, in symbols.

    At distance z into a span a pulse has spread over
    2*pi*|beta2|*z*B_ch*R_sym symbols, and the nonlinear field generated at
    z carries the weight exp(-alpha z) (power times remaining loss). The
    spread is rounded to whole windows (at least 1); each window length
    gets the exp(-alpha z) mass of the z-interval that rounds onto it. The
    mean window is a little below :func:`effective_window` because the span
    is finite.
    """
    kappa = 2 * math.pi * abs(link.beta2) * grid.b_ch * grid.rs  # symbols per metre
    L, a = link.span_m, link.alpha
    if kappa * L < 0.5:
        return {1: 1.0}

    def mass(z0, z1):
        return (z1 - z0) if a == 0 else math.exp(-a * z0) - math.exp(-a * z1)

    total = mass(0.0, L)
    out: dict[int, float] = {}
    w_top = min(int(round(kappa * L)), max_window)
    for w in range(1, w_top + 1):
        z0 = 0.0 if w == 1 else (w - 0.5) / kappa
        z1 = L if w == w_top else min((w + 0.5) / kappa, L)
        if z1 > z0:
            out[w] = mass(z0, z1) / total
    return out
