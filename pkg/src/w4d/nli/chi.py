"""Link integrals for each partition of the pairing table.

The channel under test sits at the grid center. Every channel enters
through frequency triplets (a, b, c) whose mixing product falls (at least
partly) on the channel under test. For each triplet the kernel is sampled
on a uniform M x M x M grid over the three input Nyquist bands, masked to
outputs inside the center band, and transformed to the symbol-index
domain. That makes the delta constraints of every partition plain index
identifications. The grid is a rectangle rule for the frequency integrals;
M is refined until the result is stable.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import string
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import pairing
from .config import LinkConfig, WdmConfig
from .kernel import link_kernel

log = logging.getLogger(__name__)

KINDS = ("SCI", "XCI", "MCI")
CACHE_VERSION = 3
GRID_SIZES = (64, 96, 128, 192, 256, 384)


class ChiConvergenceError(RuntimeError):
    def __init__(self, msg, estimate=None, bound=None):
        super().__init__(msg)
        self.estimate = estimate
        self.bound = bound


@dataclass
class ChiIntegrals:
    """Per kind: ``var[key]`` variance integrals, ``cor[key]`` correlation
    integrals (1/W^2 and 1/W respectively, prefactors included)."""

    kind: str
    var: dict[str, complex]
    cor: dict[str, complex]
    grid: int = 0
    rel_error: float = 0.0

    def gn_entry(self) -> float:
        return self.var.get(pairing.GN_KEY, 0j).real

    def scaled(self, c: float) -> "ChiIntegrals":
        return ChiIntegrals(self.kind, {k: v * c for k, v in self.var.items()},
                            {k: v * np.sqrt(c) for k, v in self.cor.items()},
                            self.grid, self.rel_error)


def triplets(grid: WdmConfig) -> list[tuple[int, int, int]]:
    """Channel triplets (a, b, c) whose product band f_a - f_b + f_c overlaps
    the channel under test. With R_sym close to the spacing this includes
    offsets a - b + c = +-1, whose products spill partly into the center band."""
    ch = grid.channels
    theta = grid.df / grid.rs
    return [(a, b, c) for a in ch for b in ch for c in ch
            if abs(a - b + c) * theta < 2 - 1e-12]


def kind_of(channels) -> str:
    s = set(channels)
    if s == {0}:
        return "SCI"
    if len(s) == 2 and 0 in s:
        return "XCI"
    return "MCI"


def kernel_tensor(link: LinkConfig, grid: WdmConfig, trip, M: int, dtype=np.complex128):
    """X[k, l, m] for triplet (a, b, c); indices in FFT order (0 = time 0).

    k, l, m are symbol indices of channels a, b, c in their own frames;
    the output frequency is integrated over the center band.
    """
    a, b, c = trip
    idx = np.fft.fftfreq(M, 1.0 / M).astype(int)
    nu = idx / M
    rs, df = grid.rs, grid.df
    shift = (a - b + c) * df / rs
    i1 = idx[:, None, None]
    i2 = idx[None, :, None]
    i3 = idx[None, None, :]
    out = (i1 + i2 - i3) / M + shift
    inside = (out >= -0.5) & (out < 0.5)
    f1 = a * df + nu[:, None, None] * rs
    f2 = c * df + nu[None, :, None] * rs
    F = np.where(inside, link_kernel(f1, f2, link, out * rs), 0)
    # axes (i1 -> k, i2 -> m, i3 -> l); exp(-j2pi(i1 k + i2 m - i3 l)/M)
    G = np.fft.fft(F, axis=0)
    G = np.fft.fft(G, axis=1)
    G = np.fft.ifft(G, axis=2) * M
    X = np.transpose(G, (0, 2, 1)) / M ** 3
    return X.astype(dtype)


def _einsum_var(blocks, X1, X2c):
    letters = {}
    for bi, blk in enumerate(blocks):
        for s in blk:
            letters[s] = string.ascii_lowercase[bi]
    s1 = "".join(letters[i] for i in range(3))
    s2 = "".join(letters[i] for i in range(3, 6))
    return complex(np.einsum(f"{s1},{s2}->", X1, X2c, optimize=True))


def _einsum_cor(blocks, X1):
    o = 3
    fixed = set()
    letters = {}
    for bi, blk in enumerate(blocks):
        for s in blk:
            if o in blk:
                fixed.add(s)
            letters[s] = string.ascii_lowercase[bi]
    sl = tuple(0 if ax in fixed else slice(None) for ax in range(3))
    sub = "".join(letters[ax] for ax in range(3) if ax not in fixed)
    Y = X1[sl]
    if not sub:
        return complex(Y)
    return complex(np.einsum(f"{sub}->", Y))


def _compute(link: LinkConfig, grid: WdmConfig, M: int) -> dict[str, ChiIntegrals]:
    trips = triplets(grid)
    dtype = np.complex128  # single precision loses ~1e-3 in the contractions
    var_parts = pairing.partitions("var")
    cor_parts = pairing.partitions("cor")
    var = {k: {} for k in KINDS}
    cor = {k: {} for k in KINDS}
    tensors = {t: kernel_tensor(link, grid, t, M, dtype) for t in trips}
    for t1 in trips:
        X1 = tensors[t1]
        kind = kind_of(t1)
        for key, blocks in cor_parts:
            roles = list(t1) + [0]
            if any(len({roles[s] for s in b}) > 1 for b in blocks):
                continue
            cor[kind][key] = cor[kind].get(key, 0j) + _einsum_cor(blocks, X1)
        for t2 in trips:
            X2c = None
            roles = list(t1) + list(t2)
            kind2 = kind_of(t2)
            for key, blocks in var_parts:
                if any(len({roles[s] for s in b}) > 1 for b in blocks):
                    continue
                if X2c is None:
                    X2c = np.conj(tensors[t2])
                v = _einsum_var(blocks, X1, X2c)
                # a cross term between two triplets is shared by their kinds,
                # the same way the projection below splits its cross terms
                for kk in (kind, kind2):
                    var[kk][key] = var[kk].get(key, 0j) + v / 2
    # (8/9 gamma)^2 (P/2)^3 / P^3 summed over both target polarizations -> 1/8
    pref = (8 / 9 * link.gamma_si) ** 2 / 8
    return {k: ChiIntegrals(k, {kk: v * pref for kk, v in var[k].items()},
                            {kk: v * np.sqrt(pref) for kk, v in cor[k].items()}, M)
            for k in KINDS}


def _initial_grid(link: LinkConfig, grid: WdmConfig) -> int:
    h = grid.n_channels // 2
    # walk-off (or dispersive spread) of the farthest channel, in symbols
    spread = 2 * np.pi * abs(link.beta2) * link.total_length * grid.rs * max(grid.rs, h * grid.df)
    need = spread + 32
    for m in GRID_SIZES:
        if m >= need:
            return m
    return GRID_SIZES[-1]


def _total_gn(res: dict[str, ChiIntegrals]) -> float:
    return sum(r.gn_entry() for r in res.values())


def _cache_key(link, grid, rtol, max_grid) -> str:
    blob = json.dumps({"v": CACHE_VERSION, "link": asdict(link), "grid": asdict(grid),
                       "rtol": rtol, "max": max_grid}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def cache_dir() -> Path:
    return Path(os.environ.get("W4D_CACHE", Path.home() / ".cache" / "w4d"))


def _save(path: Path, res: dict[str, ChiIntegrals], link, grid) -> None:
    lines = [f"# w4d chi table v{CACHE_VERSION}",
             "# " + json.dumps({"link": asdict(link), "grid": asdict(grid)}, sort_keys=True)]
    for kind in KINDS:
        r = res[kind]
        lines.append(f"meta {kind} {r.grid} {r.rel_error!r}")
        for fam, table in (("var", r.var), ("cor", r.cor)):
            for key in sorted(table):
                v = complex(table[key])
                lines.append(f"{fam} {kind} {key} {v.real!r} {v.imag!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def _load(path: Path) -> dict[str, ChiIntegrals]:
    text = path.read_text().splitlines()
    if not text or text[0] != f"# w4d chi table v{CACHE_VERSION}":
        raise ValueError("chi cache version mismatch")
    res = {k: ChiIntegrals(k, {}, {}) for k in KINDS}
    for line in text[1:]:
        if line.startswith("#") or not line:
            continue
        parts = line.split()
        if parts[0] == "meta":
            res[parts[1]].grid = int(parts[2])
            res[parts[1]].rel_error = float(parts[3])
        else:
            table = res[parts[1]].var if parts[0] == "var" else res[parts[1]].cor
            table[parts[2]] = complex(float(parts[3]), float(parts[4]))
    return res


def all_chi(link: LinkConfig, grid: WdmConfig, rtol: float = 1e-3,
            max_grid: int = 256, use_cache: bool = True) -> dict[str, ChiIntegrals]:
    """SCI, XCI and MCI integrals, refined until successive grids agree to ``rtol``.

    gamma enters only as a prefactor, so the integrals are computed at
    gamma = 1 /W/km and rescaled.
    """
    if link.gamma == 0:
        return {k: ChiIntegrals(k, {kk: 0j for kk, _ in pairing.partitions("var")},
                                {kk: 0j for kk, _ in pairing.partitions("cor")})
                for k in KINDS}
    unit = link.replace(gamma=1.0)
    scale = link.gamma ** 2
    path = cache_dir() / f"chi_{_cache_key(unit, grid, rtol, max_grid)}.txt"
    if use_cache and path.exists():
        res = _load(path)
    else:
        res = _refine(unit, grid, rtol, max_grid)
        if use_cache:
            _save(path, res, unit, grid)
    return {k: r.scaled(scale) for k, r in res.items()}


def _refine(link, grid, rtol, max_grid):
    sizes = [m for m in GRID_SIZES if m <= max_grid]
    start = _initial_grid(link, grid)
    sizes = [m for m in sizes if m >= min(start, sizes[-1])]
    prev = None
    for M in sizes:
        log.info("chi integrals on %d^3 grid", M)
        res = _compute(link, grid, M)
        if prev is not None:
            a, b = _total_gn(prev), _total_gn(res)
            err = abs(b - a) / abs(b)
            for r in res.values():
                r.rel_error = err
            if err <= rtol:
                return res
        prev = res
    est = _total_gn(prev) if prev else None
    bound = prev and next(iter(prev.values())).rel_error
    raise ChiConvergenceError(
        f"chi integrals not converged to {rtol} at grid {sizes[-1] if sizes else None}"
        f" (last relative change {bound})", est, bound)


def chi_integrals(link: LinkConfig, grid: WdmConfig, kind: str, **kw) -> ChiIntegrals:
    if kind not in KINDS:
        raise ValueError(f"unknown NLI kind {kind!r}")
    return all_chi(link, grid, **kw)[kind]
