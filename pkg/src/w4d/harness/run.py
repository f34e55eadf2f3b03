"""Model-vs-SSFM comparisons and parameter sweeps."""
from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .. import moments as mom
from .. import shaping as sh
from .. import ssfm
from ..nli import models as md
from ..nli.chi import all_chi
from .config import ExperimentConfig

log = logging.getLogger(__name__)


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResultRow:
    model: str  # display name ("W-4D", ...) or "SSFM"
    N: int
    H: float  # target amplitude entropy, bits
    perm: int
    w: int  # 0 for unwindowed models
    p_dbm: float
    snr_db: float
    stderr_db: float
    gap_db: float | None = None  # model - SSFM at the same point
    seeds: str = ""
    config: str = ""

    def key(self) -> tuple:
        return (self.H, self.N, self.perm, self.model, self.w, self.p_dbm)


FIELDS = [f for f in ResultRow.__dataclass_fields__]


# caching ---------------------------------------------------------------

class RowCache:
    """Append-only JSON-lines store keyed by a hash of the job description."""

    def __init__(self, path: Path | None):
        self.path = Path(path) if path else None
        self.data: dict[str, object] = {}
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.data[rec["k"]] = rec["v"]

    @staticmethod
    def key(desc: dict) -> str:
        return hashlib.sha256(json.dumps(desc, sort_keys=True, default=str).encode()).hexdigest()[:24]

    def get(self, desc):
        return self.data.get(self.key(desc))

    def put(self, desc, value):
        k = self.key(desc)
        self.data[k] = value
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(json.dumps({"k": k, "v": value}) + "\n")
        return value


# simulation job (module level so worker processes can pickle it) -------

def ssfm_snr(cfg: ExperimentConfig, dist, perm, n_block, seed, p_watt) -> float:
    chans = channel_sequences(cfg, dist, perm, n_block, seed)
    snr, _ = ssfm.simulate(chans, cfg.wdm, cfg.link, p_watt, cfg.ssfm.config(seed))
    return snr


def channel_sequences(cfg: ExperimentConfig, dist, perm, n_block: int, seed: int, upto=None):
    """Per-channel symbol sequences of one Monte-Carlo realization.

    Channels are drawn in grid order from one generator, so ``upto`` (stop
    after that channel) returns a prefix of the full realization."""
    rng = np.random.default_rng([seed, n_block, perm.index, int(round(sh.entropy(dist) * 1e9))])
    n = cfg.ssfm.n_symbols
    out = {}
    for c in cfg.wdm.channels:
        if cfg.shaping.iid:
            out[c] = sh.iid_sequence(dist, n, rng, perm)
        else:
            out[c] = sh.shaped_sequence(dist, n_block, n, rng, perm)
        if c == upto:
            break
    return out


class Runner:
    """Evaluates models and (optionally) the SSFM on configured points.

    ``simulator(cfg, dist, perm, N, seed, p_watt) -> SNR dB`` defaults to
    the split-step simulation; tests inject stand-ins.
    """

    def __init__(self, cfg: ExperimentConfig, simulator=None, cache: bool = True):
        self.cfg = cfg
        self.simulator = simulator or ssfm_snr
        self.chis = all_chi(cfg.link, cfg.wdm)
        self.ase = md.ase_power(cfg.link, cfg.wdm)
        path = Path(cfg.output) / ".rows.jsonl" if cache else None
        self.cache = RowCache(path)
        self.base = {"link": asdict(cfg.link), "wdm": asdict(cfg.wdm),
                     "ssfm": asdict(cfg.ssfm), "iid": cfg.shaping.iid}

    # windows
    def windows(self) -> list:
        """Window specs to evaluate: ints, or one {length: weight} mixture."""
        w = self.cfg.window
        if w.policy == "spread":
            return [mom.spread_window_weights(self.cfg.link, self.cfg.wdm)]
        if w.policy == "fixed":
            return [int(w.value)]
        if w.policy == "default":
            return [mom.default_window(self.cfg.link, self.cfg.wdm)]
        if w.policy == "effective":
            return [mom.effective_window(self.cfg.link, self.cfg.wdm)]
        return [int(v) for v in w.values]

    # model side
    def _eta(self, model, dist, perm, n_block, seed, w) -> float:
        if model in ("gn", "egn", "4d"):
            src = None if model == "gn" else mom.product_moments(dist, perm)
            return md.eta_coefficients(self.chis, md.model_coefficients(model, src)).total
        desc = {**self.base, "job": "eta", "model": model, "H": sh.entropy(dist),
                "probs": dist.probs, "perm": perm.order, "N": n_block, "seed": seed,
                "w": sorted(w.items()) if isinstance(w, dict) else w,
                "norm": self.cfg.window.normalization}
        hit = self.cache.get(desc)
        if hit is not None:
            return hit
        seq = channel_sequences(self.cfg, dist, perm, n_block, seed, upto=0)[0]
        w_eff = w if isinstance(w, dict) else min(w, len(seq))
        c = md.model_coefficients(model, seq, w=w_eff, normalization=self.cfg.window.normalization)
        return self.cache.put(desc, md.eta_coefficients(self.chis, c).total)

    def model_rows(self, dist, perm, n_block, models=None, p_fixed_dbm=None) -> list[ResultRow]:
        rows = []
        h = sh.entropy(dist)
        seeds = self.cfg.seeds
        for model in models or self.cfg.models:
            ws = self.windows() if model.startswith("w") else [0]
            for w in ws:
                etas = np.array([self._eta(model, dist, perm, n_block, s, w) for s in seeds])
                if p_fixed_dbm is not None:
                    p = md.watts(p_fixed_dbm)
                elif self.cfg.power.policy == "fixed":
                    p = md.watts(self.cfg.power.dbm)
                else:
                    p = md.optimal_power(float(etas.mean()), self.ase)
                snrs = np.array([md.snr_db(p, self.ase, e) for e in etas])
                rows.append(ResultRow(md.MODEL_NAMES[model], n_block, round(h, 9), perm.index, _window_label(w),
                                      round(md.dbm(p), 6), float(snrs.mean()), _stderr(snrs),
                                      seeds=";".join(map(str, seeds)), config=self.cfg.hash()))
        return rows

    # SSFM side
    def _ssfm_at(self, dist, perm, n_block, p_dbm) -> np.ndarray:
        p_dbm = round(p_dbm, 6)
        todo, vals = [], {}
        for s in self.cfg.seeds:
            desc = {**self.base, "job": "ssfm", "probs": dist.probs, "perm": perm.order,
                    "N": n_block, "seed": s, "p": p_dbm}
            hit = self.cache.get(desc)
            if hit is None:
                todo.append((s, desc))
            else:
                vals[s] = hit
        if todo:
            args = [(self.cfg, dist, perm, n_block, s, md.watts(p_dbm)) for s, _ in todo]
            if self.cfg.workers > 1 and len(args) > 1:
                with ProcessPoolExecutor(max_workers=self.cfg.workers) as ex:
                    res = list(ex.map(self.simulator, *zip(*args)))
            else:
                res = [self.simulator(*a) for a in args]
            for (s, desc), v in zip(todo, res):
                vals[s] = self.cache.put(desc, float(v))
        return np.array([vals[s] for s in self.cfg.seeds])

    def ssfm_row(self, dist, perm, n_block, p_center_dbm=None, p_fixed_dbm=None) -> ResultRow:
        if not self.cfg.ssfm.enabled:
            raise HarnessError("SSFM is disabled in this configuration")
        if p_fixed_dbm is not None or self.cfg.power.policy == "fixed":
            p = p_fixed_dbm if p_fixed_dbm is not None else self.cfg.power.dbm
        else:
            p, _ = md.grid_search_power(lambda x: float(self._ssfm_at(dist, perm, n_block, x).mean()),
                                        round(p_center_dbm * 4) / 4)
        snrs = self._ssfm_at(dist, perm, n_block, p)
        return ResultRow("SSFM", n_block, round(sh.entropy(dist), 9), perm.index, 0, round(p, 6),
                         float(snrs.mean()), _stderr(snrs),
                         seeds=";".join(map(str, self.cfg.seeds)), config=self.cfg.hash())

    def point(self, dist, perm, n_block, with_ssfm: bool, models=None, p_fixed_dbm=None):
        rows = self.model_rows(dist, perm, n_block, models, p_fixed_dbm)
        if with_ssfm:
            center = None
            if p_fixed_dbm is None and self.cfg.power.policy != "fixed":
                # start the SSFM search at the W-4D optimum (closest to the SSFM one)
                w = self.windows()[0]
                eta = np.mean([self._eta("w4d", dist, perm, n_block, s, w) for s in self.cfg.seeds])
                center = md.dbm(md.optimal_power(float(eta), self.ase))
            ref = self.ssfm_row(dist, perm, n_block, center, p_fixed_dbm)
            rows = [replace(r, gap_db=r.snr_db - ref.snr_db) for r in rows] + [ref]
        return rows


def _window_label(w) -> int:
    """Window column of a row: the length, or the rounded mean of a mixture."""
    if isinstance(w, dict):
        return int(round(sum(k * p for k, p in w.items())))
    return int(w)


def _stderr(x: np.ndarray) -> float:
    if len(x) < 2:
        return 0.0
    return float(np.std(x, ddof=1) / math.sqrt(len(x)))


def _want_ssfm(cfg, gap):
    if gap and not cfg.ssfm.enabled:
        raise HarnessError("a model-vs-SSFM gap was requested but the SSFM is disabled")
    return cfg.ssfm.enabled


def run_compare(cfg: ExperimentConfig, simulator=None, gap: bool | None = None) -> list[ResultRow]:
    """Every configured (blocklength, permutation) point: models plus SSFM and gaps."""
    with_ssfm = _want_ssfm(cfg, cfg.ssfm.enabled if gap is None else gap)
    r = Runner(cfg, simulator)
    dist = cfg.shaping.distribution()
    rows = []
    for perm in cfg.shaping.permutation_list(dist):
        for n in cfg.shaping.blocklengths:
            rows += r.point(dist, perm, n, with_ssfm)
    return sort_rows(rows)


def sweep_blocklength(cfg: ExperimentConfig, blocklengths, simulator=None) -> list[ResultRow]:
    cfg = cfg.replace(shaping={**_asdict(cfg.shaping), "blocklengths": list(blocklengths)})
    return run_compare(cfg, simulator)


def sweep_entropy(cfg: ExperimentConfig, entropies, simulator=None,
                  ssfm_perms=None, models=("4d", "w4d")) -> list[ResultRow]:
    """All distinct permutations (24 for distinct probabilities) per entropy
    under the given models; SSFM on
    ``ssfm_perms`` (permutation ids, default all) when enabled. Uses the
    first configured blocklength."""
    r = Runner(cfg, simulator)
    n = cfg.shaping.blocklengths[0]
    rows = []
    for h in entropies:
        dist = cfg.shaping.distribution(entropy=h)
        with warnings.catch_warnings():
            # repeated probabilities (the uniform point) leave fewer distinct permutations
            warnings.simplefilter("ignore", UserWarning)
            perms = sh.permutations_4d(dist)
        for perm in perms:
            spot = cfg.ssfm.enabled and (ssfm_perms is None or perm.index in ssfm_perms)
            rows += r.point(dist, perm, n, spot, models)
    return sort_rows(rows)


def entropy_summary(rows: list[ResultRow]) -> list[dict]:
    """Per entropy and model: max and min SNR over permutations, and the
    largest |gap| where SSFM rows exist."""
    out = {}
    for row in rows:
        d = out.setdefault((row.H, row.model), {"H": row.H, "model": row.model, "max": -np.inf,
                                                "min": np.inf, "max_abs_gap": None})
        d["max"] = max(d["max"], row.snr_db)
        d["min"] = min(d["min"], row.snr_db)
        if row.gap_db is not None:
            g = abs(row.gap_db)
            d["max_abs_gap"] = g if d["max_abs_gap"] is None else max(d["max_abs_gap"], g)
    return [out[k] for k in sorted(out)]


def sweep_power(cfg: ExperimentConfig, powers_dbm, simulator=None) -> list[ResultRow]:
    with_ssfm = cfg.ssfm.enabled
    r = Runner(cfg, simulator)
    dist = cfg.shaping.distribution()
    perm = cfg.shaping.permutation_list(dist)[0]
    rows = []
    for n in cfg.shaping.blocklengths:
        for p in powers_dbm:
            rows += r.point(dist, perm, n, with_ssfm, p_fixed_dbm=float(p))
    return sort_rows(rows)


def sweep_window(cfg: ExperimentConfig, windows, simulator=None) -> list[ResultRow]:
    models = [m for m in cfg.models if m.startswith("w")] or ["w4d"]
    cfg = cfg.replace(window={**_asdict(cfg.window), "policy": "sweep", "values": list(windows)},
                      models=models)
    return run_compare(cfg, simulator)


def _asdict(x):
    d = asdict(x)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def sort_rows(rows: list[ResultRow]) -> list[ResultRow]:
    return sorted(rows, key=ResultRow.key)
