"""Command-line entry point: predict, simulate, sweep, compare, cache."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import moments as mom
from .harness import config as hc
from .harness import emit as em
from .harness import run as hr
from .nli import chi
from .nli import models as md


def _config(arg: str) -> hc.ExperimentConfig:
    if arg in hc.PRESETS and not Path(arg).exists():
        return hc.preset(arg)
    return hc.load(arg)


def _values(text: str, kind=float) -> list:
    return [kind(v) for v in text.replace(",", " ").split()]


def cmd_predict(a) -> int:
    cfg = _config(a.config)
    if a.window is not None:
        cfg = cfg.replace(window={"policy": "fixed", "value": a.window,
                                  "normalization": cfg.window.normalization})
    runner = hr.Runner(cfg, cache=not a.no_cache)
    dist = cfg.shaping.distribution()
    perm = cfg.shaping.permutation_list(dist)[0]
    n = a.blocklength or cfg.shaping.blocklengths[0]
    rows = runner.model_rows(dist, perm, n, [a.model], a.power)
    for r in rows:
        print(f"{r.model} N={r.N} w={r.w} P={r.p_dbm:.2f} dBm SNR={r.snr_db:.3f} dB "
              f"(+-{r.stderr_db:.3f})")
    return 0


def cmd_simulate(a) -> int:
    cfg = _config(a.config)
    dist = cfg.shaping.distribution()
    perm = cfg.shaping.permutation_list(dist)[0]
    n = a.blocklength or cfg.shaping.blocklengths[0]
    if a.power is None:
        eta = md.eta_coefficients(chi.all_chi(cfg.link, cfg.wdm),
                                  md.model_coefficients("4d", mom.product_moments(dist, perm))).total
        p = md.optimal_power(eta, md.ase_power(cfg.link, cfg.wdm))
    else:
        p = md.watts(a.power)
    snr = hr.ssfm_snr(cfg, dist, perm, n, a.seed, p)
    print(f"SSFM N={n} seed={a.seed} P={md.dbm(p):.2f} dBm SNR={snr:.3f} dB")
    return 0


def cmd_sweep(a) -> int:
    cfg = _config(a.config)
    if a.no_ssfm:
        cfg = cfg.replace(ssfm={**hr._asdict(cfg.ssfm), "enabled": False})
    if a.param == "blocklength":
        rows, x = hr.sweep_blocklength(cfg, _values(a.values, int)), "N"
    elif a.param == "entropy":
        rows, x = hr.sweep_entropy(cfg, _values(a.values)), "H"
        for d in hr.entropy_summary(rows):
            gap = "" if d["max_abs_gap"] is None else f" max|gap|={d['max_abs_gap']:.3f}"
            print(f"H={d['H']:.3f} {d['model']}: max={d['max']:.3f} min={d['min']:.3f}{gap}")
    elif a.param == "power":
        rows, x = hr.sweep_power(cfg, _values(a.values)), "p_dbm"
    else:
        rows, x = hr.sweep_window(cfg, _values(a.values, int)), "w"
    for path in em.emit(rows, cfg.output, stem=f"sweep_{a.param}", x_key=x):
        print(path)
    return 0


def cmd_compare(a) -> int:
    cfg = _config(a.config)
    rows = hr.run_compare(cfg)
    for r in rows:
        gap = "" if r.gap_db is None else f" gap={r.gap_db:+.3f}"
        print(f"{r.model:6s} N={r.N:<6d} w={r.w:<4d} P={r.p_dbm:6.2f} SNR={r.snr_db:.3f}{gap}")
    for path in em.emit(rows, cfg.output, stem="compare"):
        print(path)
    return 0


def cmd_cache(a) -> int:
    d = chi.cache_dir()
    files = sorted(d.glob("chi_*.txt")) if d.exists() else []
    if a.action == "show":
        print(f"chi cache: {d} ({len(files)} tables)")
        for f in files:
            head = f.read_text().splitlines()[:2]
            print(f"  {f.name}  {head[1][2:] if len(head) > 1 else ''}")
    else:
        for f in files:
            f.unlink()
        print(f"removed {len(files)} chi tables from {d}")
        if a.config:
            rows = Path(_config(a.config).output) / ".rows.jsonl"
            if rows.exists():
                rows.unlink()
                print(f"removed {rows}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="w4d", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("predict", help="analytical SNR of one model")
    s.add_argument("--config", required=True, help="YAML/JSON file or preset name (desk, full)")
    s.add_argument("--model", required=True, choices=md.MODELS)
    s.add_argument("--window", type=int)
    s.add_argument("--blocklength", type=int)
    s.add_argument("--power", type=float, help="launch power dBm (default: model optimum)")
    s.add_argument("--no-cache", action="store_true")
    s.set_defaults(fn=cmd_predict)

    s = sub.add_parser("simulate", help="one SSFM run")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--blocklength", type=int)
    s.add_argument("--power", type=float)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("sweep", help="sweep one parameter and write CSV + plot script")
    s.add_argument("--config", required=True)
    s.add_argument("--param", required=True, choices=["blocklength", "entropy", "power", "window"])
    s.add_argument("--values", required=True, help="comma-separated list")
    s.add_argument("--no-ssfm", action="store_true", help="models only")
    s.set_defaults(fn=cmd_sweep)

    s = sub.add_parser("compare", help="models vs SSFM on every configured point")
    s.add_argument("--config", required=True)
    s.set_defaults(fn=cmd_compare)

    s = sub.add_parser("cache", help="inspect or clear cached chi tables")
    s.add_argument("action", choices=["show", "clear"])
    s.add_argument("--config", help="also clear this experiment's row cache")
    s.set_defaults(fn=cmd_cache)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except (hc.ConfigError, hr.HarnessError, md.ModelError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
