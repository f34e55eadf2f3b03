"""CSV and plot-script output. Byte-identical for identical rows."""
from __future__ import annotations

import csv
import io
import os
from pathlib import Path

from .run import FIELDS, HarnessError, ResultRow, sort_rows

# column documentation, written as the first lines of the plot script and the README
HEADER_DOC = {
    "model": "model name (GN, EGN, W-EGN, 4D, W-4D) or SSFM",
    "N": "CCDM blocklength in amplitudes",
    "H": "target amplitude entropy in bits per real dimension (sign excluded)",
    "perm": "permutation id (0 = identity)",
    "w": "window length in symbols (0 = unwindowed; rounded mean length for the spread mixture)",
    "p_dbm": "launch power per channel, dBm",
    "snr_db": "effective SNR, dB (mean over seeds)",
    "stderr_db": "standard error of the mean over seeds, dB",
    "gap_db": "model minus SSFM for the same N, H and perm, dB; each at its own optimal power "
              "unless the power is fixed (empty without SSFM)",
    "seeds": "Monte-Carlo seeds, ';'-separated",
    "config": "experiment config hash",
}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def to_csv_text(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in sort_rows(rows):
        w.writerow([_fmt(getattr(r, f)) for f in FIELDS])
    return buf.getvalue()


def read_csv(path) -> list[ResultRow]:
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(ResultRow(rec["model"], int(rec["N"]), float(rec["H"]), int(rec["perm"]),
                                 int(rec["w"]), float(rec["p_dbm"]), float(rec["snr_db"]),
                                 float(rec["stderr_db"]),
                                 float(rec["gap_db"]) if rec["gap_db"] else None,
                                 rec["seeds"], rec["config"]))
    return out


PLOT_SCRIPT = '''"""Plot {csv_name}. Requires matplotlib. Usage: python {script_name} [out.png]"""
import csv
import os
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

# columns:
{doc}

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{csv_name}"), newline="") as fh:
    rows = list(csv.DictReader(fh))
x_key = "{x_key}"
series = defaultdict(list)
for r in rows:
    label = r["model"] + (" w=" + r["w"] if r["w"] not in ("", "0") else "")
    series[label].append((float(r[x_key]), float(r["snr_db"]), float(r["stderr_db"])))
fig, ax = plt.subplots(figsize=(6, 4))
for label in sorted(series):
    pts = sorted(series[label])
    xs, ys, es = zip(*pts)
    style = "k-o" if label == "SSFM" else "--s"
    ax.errorbar(xs, ys, yerr=es, fmt=style, label=label, capsize=2, ms=4)
{xscale}
ax.set_xlabel("{x_label}")
ax.set_ylabel("effective SNR [dB]")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "{png_name}", dpi=150)
'''

X_AXES = {
    "N": ("blocklength N", "ax.set_xscale('log')"),
    "H": ("entropy H [bit/amplitude]", ""),
    "p_dbm": ("launch power [dBm]", ""),
    "w": ("window w [symbols]", "ax.set_xscale('log')"),
}


def emit(rows: list[ResultRow], out_dir, stem: str = "results", x_key: str = "N",
         plot: bool = True) -> list[Path]:
    """Write ``stem.csv`` (and ``plot_stem.py``). Nothing is written on error."""
    if not rows:
        raise HarnessError("nothing to emit: empty result table")
    if x_key not in X_AXES:
        raise HarnessError(f"unknown x axis {x_key!r}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise HarnessError(f"cannot create output directory {out}: {e}") from None
    if not os.access(out, os.W_OK):
        raise HarnessError(f"output directory {out} is not writable")
    files = {out / f"{stem}.csv": to_csv_text(rows)}
    if plot:
        label, scale = X_AXES[x_key]
        doc = "\n".join(f"#   {k}: {v}" for k, v in HEADER_DOC.items())
        files[out / f"plot_{stem}.py"] = PLOT_SCRIPT.format(
            csv_name=f"{stem}.csv", script_name=f"plot_{stem}.py", png_name=f"{stem}.png",
            doc=doc, x_key=x_key, x_label=label, xscale=scale)
    written = []
    try:
        for path, text in files.items():
            tmp = path.with_suffix(path.suffix + ".tmp")
            tmp.write_text(text)
            written.append((tmp, path))
        for tmp, path in written:
            tmp.replace(path)
    except OSError as e:
        for tmp, _ in written:
            tmp.unlink(missing_ok=True)
        raise HarnessError(f"cannot write results: {e}") from None
    return list(files)
