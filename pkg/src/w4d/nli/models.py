"""NLI power coefficients, ASE and effective-SNR prediction (GN, EGN, W-EGN, 4D, W-4D)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import moments as mom
from .. import pairing
from ..pairing import X, XC, YC
from .chi import KINDS, ChiIntegrals, all_chi
from .config import H, LinkConfig, WdmConfig

MODELS = ("gn", "egn", "wegn", "4d", "w4d")
MODEL_NAMES = {"gn": "GN", "egn": "EGN", "wegn": "W-EGN", "4d": "4D", "w4d": "W-4D"}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class EtaCoefficients:
    sci: float
    xci: float
    mci: float

    @property
    def total(self) -> float:
        return self.sci + self.xci + self.mci


def eta(chi: ChiIntegrals, coeffs: mom.CoefficientSet) -> complex:
    """Variance part of one NLI kind: coefficient vector dot chi vector,
    summed over both target polarizations."""
    keys = {k for _, k in coeffs.var}
    extra = set(chi.var) - keys
    if extra:
        raise ModelError(f"chi entries without coefficients: {sorted(extra)}")
    return sum(coeffs.var[(q, key)] * v for key, v in chi.var.items() for q in pairing.POLS)


def _correlation(chi: ChiIntegrals, coeffs: mom.CoefficientSet, q: str) -> complex:
    keys = {k for _, k in coeffs.cor}
    if set(chi.cor) - keys:
        raise ModelError("chi correlation entries without coefficients")
    return sum(coeffs.cor[(q, key)] * v for key, v in chi.cor.items())


def eta_coefficients(chis: dict[str, ChiIntegrals], coeffs: mom.CoefficientSet) -> EtaCoefficients:
    """eta_SCI, eta_XCI, eta_MCI in 1/W^2.

    The receiver removes the part of the NLI correlated with the
    transmitted symbol (one complex scalar per polarization); that
    projection is shared among the kinds in proportion to their share of
    the correlation.
    """
    out = {}
    cor_tot = {q: sum(_correlation(chis[k], coeffs, q) for k in KINDS) for q in pairing.POLS}
    for k in KINDS:
        v = eta(chis[k], coeffs)
        for q in pairing.POLS:
            pw = coeffs.power[q]
            v -= (np.conj(cor_tot[q]) * _correlation(chis[k], coeffs, q)).real / pw
        out[k] = float(np.real(v))
    return EtaCoefficients(out["SCI"], out["XCI"], out["MCI"])


def egn_table(c: mom.EgnCoefficients) -> mom.CoefficientSet:
    """Coefficient table for independent, circular polarizations.

    A block survives only if all its symbols share one polarization and it
    holds as many conjugated as plain symbols; it then contributes mu2,
    Phi mu2^2 or Psi mu2^3 for sizes 2, 4, 6.
    """
    stats = {"x": (c.mu2_x, c.phi_x, c.psi_x), "y": (c.mu2_y, c.phi_y, c.psi_y)}

    def block_value(comps):
        pols = {"x" if cc in (X, XC) else "y" for cc in comps}
        if len(pols) != 1:
            return 0.0
        n_conj = sum(1 for cc in comps if cc in (XC, YC))
        if 2 * n_conj != len(comps):
            return 0.0
        mu2, phi, psi = stats[pols.pop()]
        return {2: mu2, 4: phi * mu2 ** 2, 6: psi * mu2 ** 3}[len(comps)]

    var, cor = {}, {}
    for fam, table in (("var", var), ("cor", cor)):
        slots = pairing.slots_for(fam)
        for q in pairing.POLS:
            for key, blocks in pairing.partitions(fam):
                total = 0.0
                for p in pairing.POLS:
                    for pp in (pairing.POLS if fam == "var" else ("x",)):
                        term = 1.0
                        for b in blocks:
                            term *= block_value([pairing.component(slots[i], p, pp, q) for i in b])
                        total += term
                table[(q, key)] = complex(total)
    return mom.CoefficientSet(var, cor, {"x": c.mu2_x, "y": c.mu2_y}, "egn")


def ase_power(link: LinkConfig, grid: WdmConfig) -> float:
    """Total ASE power (both polarizations) in the matched-filter bandwidth, W."""
    return link.n_spans * H * link.frequency * link.nf * (link.gain - 1) * grid.rs


def _moments_of(source, windowed: bool, w: int | None, normalization: str) -> mom.MomentSet:
    if isinstance(source, mom.MomentSet):
        return source
    if windowed:
        if w is None:
            raise ModelError("windowed model needs a window length")
        if isinstance(w, dict):
            return mom.mixed_window_moments(source, w, normalization)
        return mom.windowed_moments(source, w, normalization)
    return mom.joint_moments(source)


def model_coefficients(model: str, source=None, w: int | dict[int, float] | None = None,
                       normalization: str = "memory") -> mom.CoefficientSet:
    """Coefficient table of a model. ``source`` is a SymbolSequence or a
    MomentSet; ``w`` is a window length or a {length: weight} mixture
    (see :func:`w4d.moments.spread_window_weights`)."""
    model = model.lower().replace("-", "")
    if model not in MODELS:
        raise ModelError(f"unknown model {model!r}")
    if model == "gn":
        return mom.coefficients_4d(mom.gaussian_moments(), "gn")
    if source is None:
        raise ModelError(f"model {model} needs symbols or moments")
    m = _moments_of(source, model.startswith("w"), w, normalization)
    if model in ("egn", "wegn"):
        t = egn_table(mom.coefficients_egn(m))
        t.label = model
        return t
    return mom.coefficients_4d(m, model)


def snr_db(p: float, sigma_ase: float, eta_total: float) -> float:
    return 10 * math.log10(p / (sigma_ase + eta_total * p ** 3))


def predict_snr(model: str, source, link: LinkConfig, grid: WdmConfig, p: float,
                w: int | dict[int, float] | None = None, normalization: str = "memory",
                chis: dict[str, ChiIntegrals] | None = None) -> float:
    """Effective SNR (dB) at launch power ``p`` (W per channel, both polarizations)."""
    if p <= 0:
        raise ModelError("launch power must be positive")
    coeffs = model_coefficients(model, source, w, normalization)
    chis = chis if chis is not None else all_chi(link, grid)
    e = eta_coefficients(chis, coeffs)
    return snr_db(p, ase_power(link, grid), e.total)


def optimal_power(eta_total: float, sigma_ase: float) -> float:
    """Launch power maximizing P / (sigma + eta P^3)."""
    if eta_total <= 0:
        raise ModelError("no finite optimum without nonlinearity")
    return (sigma_ase / (2 * eta_total)) ** (1 / 3)


def dbm(p: float) -> float:
    return 10 * math.log10(p / 1e-3)


def watts(p_dbm: float) -> float:
    return 1e-3 * 10 ** (p_dbm / 10)


def grid_search_power(snr_of, p0_dbm: float, coarse: float = 1.0, fine: float = 0.25,
                      span: int = 1) -> tuple[float, float]:
    """Coarse-to-fine maximization of ``snr_of(p_dbm)`` around ``p0_dbm``.

    Returns (best power dBm, best SNR dB). Evaluations are memoized.
    """
    seen: dict[float, float] = {}

    def f(x):
        x = round(x, 6)
        if x not in seen:
            seen[x] = snr_of(x)
        return seen[x]

    center = p0_dbm
    for _ in range(8):
        pts = [center + i * coarse for i in range(-span, span + 1)]
        best = max(pts, key=f)
        if best == center:
            break
        center = best
    for _ in range(8):
        pts = [center + i * fine for i in (-1, 0, 1)]
        best = max(pts, key=f)
        if best == center:
            break
        center = best
    return center, f(center)
