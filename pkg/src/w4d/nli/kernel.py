"""First-order perturbation link kernel."""
from __future__ import annotations

import numpy as np

from .config import LinkConfig


def link_kernel(f1, f2, link: LinkConfig, f=0.0):
    """Four-wave-mixing efficiency of the whole link, field units of metres.

    Single-span integral of exp(-alpha z + j dbeta z) over the span times
    the phased-array sum over spans; dbeta = 4 pi^2 beta2 (f1 - f)(f2 - f).
    Accepts broadcastable arrays (Hz).
    """
    f1, f2, f = np.broadcast_arrays(np.asarray(f1, float), np.asarray(f2, float),
                                    np.asarray(f, float))
    dbeta = 4 * np.pi ** 2 * link.beta2 * (f1 - f) * (f2 - f)
    a = link.alpha
    L = link.span_m
    s = -a + 1j * dbeta
    small = np.abs(s) * L < 1e-8
    s_safe = np.where(small, -1.0 / L, s)  # placeholder, never selected
    span = np.where(small, L * (1 + s * L / 2), np.expm1(s_safe * L) / s_safe)
    array = np.zeros_like(span)
    for n in range(link.n_spans):
        array = array + np.exp(1j * dbeta * n * L)
    return span * array
