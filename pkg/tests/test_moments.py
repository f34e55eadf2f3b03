import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from w4d import moments as mom
from w4d import pairing
from w4d import shaping as sh
from w4d.nli.config import LinkConfig, WdmConfig


def _kurtosis(m, pol="x"):
    two, four = ((1, 1, 0, 0), (2, 2, 0, 0)) if pol == "x" else ((0, 0, 1, 1), (0, 0, 2, 2))
    return (m[four] / m[two] ** 2).real


def _square_qam_points(side):
    pam = np.arange(-side + 1, side, 2, dtype=float)
    return (pam[:, None] + 1j * pam[None, :]).ravel()


# -- kurtosis and EGN terms against brute force over constellation points ----

def test_qpsk_kurtosis_is_one():
    pts = _square_qam_points(2)
    brute = np.mean(np.abs(pts) ** 4) / np.mean(np.abs(pts) ** 2) ** 2
    assert brute == pytest.approx(1.0)
    m = mom.product_moments(sh.Distribution1D.uniform(1))
    assert _kurtosis(m) == pytest.approx(1.0, abs=1e-12)
    assert mom.coefficients_egn(m).phi_x == pytest.approx(-1.0, abs=1e-12)


def test_gaussian_kurtosis_is_two(rng):
    assert _kurtosis(mom.gaussian_moments()) == 2.0
    m = mom.joint_moments(sh.gaussian_sequence(1 << 17, rng))
    assert _kurtosis(m) == pytest.approx(2.0, abs=5 * m.stderr[(2, 2, 0, 0)])
    e = mom.coefficients_egn(mom.gaussian_moments())
    assert (e.phi_x, e.psi_x, e.phi_y, e.psi_y) == (0.0, 0.0, 0.0, 0.0)


def test_16qam_kurtosis():
    pts = _square_qam_points(4)
    brute = np.mean(np.abs(pts) ** 4) / np.mean(np.abs(pts) ** 2) ** 2
    m = mom.product_moments(sh.Distribution1D.uniform(2))
    assert _kurtosis(m) == pytest.approx(brute, abs=1e-12)
    assert _kurtosis(m) == pytest.approx(1.32, abs=1e-12)


def test_64qam_phi():
    pts = _square_qam_points(8)
    mu2, mu4, mu6 = (np.mean(np.abs(pts) ** k) for k in (2, 4, 6))
    e = mom.coefficients_egn(mom.product_moments(sh.Distribution1D.uniform(4)))
    assert e.phi_x == pytest.approx(mu4 / mu2 ** 2 - 2, abs=1e-12)
    assert e.psi_x == pytest.approx(mu6 / mu2 ** 3 - 9 * mu4 / mu2 ** 2 + 12, abs=1e-12)
    assert e.phi_x == pytest.approx(-0.619, abs=5e-4)


def test_product_moments_match_iid_samples(rng):
    d = sh.maxwell_boltzmann(4, 1.5)
    exact = mom.product_moments(d)
    emp = mom.joint_moments(sh.iid_sequence(d, 1 << 16, rng))
    for idx in [(1, 1, 0, 0), (2, 2, 0, 0), (1, 1, 1, 1), (3, 3, 0, 0), (2, 2, 1, 1), (4, 0, 0, 0)]:
        assert abs(emp[idx] - exact[idx]) < 5 * emp.stderr[idx] + 1e-12


# -- windowed moments --------------------------------------------------------

@pytest.mark.parametrize("mode", mom.NORMALIZATIONS)
def test_window_equal_to_length_is_joint(mode, rng):
    seq = sh.shaped_sequence(sh.maxwell_boltzmann(4, 1.5), 64, 500, rng)
    joint = mom.joint_moments(seq)
    win = mom.windowed_moments(seq, len(seq), mode)
    assert win.values == joint.values


def test_memory_mode_window_one_is_joint(rng):
    seq = sh.shaped_sequence(sh.maxwell_boltzmann(4, 1.5), 64, 500, rng)
    assert mom.windowed_moments(seq, 1).values == mom.joint_moments(seq).values


def test_window_errors(rng):
    seq = sh.qam_sequence(16, 100, rng)
    with pytest.raises(mom.MomentError):
        mom.windowed_moments(seq, 101)
    with pytest.raises(mom.MomentError):
        mom.windowed_moments(seq, 0)
    with pytest.raises(mom.MomentError):
        mom.windowed_moments(seq, 4, "bogus")
    with pytest.raises(mom.MomentError):
        mom.joint_moments(sh.SymbolSequence(np.zeros(0), np.zeros(0)))


def test_missing_entry_names_index(rng):
    m = mom.joint_moments(sh.qam_sequence(4, 100, rng), max_order=4)
    with pytest.raises(mom.MomentError, match=r"\(3, 3, 0, 0\)"):
        m[(3, 3, 0, 0)]


@pytest.mark.parametrize("mode", mom.NORMALIZATIONS)
def test_qpsk_window_64_converges(mode):
    # oracle: repeated seeds; the windowed fourth moment is unbiased for
    # i.i.d. input, so its mean deviation from the unwindowed value must lie
    # within 3 standard errors of zero
    dev = []
    for seed in range(12):
        seq = sh.qam_sequence(4, 1 << 16, np.random.default_rng(seed))
        dev.append(_kurtosis(mom.windowed_moments(seq, 64, mode)) - _kurtosis(mom.joint_moments(seq)))
    dev = np.array(dev)
    assert abs(dev.mean()) <= 3 * max(dev.std(ddof=1), 1e-15) / math.sqrt(dev.size)


@pytest.mark.parametrize("w", [1, 2, 7, 64, 300])
@pytest.mark.parametrize("mode", ["per_window", "global"])
def test_constant_energy_windows(w, mode, rng):
    # QPSK in each polarization: |x|^2 is constant in every window
    seq = sh.qam_sequence(4, 1000, rng)
    assert _kurtosis(mom.windowed_moments(seq, w, mode)) == pytest.approx(_kurtosis(mom.joint_moments(seq)), abs=1e-12)


def test_per_codeword_windows(rng):
    seq = sh.shaped_sequence(sh.maxwell_boltzmann(4, 1.5), 64, 800, rng)  # 16 symbols per codeword
    m = mom.windowed_moments(seq, 8, "per_window", per_codeword=True)
    assert m.window == 8
    with pytest.raises(mom.MomentError):
        mom.windowed_moments(seq, 17, "per_window", per_codeword=True)


def test_memory_mode_kurtosis_grows_with_blocklength():
    """Short CCDM blocks suppress energy fluctuations inside the window."""
    d = sh.maxwell_boltzmann(4, 1.5)
    iid = _kurtosis(mom.product_moments(d))
    ks = []
    for n in (16, 64, 256, 1024):
        vals = [_kurtosis(mom.windowed_moments(sh.shaped_sequence(d, n, 1 << 14, np.random.default_rng(s)), 8))
                for s in range(4)]
        ks.append(np.mean(vals))
    assert all(a < b for a, b in zip(ks, ks[1:]))
    assert ks[-1] < iid + 0.01
    # unwindowed: short blocks see the same marginal, so no ordering signal
    k16 = _kurtosis(mom.joint_moments(sh.shaped_sequence(d, 16, 1 << 14, np.random.default_rng(0))))
    assert abs(k16 - iid) < abs(ks[0] - iid)


# -- properties ----------------------------------------------------------------

def _random_sequence(seed, n):
    r = np.random.default_rng(seed)
    v = r.integers(-3, 4, size=(4, n)).astype(float)
    v[v == 0] = 1.0
    return sh.SymbolSequence(v[0] + 1j * v[1], v[2] + 1j * v[3])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(8, 200), st.sampled_from(mom.NORMALIZATIONS),
       st.integers(1, 8))
def test_conjugate_symmetry(seed, n, mode, w):
    seq = _random_sequence(seed, n)
    for m in (mom.joint_moments(seq), mom.windowed_moments(seq, min(w, n), mode)):
        for (p, q, r, s), v in m.values.items():
            assert v == pytest.approx(np.conj(m[(q, p, s, r)]), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(8, 300))
def test_summation_order_independence(seed, n):
    seq = _random_sequence(seed, n)
    rev = sh.SymbolSequence(seq.x[::-1], seq.y[::-1])
    a, b = mom.joint_moments(seq), mom.joint_moments(rev)
    for idx, v in a.values.items():
        assert abs(v - b[idx]) <= 1e-12 * max(1.0, abs(v))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(16, 200))
def test_polarization_swap_covariance(seed, n):
    seq = _random_sequence(seed, n)
    swapped = sh.SymbolSequence(seq.y, seq.x)
    ms = mom.joint_moments(swapped)
    for idx, v in mom.joint_moments(seq).swapped().values.items():
        assert v == pytest.approx(ms[idx], abs=1e-12)
    ca = mom.coefficients_4d(mom.joint_moments(seq))
    cb = mom.coefficients_4d(ms)
    other = {"x": "y", "y": "x"}
    for (q, key), v in ca.var.items():
        assert v == pytest.approx(cb.var[(other[q], key)], abs=1e-9)


# -- coefficients ---------------------------------------------------------------

def _has_high_order_block(family, key):
    blocks = dict(pairing.partitions(family))[key]
    return any(len(b) > 2 for b in blocks)


def test_gaussian_excess_coefficients_vanish(rng):
    c = mom.coefficients_4d(mom.gaussian_moments())
    excess = [v for (q, key), v in c.var.items() if _has_high_order_block("var", key)]
    assert excess and max(abs(v) for v in excess) < 1e-12
    # Monte-Carlo input: zero within sampling error
    cm = mom.coefficients_4d(mom.joint_moments(sh.gaussian_sequence(1 << 18, rng)))
    excess = [v for (q, key), v in cm.var.items() if _has_high_order_block("var", key)]
    assert max(abs(v) for v in excess) < 0.2


def test_pm2d_coefficients_match_egn_table():
    from w4d.nli.models import egn_table
    for levels in (1, 2, 4):
        m = mom.product_moments(sh.Distribution1D.uniform(levels))
        a = mom.coefficients_4d(m)
        b = egn_table(mom.coefficients_egn(m))
        for k, v in a.var.items():
            assert v == pytest.approx(b.var[k], abs=1e-12)
        for k, v in a.cor.items():
            assert v == pytest.approx(b.cor[k], abs=1e-12)


def test_serialization_roundtrip(rng):
    seq = sh.shaped_sequence(sh.maxwell_boltzmann(4, 1.5), 64, 300, rng)
    m = mom.windowed_moments(seq, 5, "per_window")
    back = mom.MomentSet.loads(m.dumps())
    assert back.values == m.values and back.window == 5 and back.normalization == "per_window"
    j = mom.joint_moments(seq)
    assert mom.MomentSet.loads(j.dumps()).stderr == j.stderr
    c = mom.coefficients_4d(m)
    cb = mom.CoefficientSet.loads(c.dumps())
    assert cb.var == c.var and cb.cor == c.cor and cb.power == c.power


# -- default window ---------------------------------------------------------------

def test_default_window_examples():
    grid = WdmConfig(n_channels=9, rolloff=0.0)
    link = LinkConfig(n_spans=4)
    assert mom.default_window(link, grid) == 88
    assert mom.default_window(link.replace(dispersion=0.0), grid) == 1
    exact = 2 * math.pi * abs(link.beta2) * link.total_length * grid.b_ch * grid.rs
    doubled = 2 * math.pi * abs(link.beta2) * 2 * link.total_length * grid.b_ch * grid.rs
    assert doubled == pytest.approx(2 * exact)
    assert mom.default_window(link.replace(n_spans=8), grid) in (math.floor(2 * exact), math.ceil(2 * exact))


def test_effective_window_is_shorter():
    grid, link = WdmConfig(n_channels=3), LinkConfig(n_spans=2)
    assert 1 <= mom.effective_window(link, grid) < mom.default_window(link, grid)
    assert mom.effective_window(link, grid) == mom.effective_window(link.replace(n_spans=4), grid)
