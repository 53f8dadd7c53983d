"""Acceptance criteria, one test per criterion (criterion 6 has two parts).

Each test records a status line before asserting, so the terminal summary shows
every criterion with its measured value whether it passes or not.
"""

import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from nanophot.architecture import ber, build_plan, preset_design
from nanophot.device import Nanocavity, extinction_vs_floor
from nanophot.explorer import SweepGrid, energy_per_pixel, explore_not, explore_xor, not_power, valid_onset
from nanophot.imaging import GrayImage, process_image
from nanophot.stochastic import BitStream, Lfsr, mux_streams, sng_generate, xor_streams

PUBLISHED_LAMBDA_S = (1542.000, 1541.785, 1540.810, 1540.595, 1537.650, 1537.435, 1536.460, 1536.245)


def record(log, key, ok, text):
    log[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {text}"


def test_criterion_1_extinction_ratio(criteria_log):
    t0 = time.perf_counter()
    deltas, published = (0.05, 0.1, 0.19, 0.35), (0.7, 1.7, 4.3, 6.9)
    ers = [extinction_vs_floor(Nanocavity(1542.0 + d, 2000.0, floor=0.1), d) for d in deltas]
    dt = time.perf_counter() - t0
    ok = all(abs(e - p) <= 0.5 for e, p in zip(ers, published)) and dt < 1
    record(criteria_log, "1", ok, f"ER {[round(e, 2) for e in ers]} dB vs {list(published)} (+-0.5); {dt:.3f} s")
    assert ers == pytest.approx(published, abs=0.5)
    assert dt < 1


def test_criterion_2_not_power(calib, criteria_log):
    t0 = time.perf_counter()
    r = not_power(0.05, calib)
    onset = valid_onset(explore_not(np.round(np.arange(0.01, 1.0, 0.01), 4), calib))
    dt = time.perf_counter() - t0
    ok = (abs(r.olp_p / 2.9 - 1) <= 0.3 and abs(r.olp_input / 19.1 - 1) <= 0.3
          and onset is not None and 0.15 <= onset <= 0.25 and dt < 10)
    record(criteria_log, "2", ok, f"OLP_P {r.olp_p:.2f} uW (2.9), OLP_in {r.olp_input:.2f} uW (19.1), "
                                  f"onset {onset} nm in [0.15, 0.25]; {dt:.2f} s")
    assert r.olp_p == pytest.approx(2.9, rel=0.3)
    assert r.olp_input == pytest.approx(19.1, rel=0.3)
    assert onset is not None and 0.15 <= onset <= 0.25
    assert dt < 10


def test_criterion_3_xor_optimum(calib, criteria_log):
    t0 = time.perf_counter()
    sweep = explore_xor(SweepGrid(q_range=(100.0, 10000.0, 100), x_range=(0.01, 1.0, 100)), calib)
    a, b = sweep.best()
    dt = time.perf_counter() - t0
    q, dl, total = sweep.q[a], sweep.dl[b], sweep.total[a, b]
    ok = q >= 8000 and 0.10 <= dl <= 0.20 and abs(total / 34.7 - 1) <= 0.3 and dt < 60
    record(criteria_log, "3", ok, f"Q {q:g}, dl {dl:.3f} nm, total {total:.2f} uW (34.7 +-30%); {dt:.1f} s")
    assert q >= 8000
    assert 0.10 <= dl <= 0.20
    assert total == pytest.approx(34.7, rel=0.3)
    assert dt < 60


def test_criterion_4_wavelength_plan(calib, criteria_log):
    t0 = time.perf_counter()
    lam = build_plan(preset_design("A", calib)).lambda_s
    dt = time.perf_counter() - t0
    err = max(abs(x - y) for x, y in zip(lam, PUBLISHED_LAMBDA_S))
    ok = len(lam) == 8 and err <= 1e-3 and dt < 1
    record(criteria_log, "4", ok, f"max |dlambda_S| {err:.2e} nm over 8 rows; {dt:.3f} s")
    assert lam == pytest.approx(PUBLISHED_LAMBDA_S, abs=1e-3)
    assert dt < 1


def test_criterion_5_mux_pumps(calib, criteria_log):
    t0 = time.perf_counter()
    pumps = preset_design("A", calib).olp_pump_mux
    dt = time.perf_counter() - t0
    published = (32.0, 210.0, 670.0)
    ratios = [p / q for p, q in zip(pumps, published)]
    ok = all(0.5 <= r <= 2 for r in ratios) and dt < 10
    record(criteria_log, "5", ok, f"pumps {[round(p, 1) for p in pumps]} uW vs {list(published)}, "
                                  f"ratios {[round(r, 2) for r in ratios]} (x2); {dt:.2f} s")
    assert all(0.5 <= r <= 2 for r in ratios)
    assert dt < 10


@pytest.fixture(scope="module")
def camera():
    from skimage import data
    img = GrayImage(data.camera())
    assert img.pixels.shape == (512, 512)
    return img


def test_criterion_6a_psnr_value(camera, criteria_log):
    t0 = time.perf_counter()
    p = process_image(camera, 0.1, 512, seed=0)[1].psnr_total
    dt = time.perf_counter() - t0
    ok = abs(p - 26.4) <= 2 and dt < 300
    record(criteria_log, "6a", ok, f"PSNR_Total {p:.2f} dB at BER 0.1, BSL 512 vs 26.4 +-2; {dt:.1f} s")
    assert p == pytest.approx(26.4, abs=2)
    assert dt < 300


def test_criterion_6b_psnr_increases_with_bsl(camera, criteria_log):
    t0 = time.perf_counter()
    means = [float(np.mean([process_image(camera, 0.1, bsl, seed=s)[1].psnr_total for s in range(5)]))
             for bsl in (256, 512, 1024)]
    dt = time.perf_counter() - t0
    ok = means[0] < means[1] < means[2] and dt < 300
    record(criteria_log, "6b", ok, f"mean PSNR over 5 seeds at BSL 256/512/1024: "
                                   f"{[round(m, 3) for m in means]} dB; {dt:.1f} s")
    assert means[0] < means[1] < means[2]
    assert dt < 300


def test_criterion_7_latency_energy(calib, criteria_log):
    t0 = time.perf_counter()
    energy, latency = energy_per_pixel(preset_design("B", calib), 512)
    dt = time.perf_counter() - t0
    ok = latency == 512 and 8.5 / 2 <= energy <= 8.5 * 2 and dt < 1
    record(criteria_log, "7", ok, f"time {latency:g} ns (512), energy {energy:.2f} nJ (8.5, x2); {dt:.3f} s")
    assert latency == 512
    assert 8.5 / 2 <= energy <= 8.5 * 2
    assert dt < 1


def test_criterion_8_stochastic_oracle(criteria_log):
    t0 = time.perf_counter()
    reg = Lfsr(1)
    streams = [sng_generate(v, 255, reg) for v in range(256)]
    bad = 0
    for a in streams:
        pa = Fraction(a.ones, 255)
        for b in streams:
            if Fraction(xor_streams(a, b).ones, 255) != abs(pa - Fraction(b.ones, 255)):
                bad += 1
    # constructed selects: each input bit held for two slots, select alternating
    rng = np.random.default_rng(0)
    mux_bad = 0
    for _ in range(200):
        n = int(rng.integers(1, 128))
        a = BitStream(np.repeat(rng.integers(0, 2, n), 2))
        b = BitStream(np.repeat(rng.integers(0, 2, n), 2))
        out = mux_streams(a, b, BitStream(np.tile([0, 1], n)))
        if Fraction(out.ones, 2 * n) != (Fraction(a.ones, 2 * n) + Fraction(b.ones, 2 * n)) / 2:
            mux_bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and mux_bad == 0 and dt < 30
    record(criteria_log, "8", ok, f"XOR mismatches {bad}/65536, MUX mismatches {mux_bad}/200; {dt:.1f} s")
    assert bad == 0 and mux_bad == 0
    assert dt < 30


def _ber_series(s):
    """Half erfc of s / (2 sqrt 2): Maclaurin series of erf for small arguments, continued fraction otherwise."""
    mpmath.mp.dps = 50
    x = abs(mpmath.mpf(s)) / (2 * mpmath.sqrt(2))
    if x < 3:
        term, total, k = x, x, 0
        while abs(term) > mpmath.mpf(10) ** -45:
            k += 1
            term *= -x * x / k
            total += term / (2 * k + 1)
        half_erfc = (1 - 2 / mpmath.sqrt(mpmath.pi) * total) / 2
    else:
        cf = mpmath.mpf(0)
        for k in range(200, 0, -1):
            cf = (k / mpmath.mpf(2)) / (x + cf)
        half_erfc = mpmath.exp(-x * x) / (mpmath.sqrt(mpmath.pi) * (x + cf)) / 2
    return float(half_erfc if s >= 0 else 1 - half_erfc)


def test_criterion_9_erfc(criteria_log):
    grid = np.linspace(-10, 10, 4001)
    err = max(abs(ber(float(s)) - _ber_series(float(s))) for s in grid)
    zero = ber(0.0)
    ok = err <= 1e-6 and zero == 0.5
    record(criteria_log, "9", ok, f"max |ber - oracle| {err:.1e} over [-10, 10]; ber(0) = {zero!r}")
    assert err <= 1e-6
    assert zero == 0.5
