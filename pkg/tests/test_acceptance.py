"""Exit criteria. Each test records one PASS/FAIL line, printed in the summary."""

import math

import mpmath
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from symcodec.channel import ChannelConfig, Packet, ber_from_snr, packetize, transmit, verify_frame
from symcodec.dof_codec import central_skew_embed, decode_dof, encode_dof
from symcodec.metrics import (
    bandwidth_saving,
    clean_layer_probability,
    dof_payload_bits,
    full_payload_bits,
    noise_projection_trials,
    orbit_variance_ratio,
    projected_variance_ratio,
    pruned_payload_bits,
    run_trial,
    simulate_clean_frequency,
)
from symcodec.symmetry import SymmetryKind, orbit_map, project
from symcodec.tensor_core import REFERENCE_SHAPES, ModelBundle, WeightTensor, synthetic_bundle

S = SymmetryKind


def check(number: int, title: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


TABLE1_REDUCTION = {
    S.NONE: 0.00, S.CENTRAL_EVEN: 44.44, S.CENTRAL_SKEW: 55.56, S.HORIZONTAL: 33.33,
    S.VERTICAL: 33.33, S.MAIN_DIAGONAL: 33.33, S.ANTI_DIAGONAL: 33.33, S.ROT90: 66.67,
    S.RADIAL: 66.67, S.TOEPLITZ: 44.44,
}


def test_1_compression_formulas():
    worst = max(abs(bandwidth_saving(kind, 3) - v) for kind, v in TABLE1_REDUCTION.items())
    check(1, "K=3 bandwidth saving matches the reduction column", worst <= 0.01, f"max dev {worst:.4f} pp")


def test_2_pruned_payload_expansion():
    ok = True
    for kind in S:
        dof = sum(dof_payload_bits(kind, s, 8) for s in REFERENCE_SHAPES)
        pruned = sum(pruned_payload_bits(kind, s, 8) for s in REFERENCE_SHAPES)
        ok &= pruned == 5 * dof
    none = sum(pruned_payload_bits(S.NONE, s, 8) for s in REFERENCE_SHAPES)
    skew = sum(pruned_payload_bits(S.CENTRAL_SKEW, s, 8) for s in REFERENCE_SHAPES)
    check(2, "COO payload is exactly 5x DoF payload at b=8", ok,
          f"none {none / 1e3:.1f} kbits, central-skew {skew / 1e3:.1f} kbits")


def test_3_ber_model():
    mpmath.mp.dps = 40

    def oracle(snr):
        return float(mpmath.erfc(mpmath.sqrt(mpmath.power(10, mpmath.mpf(snr) / 10))) / 2)

    ok = all(math.isclose(ber_from_snr(s), oracle(s), rel_tol=1e-9) for s in (10, 0, -3, 5, 12))
    ok &= math.isclose(ber_from_snr(10), 3.872e-6, rel_tol=1e-3)
    ok &= math.isclose(ber_from_snr(0), 7.865e-2, rel_tol=1e-3)
    cfg = ChannelConfig(snr_db=0, seed=2024)
    n_frames = math.ceil(1e7 / cfg.packet_bits)
    flips = 0
    for seq in range(n_frames):
        pkt = Packet(1, 0, seq, bytes(cfg.body_bytes))
        (frame,) = transmit([pkt], cfg)
        diff = np.frombuffer(frame, np.uint8) ^ np.frombuffer(pkt.to_bytes(), np.uint8)
        flips += int(np.unpackbits(diff).sum())
    n = n_frames * cfg.packet_bits
    p = ber_from_snr(0)
    z = (flips / n - p) / math.sqrt(p * (1 - p) / n)
    check(3, "BER closed form and Monte-Carlo flip rate", ok and abs(z) <= 3,
          f"{n} bits, z = {z:+.2f}")


def test_4_clean_layer_reliability():
    trials = 10_000
    zs = []
    for n_packets, snr in ((1, 8.0), (5, 9.0), (20, 10.0)):
        cfg = ChannelConfig(snr_db=snr, seed=17)
        payload_bytes = n_packets * cfg.body_bytes
        p = clean_layer_probability(8 * payload_bytes, cfg)
        assert math.isclose(p, cfg.packet_success ** n_packets)
        freq = simulate_clean_frequency(payload_bytes, cfg, trials)
        zs.append((freq - p) / math.sqrt(p * (1 - p) / trials))
    strict = True
    for snr in (8.0, 9.0, 10.0, 12.0):
        cfg = ChannelConfig(snr_db=snr)
        full = clean_layer_probability(sum(full_payload_bits(s, 8) for s in REFERENCE_SHAPES), cfg)
        for kind in S:
            if kind is S.NONE:
                continue
            dof = clean_layer_probability(sum(dof_payload_bits(kind, s, 8) for s in REFERENCE_SHAPES), cfg)
            strict &= dof > full
    ok = all(abs(z) <= 3 for z in zs) and strict
    check(4, "clean-layer frequency matches p_succ^N; DoF strictly more reliable", ok,
          "z = " + ", ".join(f"{z:+.2f}" for z in zs))


def test_5_projection_algebra():
    rng = np.random.default_rng(5)
    worst = 0.0
    ok = True
    for kind in S:
        for k in (1, 3, 5, 7):
            omap = orbit_map(kind, k)
            for _ in range(100):
                a = rng.normal(size=(2, 2, k, k))
                b = rng.normal(size=(2, 2, k, k))
                alpha, beta = rng.normal(size=2)
                pa, pb = omap.project_array(a), omap.project_array(b)
                ulp = np.spacing(max(np.abs(a).max(), np.abs(b).max(), 1.0) * (1 + abs(alpha) + abs(beta)))
                errs = [
                    np.abs(omap.project_array(pa) - pa).max(),
                    np.abs(omap.project_array(alpha * a + beta * b) - (alpha * pa + beta * pb)).max(),
                    np.abs(pa - (omap.projector() @ a.reshape(4, -1).T).T.reshape(a.shape)).max(),
                ]
                # adjoint: <Pa, b> == <a, Pb>; one ulp of the inner-product magnitude per term
                ip = abs(np.sum(pa * b) - np.sum(a * pb)) / a.size
                worst = max(worst, max(errs) / ulp, ip / ulp)
                ok &= np.linalg.norm(pa) <= np.linalg.norm(a) * (1 + 1e-15)
                w = WeightTensor(a)
                ok &= project(project(w, omap), omap) == project(w, omap)
    check(5, "idempotent, linear, self-adjoint, non-expansive (10 kinds x 4 K x 100)",
          ok and worst <= 8, f"worst {worst:.2f} ulp")


@pytest.mark.parametrize("kind", [S.CENTRAL_EVEN, S.ROT90])
def test_6_variance_reduction(kind):
    omap = orbit_map(kind, 3)
    trials = 10_000
    res = noise_projection_trials(omap, sigma=0.2, trials=trials, seed=31)
    raw = res["raw"].mean()
    # orbit-average error, sum_m sigma^2 / n_m, relative to the raw error K^2 sigma^2
    rep = res["representative"]
    ratio = rep.mean() / raw
    se = rep.std(ddof=1) / math.sqrt(trials) / raw
    analytic = orbit_variance_ratio(omap)
    # full-stencil error after projection: M sigma^2, the stated upper bound
    proj = res["projected"]
    ratio_t = proj.mean() / raw
    se_t = proj.std(ddof=1) / math.sqrt(trials) / raw
    ok = abs(ratio - analytic) <= 3 * se and abs(ratio_t - projected_variance_ratio(omap)) <= 3 * se_t
    check(6, f"variance reduction {kind.label}", ok,
          f"orbit ratio {ratio:.4f} vs {analytic:.4f}, stencil ratio {ratio_t:.4f} vs {projected_variance_ratio(omap):.4f}")


def test_7_central_skew_isometry():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(1000):
        k = int(rng.choice([3, 5, 7]))
        m = (k * k - 1) // 2
        s, t = rng.normal(size=(2, m))
        ps, pt = central_skew_embed(s, k), central_skew_embed(t, k)
        ok &= math.isclose(np.sum(ps ** 2), 2 * np.sum(s ** 2), rel_tol=1e-6)
        ok &= math.isclose(np.linalg.norm(ps - pt), math.sqrt(2) * np.linalg.norm(s - t), rel_tol=1e-6)
    w = WeightTensor(rng.normal(size=(16, 8, 5, 5)))
    p = encode_dof(w, S.CENTRAL_SKEW, 8)
    plain, projected = decode_dof(p, False).data, decode_dof(p, True).data
    ulps = np.abs(projected - plain) / np.spacing(np.maximum(np.abs(plain), np.finfo(np.float32).tiny))
    check(7, "signed-pair map norms and zero post-projection distortion",
          ok and ulps.max() <= 1, f"max {ulps.max():.0f} ulp")


GOLDEN_CRC = 0x6D373946


def test_8_wire_format_golden():
    cfg = ChannelConfig()
    payload = bytes(range(242))
    packets = packetize(payload, 0x01020304, 0x0506, cfg)
    frame = packets[0].to_bytes()
    ok = len(packets) == 1 and len(frame) == 256
    ok &= frame[:10] == bytes.fromhex("01020304" "0506" "00000000")
    ok &= frame[10:252] == payload
    ok &= int.from_bytes(frame[-4:], "big") == GOLDEN_CRC
    ok &= verify_frame(frame)
    undetected = 0
    arr = np.frombuffer(frame, np.uint8)
    for bit in range(8 * len(frame)):
        flipped = arr.copy()
        flipped[bit // 8] ^= 0x80 >> (bit % 8)
        undetected += verify_frame(flipped.tobytes())
    check(8, "golden frame and exhaustive single-bit CRC detection", ok and undetected == 0,
          f"crc {GOLDEN_CRC:#010x}, {8 * len(frame)} flips, {undetected} undetected")


def _symmetric_bundle(kind, seed):
    raw = synthetic_bundle(REFERENCE_SHAPES, seed=seed)
    return ModelBundle(tuple((lid, project(w, orbit_map(kind, w.k))) for lid, w in raw))


def test_9_reconstruction_proxy():
    kind = S.CENTRAL_EVEN
    better = worse = ties = 0
    rx_full, proj_full, rx_dof, proj_dof = [], [], [], []
    for seed in range(10):
        bundle = _symmetric_bundle(kind, seed)
        cfg = ChannelConfig(snr_db=10.0, seed=seed)
        full = run_trial(bundle, "full", kind, 8, cfg)
        dof = run_trial(bundle, "dof", kind, 8, cfg)
        rx_full.append(full.frob_error_rx)
        proj_full.append(full.frob_error_rx_projected)
        rx_dof.append(dof.frob_error_rx)
        proj_dof.append(dof.frob_error_rx_projected)
        d = full.frob_error_rx - full.frob_error_rx_projected
        if d > 1e-12:
            better += 1
        elif d < -1e-12:
            worse += 1
        else:
            ties += 1
    n = better + worse
    # one-sided sign test, ties dropped
    p_value = sum(math.comb(n, i) for i in range(better, n + 1)) / 2 ** n if n else 1.0
    ok = np.mean(proj_full) <= np.mean(rx_full) and np.mean(proj_dof) <= np.mean(rx_dof) * (1 + 1e-9)
    ok &= p_value < 0.05
    check(9, "receive-side projection lowers mean Frobenius error at 10 dB, b=8", ok,
          f"full: {np.mean(rx_full):.4f} -> {np.mean(proj_full):.4f}, "
          f"sign test {better}/{n} (ties {ties}) p = {p_value:.4f}; "
          f"dof: {np.mean(rx_dof):.4f} -> {np.mean(proj_dof):.4f}")
