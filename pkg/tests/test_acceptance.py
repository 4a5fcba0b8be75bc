"""Acceptance suite: one test per release criterion, each printing a
single PASS/FAIL line with its measured values."""

import threading

import numpy as np
import pytest

from conftest import transcript_tap
from qkrecon import transport
from qkrecon.baselines import CascadeConfig, cascade_reconcile
from qkrecon.bitcore import KeyString, hamming_distance
from qkrecon.hamming import HammingParams, decode_flip, matrix_element, syndrome
from qkrecon.harness import (
    inject_errors,
    permtest_block_sweep,
    permtest_one_lfsr,
    permtest_seed_sweep,
    run_session_pair,
    sweep_efficiency,
    sweep_time,
)
from qkrecon.lfsr import separation_score, two_lfsr_permutation
from qkrecon.protocol import (
    ROLE_ALICE,
    ROLE_BOB,
    SessionConfig,
    initial_block_length,
    reconcile,
)


def check(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def test_criterion_01_initial_block_length_table():
    got = [initial_block_length(p) for p in (0.01, 0.05, 0.10, 0.15)]
    check("n0 table", got == [64, 16, 8, 8], f"n0{got} for p (0.01,0.05,0.10,0.15)")


def test_criterion_02_hamming_matrix_r3():
    expected = [
        [1, 0, 1, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ]
    params = HammingParams(3)
    got = [
        [matrix_element(i, j, params) for j in range(1, 8)]
        for i in range(1, 4)
    ]
    check("hamming matrix r=3", got == expected, f"3x7 matrix rows {got}")


def test_criterion_03_single_error_correction_exhaustive():
    failures = 0
    odd_violations = 0
    rng = np.random.default_rng(1)
    for n in (8, 16, 32):
        params = HammingParams.for_block_length(n)
        reference = rng.integers(0, 2, size=n, dtype=np.uint8)
        sigma_ref = syndrome(reference, params)
        for pos in range(n):
            block = reference.copy()
            block[pos] ^= 1
            local = decode_flip(sigma_ref ^ syndrome(block, params), params)
            block[local] ^= 1
            if not np.array_equal(block, reference):
                failures += 1
        # every odd-error block must become even-error after one flip
        for _ in range(200):
            weight = int(rng.choice([1, 3, 5, 7]))
            block = reference.copy()
            block[rng.choice(n, size=weight, replace=False)] ^= 1
            local = decode_flip(sigma_ref ^ syndrome(block, params), params)
            block[local] ^= 1
            if int((block != reference).sum()) % 2:
                odd_violations += 1
    check(
        "single-error correction",
        failures == 0 and odd_violations == 0,
        f"{failures} decode failures, {odd_violations} odd-residual blocks "
        "over n in (8, 16, 32)",
    )


def test_criterion_04_permutation_quality_seed_sweep():
    rows = permtest_seed_sweep(key_length=65536, seed1=5, block_length=16,
                               samples=1000, sample_seed=0)
    good = sum(1 for _, d in rows if d >= 0.98)
    check(
        "permutation quality (seed sweep)",
        good >= 990,
        f"{good}/1000 sampled second seeds reach d_tot >= 0.98 at n = 16",
    )


def test_criterion_05_permutation_degradation_block_sweep():
    rows = permtest_block_sweep(key_length=65536, seed1=5, seed2=78)
    values = [d for _, d in rows]
    non_increasing = all(b <= a + 0.01 for a, b in zip(values, values[1:]))
    final_ok = values[-1] <= 0.80
    check(
        "permutation degradation (block sweep)",
        non_increasing and final_ok,
        "d_tot " + ", ".join(f"{n}:{d:.3f}" for n, d in rows),
    )


def test_criterion_06_one_lfsr_inferiority():
    one = permtest_one_lfsr(key_length=65536, seed=5, block_length=16)
    two = separation_score(
        two_lfsr_permutation(5, 78, 65536), 16, 16
    ).d_tot
    ok = 0.71 <= one <= 0.81 and one <= two - 0.1
    check(
        "one-LFSR inferiority",
        ok,
        f"one-LFSR d_tot = {one:.3f} (band [0.71, 0.81]), "
        f"two-LFSR = {two:.3f}",
    )


def test_criterion_07_end_to_end_correctness():
    trials = 500
    rates = (0.01, 0.02, 0.03, 0.04, 0.05)
    mismatched_keys = 0
    ledger_taps_off = 0
    success_rates = {}
    for pi, p in enumerate(rates):
        successes = 0
        for t in range(trials):
            noise_seed = 10_000 * pi + t
            rng = np.random.default_rng(noise_seed + 7)
            alice = KeyString.random(65536, rng)
            bob, _ = inject_errors(alice, p, noise_seed)
            out_a, out_b, ep_a, ep_b = run_session_pair(alice, bob, p, 5, 78)
            if out_b.success:
                successes += 1
                if hamming_distance(out_a.final_key, out_b.final_key):
                    mismatched_keys += 1
            tap = transcript_tap(bytes(ep_a.transcript), bytes(ep_b.transcript))
            if tap != out_b.ledger.total or tap != out_a.ledger.total:
                ledger_taps_off += 1
        success_rates[p] = successes / trials
    ok = (
        mismatched_keys == 0
        and ledger_taps_off == 0
        and all(rate >= 0.95 for rate in success_rates.values())
    )
    check(
        "end-to-end correctness",
        ok,
        f"success rates {success_rates}, {mismatched_keys} key mismatches, "
        f"{ledger_taps_off} ledger/tap disagreements over "
        f"{trials * len(rates)} runs",
    )


def test_criterion_08_efficiency_structure():
    # single-shot sweep: abandoned rows keep their ledger so f compares
    # the same leak schedule across the whole grid
    grid = [0.01, 0.011, 0.0125, 0.014, 0.02, 0.022, 0.025, 0.028,
            0.04, 0.045, 0.05, 0.055, 0.08, 0.09, 0.1]
    records = sweep_efficiency(grid, trials=50, key_length=65536,
                               crc_retries=0)
    mean_f = {
        p: float(np.mean([r.f for r in records if r.p_true == p]))
        for p in grid
    }
    minima_ok = {}
    for target in (0.0125, 0.025, 0.05, 0.1):
        i = grid.index(target)
        neighbors = [mean_f[grid[i - 1]]]
        if i + 1 < len(grid):
            neighbors.append(mean_f[grid[i + 1]])
        minima_ok[target] = all(mean_f[target] < v for v in neighbors)
    floor_ok = all(
        r.f >= 1.0 for r in records if r.status == "success"
    )
    ok = all(minima_ok.values()) and floor_ok
    summary = ", ".join(f"{p}:{f:.3f}" for p, f in mean_f.items())
    check(
        "efficiency structure",
        ok,
        f"local minima at boundaries {minima_ok}, successful f >= 1.0: "
        f"{floor_ok}; mean f {summary}",
    )


def test_criterion_09_throughput_floor():
    rates = (0.01, 0.02, 0.03, 0.04)
    records = sweep_time(rates, trials=5, key_length=8 * 65536,
                         parallel_sessions=8)
    means = {
        p: float(np.mean(
            [r.throughput_bps for r in records if r.p_true == p]
        ))
        for p in rates
    }
    ok = all(v >= 1.5e6 for v in means.values())
    check(
        "throughput floor",
        ok,
        "mean Mbit/s " + ", ".join(f"{p}:{v / 1e6:.2f}" for p, v in means.items()),
    )


def test_criterion_10_cascade_baseline():
    trials = 10
    zero_residual = 0
    total = 0
    f_gap_ok = {}
    rt_gap_ok = {}
    for pi, p in enumerate((0.01, 0.03, 0.05)):
        casc_f, prop_f, casc_rt, prop_rt = [], [], [], []
        for t in range(trials):
            noise_seed = 77_000 + 1000 * pi + t
            rng = np.random.default_rng(noise_seed + 7)
            alice = KeyString.random(65536, rng)
            bob, _ = inject_errors(alice, p, noise_seed)
            ca, cb, _, cep = run_session_pair(
                alice, bob, p, 5, 78, protocol="cascade"
            )
            pa, pb, _, pep = run_session_pair(alice, bob, p, 5, 78)
            total += 1
            if (
                ca.final_key is not None
                and cb.final_key is not None
                and hamming_distance(ca.final_key, cb.final_key) == 0
            ):
                zero_residual += 1
            casc_f.append(cb.efficiency_f)
            prop_f.append(pb.efficiency_f)
            casc_rt.append(cep.stats.round_trips)
            prop_rt.append(pep.stats.round_trips)
        f_gap_ok[p] = float(np.mean(casc_f)) < float(np.mean(prop_f))
        rt_gap_ok[p] = float(np.mean(casc_rt)) > float(np.mean(prop_rt))
    residual_ok = zero_residual / total >= 0.99
    ok = all(f_gap_ok.values()) and all(rt_gap_ok.values()) and residual_ok
    check(
        "cascade baseline",
        ok,
        f"mean f lower {f_gap_ok}, round trips higher {rt_gap_ok}, "
        f"zero-residual {zero_residual}/{total}",
    )


def test_criterion_11_transport_substitution():
    p, noise_seed = 0.03, 424242
    rng = np.random.default_rng(noise_seed + 7)
    alice = KeyString.random(65536, rng)
    bob, _ = inject_errors(alice, p, noise_seed)

    mem_a, mem_b, mem_ep_a, mem_ep_b = run_session_pair(alice, bob, p, 5, 78)

    srv, port = transport.listen("127.0.0.1", 0)
    results = {}

    def server():
        channel = transport.accept(srv)
        cfg = SessionConfig(65536, p, 5, 78, ROLE_ALICE)
        results["a"] = reconcile(alice, cfg, channel)
        results["ep_a"] = channel

    thread = threading.Thread(target=server, daemon=True)
    thread.start()
    channel = transport.connect("127.0.0.1", port)
    cfg = SessionConfig(65536, p, 5, 78, ROLE_BOB)
    tcp_b = reconcile(bob, cfg, channel)
    thread.join(timeout=60)
    srv.close()
    tcp_a = results["a"]
    tcp_ep_a = results["ep_a"]

    transcripts_equal = (
        bytes(mem_ep_a.transcript) == bytes(tcp_ep_a.transcript)
        and bytes(mem_ep_b.transcript) == bytes(channel.transcript)
    )
    outcomes_equal = (
        mem_b.status == tcp_b.status
        and mem_a.ledger == tcp_a.ledger
        and mem_b.ledger == tcp_b.ledger
        and mem_b.passes_run == tcp_b.passes_run
        and mem_b.final_key == tcp_b.final_key
    )
    channel.close()
    check(
        "transport substitution",
        transcripts_equal and outcomes_equal,
        f"transcripts byte-identical: {transcripts_equal}, outcomes "
        f"identical: {outcomes_equal} (status {tcp_b.status}, "
        f"{tcp_b.passes_run} passes)",
    )
