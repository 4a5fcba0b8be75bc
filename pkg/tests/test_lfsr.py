"""Shift-register streams, pair-swap permutations and the separation
metric, checked against brute-force oracles on small sizes."""

import numpy as np
import pytest

from qkrecon.lfsr import (
    PRIMITIVE_TAPS,
    LfsrPositionSource,
    LfsrSpec,
    PermutationPlan,
    apply_permutation,
    lfsr_stream,
    one_lfsr_permutation,
    position_sequence,
    separation_score,
    two_lfsr_permutation,
)
from qkrecon.bitcore import KeyString


def reference_stream(spec: LfsrSpec, count: int):
    """Bit-at-a-time Fibonacci register, independent of the cycle cache."""
    mask = spec.tap_mask
    state = spec.seed
    out = []
    for _ in range(count):
        out.append(state)
        feedback = bin(state & mask).count("1") & 1
        state = (state >> 1) | (feedback << (spec.width - 1))
    return out


@pytest.mark.parametrize("width", sorted(PRIMITIVE_TAPS))
def test_all_tap_sets_are_maximal_length(width):
    spec = LfsrSpec(width, PRIMITIVE_TAPS[width], 1)
    states = lfsr_stream(spec, spec.period)
    assert len(set(states.tolist())) == spec.period
    assert 0 not in states


@pytest.mark.parametrize("width", [3, 5, 8, 11])
def test_stream_matches_reference_register(width):
    spec = LfsrSpec(width, PRIMITIVE_TAPS[width], 3)
    count = min(40, spec.period)
    got = lfsr_stream(spec, count).tolist()
    assert got == reference_stream(spec, count)


def test_spec_rejects_bad_parameters():
    with pytest.raises(ValueError):
        LfsrSpec(8, PRIMITIVE_TAPS[8], 0)  # all-zero state is a fixed point
    with pytest.raises(ValueError):
        LfsrSpec(8, PRIMITIVE_TAPS[8], 256)
    with pytest.raises(ValueError):
        LfsrSpec(8, (6, 5), 1)  # taps must include the width
    with pytest.raises(ValueError):
        LfsrSpec(1, (1,), 1)


def test_position_sequence_covers_range_exactly_once():
    for width in (3, 4, 8):
        n = 1 << width
        seq = position_sequence(LfsrSpec(width, PRIMITIVE_TAPS[width], 1), n)
        assert seq[0] == 0
        assert sorted(seq.tolist()) == list(range(n))
    with pytest.raises(ValueError):
        position_sequence(LfsrSpec(4, PRIMITIVE_TAPS[4], 1), 32)


def test_position_source_advances_between_requests():
    src = LfsrPositionSource(LfsrSpec(8, PRIMITIVE_TAPS[8], 5))
    first = src.next_positions(256)
    second = src.next_positions(256)
    assert sorted(first.tolist()) == list(range(256))
    assert sorted(second.tolist()) == list(range(256))
    assert not np.array_equal(first, second)


def test_position_source_filters_states_for_short_blocks():
    src = LfsrPositionSource(LfsrSpec(8, PRIMITIVE_TAPS[8], 5))
    seq = src.next_positions(64)
    assert sorted(seq.tolist()) == list(range(64))


def test_position_source_matches_filtered_reference():
    spec = LfsrSpec(8, PRIMITIVE_TAPS[8], 17)
    src = LfsrPositionSource(spec)
    got = src.next_positions(32)
    ref = [s for s in reference_stream(spec, spec.period) if s < 32]
    assert got.tolist() == [0] + ref[:31]


def test_permutation_plan_inverse_and_bijection():
    rng = np.random.default_rng(0)
    gather = rng.permutation(50)
    plan = PermutationPlan(gather)
    assert plan.is_bijection()
    inv = plan.inverse()
    assert np.array_equal(inv.gather[plan.gather], np.arange(50))
    ident = PermutationPlan.identity(8)
    assert np.array_equal(ident.gather, np.arange(8))


def test_two_lfsr_permutation_is_deterministic_bijection():
    plan = two_lfsr_permutation(5, 78, 4096)
    again = two_lfsr_permutation(5, 78, 4096)
    assert plan.is_bijection()
    assert np.array_equal(plan.gather, again.gather)
    assert not np.array_equal(plan.gather, np.arange(4096))


def test_two_lfsr_permutation_requires_power_of_two():
    with pytest.raises(ValueError):
        two_lfsr_permutation(5, 78, 1000)


def test_identical_seeds_warn():
    with pytest.warns(UserWarning):
        plan = two_lfsr_permutation(9, 9, 256)
    assert np.array_equal(plan.gather, np.arange(256))


def test_one_lfsr_permutation_is_bijection():
    plan = one_lfsr_permutation(5, 1024)
    assert plan.is_bijection()


def test_apply_permutation_moves_bits_as_planned():
    rng = np.random.default_rng(1)
    key = KeyString.random(256, rng)
    plan = two_lfsr_permutation(5, 78, 256)
    out = apply_permutation(key, plan)
    bits = key.to_bits()
    got = out.to_bits()
    for j in range(256):
        assert got[j] == bits[plan.gather[j]]


def brute_force_d_tot(plan: PermutationPlan, n_pre: int, n_post: int) -> float:
    """O(N * n) oracle straight from the definition of the metric."""
    n = plan.length
    scores = []
    for pos in range(n):
        block = pos // n_pre
        mates = [
            q
            for q in range(block * n_pre, min((block + 1) * n_pre, n))
            if q != pos
        ]
        if not mates:
            continue
        mine = plan.forward[pos] // n_post
        separated = sum(
            1 for q in mates if plan.forward[q] // n_post != mine
        )
        scores.append(separated / len(mates))
    return float(np.mean(scores))


@pytest.mark.parametrize("n_pre,n_post", [(16, 16), (16, 32), (8, 8)])
def test_separation_score_matches_brute_force(n_pre, n_post):
    plan = two_lfsr_permutation(5, 78, 1024)
    fast = separation_score(plan, n_pre, n_post).d_tot
    slow = brute_force_d_tot(plan, n_pre, n_post)
    assert fast == pytest.approx(slow, abs=1e-12)


def test_separation_score_on_random_permutation_with_partial_block():
    rng = np.random.default_rng(7)
    plan = PermutationPlan(rng.permutation(500))  # trailing partial blocks
    fast = separation_score(plan, 16, 16).d_tot
    slow = brute_force_d_tot(plan, 16, 16)
    assert fast == pytest.approx(slow, abs=1e-12)


def test_separation_score_identity_is_zero():
    plan = PermutationPlan.identity(256)
    assert separation_score(plan, 16, 16).d_tot == 0.0


def test_separation_score_validates_block_lengths():
    plan = PermutationPlan.identity(64)
    with pytest.raises(ValueError):
        separation_score(plan, 1, 16)
    with pytest.raises(ValueError):
        separation_score(plan, 16, 0)
