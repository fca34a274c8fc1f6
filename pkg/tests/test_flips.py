"""Flip ledger: flip sets, rates, cumulative stats, hit rate, invariants."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from agentline.flips import (
    DEFAULT_EPSILON,
    FlipDomainError,
    PassVector,
    build_flip_report,
    compute_flips,
    cumulative_stats,
    flip_rates,
    hit_rate,
)
from conftest import GATE_SUMMARY_ROWS, make_record


def _oracle_flips(prev: dict, cand: dict):
    # Elementwise scan, independent of the set-based implementation.
    p2f, f2p = set(), set()
    for key in prev:
        if prev[key] and not cand[key]:
            p2f.add(key)
        if not prev[key] and cand[key]:
            f2p.add(key)
    return p2f, f2p


def _vec(tag: str, passes: dict) -> PassVector:
    return PassVector(tag=tag, passes=passes)


class TestComputeFlips:
    def test_identical_vectors_no_flips(self):
        passes = {f"e{i}": i % 2 == 0 for i in range(10)}
        assert compute_flips(_vec("a", passes), _vec("b", passes)) == (set(), set())

    def test_all_fail_to_all_pass(self):
        prev = _vec("a", {f"e{i}": False for i in range(10)})
        cand = _vec("b", {f"e{i}": True for i in range(10)})
        p2f, f2p = compute_flips(prev, cand)
        assert p2f == set()
        assert f2p == {f"e{i}" for i in range(10)}

    def test_domain_mismatch_lists_missing_ids(self):
        prev = _vec("a", {"e1": True, "e2": False})
        cand = _vec("b", {"e1": True})
        with pytest.raises(FlipDomainError, match="e2"):
            compute_flips(prev, cand)

    def test_1000_random_pairs_match_elementwise_oracle(self):
        rng = random.Random(42)
        for _ in range(1000):
            n = rng.randint(0, 60)
            ids = [f"e{i}" for i in range(n)]
            prev = {i: rng.random() < 0.5 for i in ids}
            cand = {i: rng.random() < 0.5 for i in ids}
            assert compute_flips(_vec("p", prev), _vec("c", cand)) == _oracle_flips(prev, cand)


class TestFlipRates:
    def test_zero_prior_passes_guarded(self):
        prev = _vec("a", {f"e{i}": False for i in range(5)})
        cand = _vec("b", {f"e{i}": i == 0 for i in range(5)})
        p2f, f2p = compute_flips(prev, cand)
        rho_p2f, rho_f2p = flip_rates(p2f, f2p, prev)
        assert rho_p2f == 0.0
        assert rho_f2p == pytest.approx(1 / 5, abs=1e-6)

    def test_three_decimal_rate_precision(self):
        # 4 regressions against 667 prior passes reads as 0.006 at the
        # reported 3-decimal precision.
        prev = _vec("a", {f"p{i}": True for i in range(667)} | {f"f{i}": False for i in range(333)})
        cand_passes = dict(prev.passes)
        for i in range(4):
            cand_passes[f"p{i}"] = False
        p2f, f2p = compute_flips(prev, _vec("b", cand_passes))
        rho_p2f, _ = flip_rates(p2f, f2p, prev)
        assert round(rho_p2f, 3) == 0.006

    def test_rates_match_exact_fraction_oracle(self):
        rng = random.Random(17)
        for _ in range(300):
            n = rng.randint(1, 80)
            prev = {f"e{i}": rng.random() < 0.5 for i in range(n)}
            cand = {f"e{i}": rng.random() < 0.5 for i in range(n)}
            pv, cv = _vec("p", prev), _vec("c", cand)
            p2f, f2p = compute_flips(pv, cv)
            rho_p2f, rho_f2p = flip_rates(p2f, f2p, pv)
            n_pass = sum(prev.values())
            n_fail = n - n_pass
            eps = Fraction(1, 10**9)
            oracle_p2f = Fraction(len(p2f)) / (n_pass + eps)
            oracle_f2p = Fraction(len(f2p)) / (n_fail + eps)
            assert abs(rho_p2f - float(oracle_p2f)) < 1e-12
            assert abs(rho_f2p - float(oracle_f2p)) < 1e-12

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ValueError):
            flip_rates(set(), set(), _vec("a", {"e": True}), epsilon=0)

    def test_epsilon_stability_on_nondegenerate_denominators(self):
        prev = _vec("a", {f"e{i}": i < 50 for i in range(100)})
        cand = _vec("b", {f"e{i}": i < 40 for i in range(100)})
        p2f, f2p = compute_flips(prev, cand)
        reference = flip_rates(p2f, f2p, prev, epsilon=1e-9)
        for eps in (1e-12, 1e-9, 1e-7, 1e-6):
            got = flip_rates(p2f, f2p, prev, epsilon=eps)
            assert got[0] == pytest.approx(reference[0], abs=1e-6)
            assert got[1] == pytest.approx(reference[1], abs=1e-6)


class TestCumulativeStats:
    def test_identity_against_baseline(self):
        baseline = _vec("v0", {f"e{i}": i % 3 == 0 for i in range(30)})
        ftp, p2p = cumulative_stats(baseline, baseline)
        assert ftp == 0.0
        assert p2p == pytest.approx(1.0, abs=1e-6)

    def test_all_fail_baseline_half_fixed(self):
        baseline = _vec("v0", {f"e{i}": False for i in range(10)})
        current = _vec("v5", {f"e{i}": i < 5 for i in range(10)})
        ftp, p2p = cumulative_stats(baseline, current)
        assert ftp == pytest.approx(0.5, abs=1e-6)
        assert p2p == 1.0  # vacuous denominator resolves to 1.0 by convention

    def test_trajectory_shape_matches_golden_pattern(self):
        # Replay the golden trajectory's flip counts on a 1000-example world with 400
        # initial failures: FTP must be nondecreasing across accepted
        # iterations and P2P must stay at or above 0.95.
        n_fail, n_pass = 400, 600
        fail_ids = [f"f{i}" for i in range(n_fail)]
        pass_ids = [f"p{i}" for i in range(n_pass)]
        baseline = _vec("v0", {i: False for i in fail_ids} | {i: True for i in pass_ids})

        current = dict(baseline.passes)
        fixed_cursor, broken_cursor = 0, 0
        ftps = []
        p2ps = []
        for iteration, accepted, f2p, p2f, _rho, _hit, _ftp, _p2p in GATE_SUMMARY_ROWS:
            if not accepted:
                continue  # rejected candidates never change the line
            candidate = dict(current)
            for _ in range(f2p):
                candidate[fail_ids[fixed_cursor]] = True
                fixed_cursor += 1
            for _ in range(p2f):
                candidate[pass_ids[broken_cursor]] = False
                broken_cursor += 1
            current = candidate
            ftp, p2p = cumulative_stats(baseline, _vec(f"v{iteration}", current))
            ftps.append(ftp)
            p2ps.append(p2p)
        assert all(a <= b + 1e-12 for a, b in zip(ftps, ftps[1:]))
        assert all(p >= 0.95 for p in p2ps)
        assert ftps[-1] > 0.3  # fixes accumulate


class TestHitRate:
    def test_all_fixes_on_target(self):
        records = {f"e{i}": make_record(f"e{i}", False, "tool_error") for i in range(4)}
        rate = hit_rate({"e0", "e1", "e2", "e3"}, records, {"tool_error"})
        assert rate == pytest.approx(1.0, abs=1e-6)

    def test_empty_fix_set_is_non_evidence(self):
        assert hit_rate(set(), {}, {"tool_error"}) is None

    def test_matches_counting_oracle(self):
        rng = random.Random(3)
        labels = ["a", "b", "c", "d"]
        for _ in range(200):
            n = rng.randint(1, 30)
            records = {
                f"e{i}": make_record(f"e{i}", False, rng.choice(labels)) for i in range(n)
            }
            f2p = {f"e{i}" for i in range(n) if rng.random() < 0.4}
            targets = set(rng.sample(labels, rng.randint(1, 3)))
            got = hit_rate(f2p, records, targets)
            hits = sum(1 for x in f2p if records[x].critic.symptom_label in targets)
            if not f2p:
                assert got is None
            else:
                assert got == pytest.approx(hits / len(f2p), abs=1e-6)


@st.composite
def vector_pairs(draw):
    n = draw(st.integers(min_value=0, max_value=200))
    prev = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    cand = draw(st.lists(st.booleans(), min_size=n, max_size=n))
    ids = [f"e{i}" for i in range(n)]
    return dict(zip(ids, prev)), dict(zip(ids, cand))


class TestReportInvariants:
    @settings(max_examples=200)
    @given(vector_pairs())
    def test_conservation_disjointness_containment(self, pair):
        prev_passes, cand_passes = pair
        prev, cand = _vec("p", prev_passes), _vec("c", cand_passes)
        report = build_flip_report(prev, cand, prev)
        # conservation: |cand pass| = |prev pass| - |P2F| + |F2P|
        assert report.cand_pass_count == report.prev_pass_count - len(report.p2f_ids) + len(report.f2p_ids)
        assert not (report.p2f_ids & report.f2p_ids)
        assert report.p2f_ids <= prev.pass_ids
        assert report.f2p_ids <= prev.fail_ids
        for value in (report.rho_p2f, report.rho_f2p, report.ftp, report.p2p):
            assert 0.0 <= value <= 1.0

    def test_round_trip(self):
        prev = _vec("p", {"a": True, "b": False, "c": True})
        cand = _vec("c", {"a": False, "b": True, "c": True})
        records = {"a": make_record("a", False), "b": make_record("b", False, "empty_output")}
        report = build_flip_report(prev, cand, prev, records, {"empty_output"})
        from agentline.flips import FlipReport

        assert FlipReport.from_dict(report.to_dict()) == report
        assert report.hit_rate == pytest.approx(1.0, abs=1e-6)

    def test_epsilon_recorded(self):
        prev = _vec("p", {"a": True})
        report = build_flip_report(prev, prev, prev)
        assert report.epsilon == DEFAULT_EPSILON
