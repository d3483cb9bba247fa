import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import sufficient_tests_reference, wilson_reference
from pooldecode import harness
from pooldecode.harness import (CSV_COLUMNS, ExperimentSpec, TargetUnreachable,
                                canonical_decoder, estimate_aper, find_min_tests,
                                robustness_table, run_trial, run_trials, search_min_tests,
                                summary_row, sweep_aper_vs_M, sweep_M_vs_L, sweep_noise,
                                wilson_interval, write_csv)
from pooldecode.model import NoiseParams


def small(**kw):
    base = dict(N=32, K=2, L=8, M=60, noise=NoiseParams(0.05, 0.1), trials=40)
    base.update(kw)
    return ExperimentSpec(**base)


class TestWilson:
    def test_known_value(self):
        lo, hi = wilson_interval(10, 100)
        assert lo == pytest.approx(0.0552, abs=1e-4) and hi == pytest.approx(0.1744, abs=1e-4)

    @given(st.integers(1, 2000), st.data())
    @settings(max_examples=60, deadline=None)
    def test_against_formula(self, n, data):
        k = data.draw(st.integers(0, n))
        assert wilson_interval(k, n) == pytest.approx(wilson_reference(k, n), abs=1e-9)


class TestSpec:
    def test_defaults(self):
        s = ExperimentSpec(N=64, K=4, L=16, decoder="coal")
        assert s.decoder == "CoAl" and s.K_hat == 4 and s.p == 0.25

    def test_u_known_design(self):
        s = ExperimentSpec(N=64, K=4, L=16, noise=NoiseParams(0.2, 0), u_known=True)
        assert s.p == pytest.approx(1 / (0.8 * 4))

    def test_k_zero_gets_unit_k_hat(self):
        assert ExperimentSpec(N=10, K=0, L=3).K_hat == 1

    @pytest.mark.parametrize("kw", [dict(L=0), dict(K=40), dict(M=-1), dict(trials=0),
                                    dict(decoder="nope"), dict(tie_rule="coin"),
                                    dict(K_hat=0), dict(psi=-0.1), dict(eps0=1.0),
                                    dict(decoder="InDirAl", L=31)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            small(**kw)

    def test_psi_resolution(self):
        assert small(decoder="RoAl").resolved_psi() is None
        assert small(decoder="CoAl", psi=0.3).resolved_psi() == 0.3
        co, colp = small(decoder="CoAl").resolved_psi(), small(decoder="CoLpAl").resolved_psi()
        assert 0 < colp <= co

    def test_canonical(self):
        assert canonical_decoder("rolpal++") == "RoLpAl++"
        with pytest.raises(ValueError):
            canonical_decoder("LP9")


class TestTrials:
    def test_no_defectives_always_succeeds(self):
        for dec in ("RoAl", "CoAl", "RoLpAl", "RoLpAl++", "CoLpAl", "NA1by1", "InDirAl"):
            est = estimate_aper(small(K=0, M=5, trials=10, decoder=dec), workers=1)
            assert est.failures == 0, dec

    def test_deterministic(self):
        a = run_trial(small(decoder="RoLpAl"), 7)
        b = run_trial(small(decoder="RoLpAl"), 7)
        assert (a.success, a.flags) == (b.success, b.flags)

    def test_parallel_matches_sequential(self):
        s = small(decoder="CoAl", M=40, trials=30)
        seq = run_trials(s, range(30), workers=1)
        par = run_trials(s, range(30), workers=2)
        assert [r.index for r in par] == list(range(30))
        assert [(r.success, r.flags) for r in seq] == [(r.success, r.flags) for r in par]

    def test_seed_changes_outcomes(self):
        a = [r.success for r in run_trials(small(M=6, trials=40), range(40), 1)]
        b = [r.success for r in run_trials(small(M=6, trials=40, root_seed=1), range(40), 1)]
        assert a != b

    def test_decoder_error_is_recorded(self, monkeypatch):
        def boom(*a, **k):
            raise FloatingPointError("bad pivot")
        monkeypatch.setattr(harness, "decode_roal", boom)
        rec = run_trial(small(decoder="RoAl"), 0)
        assert not rec.success and "error" in rec.flags and "bad pivot" in rec.error
        est = estimate_aper(small(decoder="RoAl", trials=5), workers=1)
        assert est.failures == 5 and est.flags["error"] == 5

    def test_estimate_fields(self):
        est = estimate_aper(small(M=20, trials=50), workers=1)
        assert est.trials == 50 and est.error_rate == est.failures / 50
        assert est.ci_low <= est.error_rate <= est.ci_high

    def test_noiseless_at_four_times_sufficient(self):
        M = 4 * sufficient_tests_reference(32, 2, 8, 0, 0, 1.0, 0.0)
        s = ExperimentSpec(N=32, K=2, L=8, M=M, decoder="CoAl", trials=1000)
        assert estimate_aper(s, workers=1).failures <= 1


class TestSearch:
    def test_step_probe(self):
        M, curve = search_min_tests(lambda m, t: (t if m < 100 else 0, t), 0.1, 20, 5000)
        assert M == 100 and curve[100] == (0, 500)

    def test_resolution(self):
        M, _ = search_min_tests(lambda m, t: (t if m < 1234 else 0, t), 0.1, 20, 20000)
        assert 1234 <= M <= 1234 + max(1, int(0.01 * M))

    def test_target_one_returns_lower_end(self):
        M, curve = search_min_tests(lambda m, t: (t, t), 1.0, 20, 100)
        assert M == 20 and curve == {}

    def test_first_point_meets_target(self):
        assert search_min_tests(lambda m, t: (0, t), 0.1, 20, 100)[0] == 20

    def test_unreachable(self):
        with pytest.raises(TargetUnreachable) as info:
            search_min_tests(lambda m, t: (t // 2, t), 0.1, 20, 100)
        assert info.value.curve[-1][0] == 100

    def test_bad_range(self):
        with pytest.raises(ValueError):
            search_min_tests(lambda m, t: (0, t), 0.1, 100, 100)

    def test_looser_target_needs_fewer_tests(self):
        s = ExperimentSpec(N=64, K=4, L=16, noise=NoiseParams(), decoder="RoAl")
        a = find_min_tests(s, 0.2, 5, 2000, trials_per_probe=200, final_trials=200, workers=1)
        b = find_min_tests(s, 0.1, 5, 2000, trials_per_probe=200, final_trials=200, workers=1)
        assert a.M <= b.M
        assert b.M_ci[0] <= b.M <= b.M_ci[1]
        assert b.probe_trials == 200 * b.probes


class TestSweeps:
    def test_aper_vs_m_rows(self):
        rows = sweep_aper_vs_M(small(trials=20), [20, 40], decoders=["RoAl", "coal"], workers=1)
        assert [(r["decoder"], r["M"]) for r in rows] == [("RoAl", 20), ("RoAl", 40),
                                                          ("CoAl", 20), ("CoAl", 40)]
        assert all(r["sweep_id"] == "aper_vs_M" for r in rows)

    def test_common_random_numbers(self):
        # prefix-nested designs: more tests never flip a noiseless RoAl success at L=1
        rows = sweep_aper_vs_M(small(noise=NoiseParams(), L=1, trials=60), [10, 20, 40, 80],
                               workers=1)
        fails = [r["failures"] for r in rows]
        assert fails == sorted(fails, reverse=True)

    def test_noise_sweep(self):
        rows = sweep_noise(small(trials=10), q_grid=[0.0, 0.2], workers=1)
        assert [r["q"] for r in rows] == [0.0, 0.2] and rows[0]["u"] == 0.05
        with pytest.raises(ValueError):
            sweep_noise(small(), workers=1)

    def test_m_vs_l(self):
        rows = sweep_M_vs_L(small(noise=NoiseParams()), [4, 8], 0.2, 5, 400, ["CoAl"], 50, 50, 1)
        assert [r["L"] for r in rows] == [4, 8] and all(r["M"] > 0 for r in rows)

    def test_unreachable_row(self):
        rows = sweep_M_vs_L(small(), [8], 0.001, 5, 8, ["RoAl"], 20, 20, 1)
        assert rows[0]["flags"] == "target_unreachable" and rows[0]["M"] == ""

    def test_robustness_baseline(self):
        rows = robustness_table(small(noise=NoiseParams()), [1.0, 2.0], 0.2, 5, 400,
                                ["CoAl"], 50, 50, 1)
        assert [r["delta_k"] for r in rows] == [1.0, 2.0]
        assert rows[0]["delta_m"] == 1.0 and rows[0]["K_hat"] == 2 and rows[1]["K_hat"] == 4
        assert rows[1]["delta_m"] == pytest.approx(rows[1]["M"] / rows[0]["M"])


class TestCsv:
    def test_layout(self):
        s = small(decoder="CoAl")
        est = estimate_aper(s.replace(trials=5), workers=1)
        buf = io.StringIO()
        write_csv([summary_row(s, est, sweep_id="x")], buf, ["first", "second"])
        lines = buf.getvalue().splitlines()
        assert lines[:2] == ["# first", "# second"]
        rows = list(csv.DictReader(lines[2:]))
        assert list(rows[0]) == list(CSV_COLUMNS) + ["sweep_id"]
        assert rows[0]["decoder"] == "CoAl" and int(rows[0]["trials"]) == 5
        assert float(rows[0]["psi"]) == pytest.approx(s.resolved_psi(), rel=1e-5)

    def test_non_weighted_psi_blank(self):
        buf = io.StringIO()
        write_csv([summary_row(small(decoder="RoAl"), None)], buf)
        assert list(csv.DictReader(buf.getvalue().splitlines()))[0]["psi"] == ""


def test_at_lower_end_is_flagged():
    s = small(noise=NoiseParams(), decoder="CoAl")
    row = sweep_M_vs_L(s, [8], 0.9, 30, 400, None, 20, 20, 1)[0]
    assert row["M"] == 30 and "at_M_lo" in row["flags"]
    assert row["M_ci_low"] == row["M_ci_high"] == 30
