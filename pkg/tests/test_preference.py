import math

import numpy as np
import pytest

from redforge.config import PrefConfig
from redforge.preference import (
    DpoLogProbs,
    DpoParams,
    JudgeCalibration,
    build_pref_dataset,
    combined_objective,
    dpo_batch_objective,
    dpo_loss,
    error_pairs,
    judge_gate,
    judge_pairs,
    ordinal_pairs,
)
from redforge.records import CalibrationItem, JudgedCandidate, PredictionLogEntry, TaskSample


def mc(options, answer, prompt="which one"):
    return TaskSample("Note Taxonomy", "content_understanding", "multiple_choice",
                      prompt, answer, options=tuple(options))


def calibration(matches, total):
    items = [CalibrationItem("A", "A")] * matches + [CalibrationItem("A", "B")] * (total - matches)
    return JudgeCalibration(tuple(items))


class TestOrdinalPairs:
    def test_four_options_answer_b(self):
        pairs = ordinal_pairs(mc(["a", "b", "c", "d"], "b"))
        assert [(p.chosen, p.rejected) for p in pairs] == [("b", "a"), ("b", "c"), ("b", "d")]
        assert all(p.strategy == "ordinal" for p in pairs)

    def test_two_options(self):
        assert len(ordinal_pairs(mc(["yes", "no"], "yes"))) == 1

    def test_duplicate_of_answer_skipped(self):
        pairs = ordinal_pairs(mc(["b", "a", "b"], "b"))
        assert [(p.chosen, p.rejected) for p in pairs] == [("b", "a")]

    def test_duplicate_distractors_emitted_once(self):
        pairs = ordinal_pairs(mc(["a", "x", "x", "a"], "a"))
        assert len(pairs) == 1

    def test_distinct_option_law(self):
        samples = [
            mc(["a", "b", "c", "d"], "a"),
            mc(["a", "b", "b", "c"], "c"),
            mc(["x", "y"], "x"),
        ]
        for s in samples:
            expected = len(set(s.options)) - 1
            assert len(ordinal_pairs(s)) == expected

    def test_non_mc_rejected(self):
        s = TaskSample("Post-View Search", "user_behavior_modeling", "generation", "p", "a")
        with pytest.raises(ValueError):
            ordinal_pairs(s)

    def test_source_id_stable(self):
        s = mc(["a", "b"], "a")
        assert ordinal_pairs(s)[0].source_id == ordinal_pairs(s)[0].source_id


class TestErrorPairs:
    def entry(self, i, gold, predicted):
        return PredictionLogEntry(f"e{i}", f"q{i}", gold, predicted)

    def test_counts_wrong_predictions(self):
        log = [self.entry(i, "gold", "gold" if i < 6 else "wrong") for i in range(10)]
        pairs = error_pairs(log)
        assert len(pairs) == 4
        assert all(p.chosen == "gold" and p.rejected == "wrong" for p in pairs)
        assert all(p.strategy == "error" for p in pairs)

    def test_all_correct_log(self):
        assert error_pairs([self.entry(i, "g", "g") for i in range(5)]) == []

    def test_whitespace_only_difference_is_not_an_error(self):
        assert error_pairs([self.entry(0, "the answer", "  the  answer ")]) == []


class TestJudge:
    def test_gate_at_boundary_admits(self):
        assert judge_gate(calibration(8, 10), tau=0.8) is True

    def test_below_boundary_refused(self):
        assert judge_gate(calibration(7, 10), tau=0.8) is False

    def test_zero_tau_always_admits(self):
        assert judge_gate(calibration(0, 4), tau=0.0) is True

    def test_empty_calibration_is_error(self):
        with pytest.raises(ValueError):
            judge_gate(JudgeCalibration(()))

    def test_judge_pairs_follow_preference(self):
        judged = [
            JudgedCandidate("j0", "q", "left", "right", "A"),
            JudgedCandidate("j1", "q", "left", "right", "B"),
            JudgedCandidate("j2", "q", "same", "same", "A"),
        ]
        pairs = judge_pairs(judged)
        assert [(p.chosen, p.rejected) for p in pairs] == [("left", "right"), ("right", "left")]


class TestDpoLoss:
    def test_equal_log_probs_gives_ln2(self):
        assert dpo_loss(-1.0, -1.0, -1.0, -1.0) == pytest.approx(math.log(2), abs=1e-12)

    def test_hand_derived_margin_case(self):
        # policy margin 1.0, reference margin 0.6, beta 0.1:
        # -ln sigmoid(0.04) = ln(1 + e^-0.04) = 0.6733471672...
        value = dpo_loss(-1.0, -2.0, -1.2, -1.8, beta=0.1)
        assert value == pytest.approx(math.log(1 + math.exp(-0.04)), abs=1e-12)
        assert value == pytest.approx(0.673347, abs=1e-6)

    def test_sigmoid_symmetry(self):
        fwd = dpo_loss(-1.0, -2.5, -1.1, -2.2, beta=0.3)
        rev = dpo_loss(-2.5, -1.0, -2.2, -1.1, beta=0.3)
        assert math.exp(-fwd) + math.exp(-rev) == pytest.approx(1.0, abs=1e-12)

    def test_strictly_positive(self):
        assert dpo_loss(5.0, -5.0, 0.0, 0.0, beta=2.0) > 0

    def test_monotone_and_matches_finite_differences(self):
        rng = np.random.default_rng(99)
        h = 1e-5
        for _ in range(1000):
            plc, plr, rlc, rlr = rng.normal(scale=3.0, size=4)
            beta = float(rng.uniform(0.05, 2.0))
            up = dpo_loss(plc + h, plr, rlc, rlr, beta)
            down = dpo_loss(plc - h, plr, rlc, rlr, beta)
            assert up < down  # strictly decreasing in policy chosen lp
            numeric = (up - down) / (2 * h)
            z = beta * ((plc - plr) - (rlc - rlr))
            analytic = -beta / (1 + math.exp(z))
            assert numeric == pytest.approx(analytic, abs=1e-6)

    def test_shift_invariance(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            plc, plr, rlc, rlr, c1, c2 = rng.normal(scale=2.0, size=6)
            base = dpo_loss(plc, plr, rlc, rlr)
            shifted = dpo_loss(plc + c1, plr + c1, rlc + c2, rlr + c2)
            assert abs(base - shifted) <= 1e-12

    def test_extreme_margins_stay_finite(self):
        assert dpo_loss(300.0, -300.0, 0.0, 0.0, beta=1.0) > 0
        assert math.isfinite(dpo_loss(-800.0, 800.0, 0.0, 0.0, beta=1.0))
        assert dpo_loss(800.0, -800.0, 0.0, 0.0, beta=1.0) >= 0.0  # underflows to 0 in float64

    def test_non_finite_input_rejected(self):
        with pytest.raises(ValueError):
            dpo_loss(float("inf"), 0.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            dpo_loss(float("nan"), 0.0, 0.0, 0.0)

    def test_beta_validation(self):
        with pytest.raises(ValueError):
            dpo_loss(0.0, 0.0, 0.0, 0.0, beta=0.0)


class TestCombinedObjective:
    def test_linear_combination(self):
        assert combined_objective(0.6931, 2.0, 0.3) == pytest.approx(1.2931)

    def test_zero_coef_identity(self):
        assert combined_objective(0.42, 5.0, 0.0) == 0.42

    def test_zero_nll_identity(self):
        assert combined_objective(0.42, 0.0, 0.3) == 0.42

    def test_validation(self):
        with pytest.raises(ValueError):
            combined_objective(0.1, -1.0, 0.3)
        with pytest.raises(ValueError):
            combined_objective(0.1, 1.0, -0.3)


class TestBatchObjective:
    def test_mean_over_rows(self):
        rows = [
            DpoLogProbs(-1.0, -1.0, -1.0, -1.0, sft_nll=2.0),
            DpoLogProbs(-1.0, -2.0, -1.2, -1.8, sft_nll=0.0),
        ]
        out = dpo_batch_objective(rows, DpoParams(beta=0.1, sft_loss_coef=0.3))
        expected_losses = [math.log(2), math.log(1 + math.exp(-0.04))]
        assert out["n"] == 2
        assert out["mean_dpo_loss"] == pytest.approx(sum(expected_losses) / 2)
        assert out["mean_objective"] == pytest.approx((expected_losses[0] + 0.6 + expected_losses[1]) / 2)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            dpo_batch_objective([], DpoParams())


class TestBuildPrefDataset:
    def test_ordinal_only_when_judge_gated_out(self):
        samples = [mc(["a", "b", "c", "d"], "a", prompt=f"q{i}") for i in range(5)]
        judged = [JudgedCandidate("j", "jq", "x", "y", "A")]
        pairs, report = build_pref_dataset(samples, [], judged, calibration(5, 10), PrefConfig())
        assert len(pairs) == 15
        assert all(p.strategy == "ordinal" for p in pairs)
        assert report.ordinal == 15 and report.judge == 0
        assert report.judge_admitted is False

    def test_cross_strategy_duplicate_counted_twice_emitted_once(self):
        sample = mc(["good", "bad"], "good", prompt="q")
        log = [PredictionLogEntry("e", "q", "good", "bad")]
        pairs, report = build_pref_dataset([sample], log, [], None, PrefConfig())
        assert len(pairs) == 1
        assert report.ordinal == 1 and report.error == 1
        assert report.duplicates_removed == 1

    def test_empty_inputs(self):
        pairs, report = build_pref_dataset([], [], [], None, PrefConfig())
        assert pairs == []
        assert report.to_json_dict() == {
            "ordinal": 0, "error": 0, "judge": 0, "judge_candidates": 0,
            "judge_admitted": False, "unique_pairs": 0, "duplicates_removed": 0,
        }

    def test_judge_requires_calibration(self):
        judged = [JudgedCandidate("j", "q", "x", "y", "A")]
        with pytest.raises(ValueError):
            build_pref_dataset([], [], judged, None, PrefConfig())

    def test_admitted_judge_pairs_flow_through(self):
        judged = [JudgedCandidate("j", "q", "x", "y", "B")]
        pairs, report = build_pref_dataset([], [], judged, calibration(9, 10), PrefConfig())
        assert [(p.chosen, p.rejected) for p in pairs] == [("y", "x")]
        assert report.judge_admitted is True and report.judge == 1

    def test_every_pair_satisfies_invariants(self):
        samples = [mc(["a", "b", "c"], "b", prompt=f"q{i}") for i in range(4)]
        log = [PredictionLogEntry(f"e{i}", f"p{i}", "gold", "bad") for i in range(3)]
        pairs, _ = build_pref_dataset(samples, log, [], None, PrefConfig())
        for p in pairs:
            assert p.chosen != p.rejected
            if p.strategy in ("ordinal", "error"):
                assert p.chosen in ("b", "gold")
