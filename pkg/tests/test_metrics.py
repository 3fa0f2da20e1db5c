import math
import random
from itertools import permutations

import pytest

from fixture_metrics import build_fixture
from progresskit.metrics import (
    EXCLUDED,
    EmptyInput,
    LengthMismatch,
    TooFewSamples,
    afrr,
    aggregate,
    answerable_breakdown,
    average_ranks,
    nse,
    prc_trajectory,
    score_sample,
    spearman,
    uda,
)
from progresskit.model import ABSTAIN, Modality, ParsedPrediction, ScoredSample, View
from progresskit.parsing import parse_response


# Independent oracles, deliberately different implementations from the library.
def oracle_ranks(values):
    return [
        1 + sum(1 for w in values if w < v) + (sum(1 for w in values if w == v) - 1) / 2
        for v in values
    ]


def oracle_spearman(xs, ys):
    rx, ry = oracle_ranks(xs), oracle_ranks(ys)
    n = len(rx)
    mx, my = sum(rx) / n, sum(ry) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    vx = sum((a - mx) ** 2 for a in rx)
    vy = sum((b - my) ** 2 for b in ry)
    return 100.0 * cov / math.sqrt(vx * vy)


def classical_spearman(xs, ys):
    # 1 - 6*sum(d^2)/(n(n^2-1)); valid for tie-free inputs.
    rx, ry = oracle_ranks(xs), oracle_ranks(ys)
    n = len(xs)
    d2 = sum((a - b) ** 2 for a, b in zip(rx, ry))
    return 100.0 * (1 - 6 * d2 / (n * (n * n - 1)))


def make_sample(
    gt=50.0, score=50.0, ref=3, answerable=True, traj="t", abstain=False, malformed=False
):
    if abstain:
        predicted = ParsedPrediction(ref=ABSTAIN, score=ABSTAIN, format_ok=True)
    elif malformed:
        from progresskit.model import MALFORMED

        predicted = ParsedPrediction(ref=ref, score=MALFORMED, format_ok=False)
    else:
        predicted = ParsedPrediction(ref=ref, score=float(score), format_ok=True)
    sample_nse = None
    if answerable and not abstain and not malformed:
        sample_nse = nse(float(score), float(gt))
    return ScoredSample(
        instance_id=f"{traj}-{random.random()}",
        trajectory_id=traj,
        modality=Modality.VISION,
        view=View.SAME,
        answerable=answerable,
        gt_progress=float(gt) if answerable else ABSTAIN,
        gt_ref_index=3 if answerable else ABSTAIN,
        predicted=predicted,
        nse=sample_nse,
        abstained=abstain,
        reward_components=(0.0, 0.0, 0.0),
        reward_total=0.0,
    )


class TestNse:
    def test_paper_case(self):
        assert nse(76, 80) == pytest.approx(0.05, abs=1e-12)

    def test_identity(self):
        for g in (0, 13, 50, 87.5, 100):
            assert nse(g, g) == 0.0

    def test_maximal_error(self):
        assert nse(100, 0) == 1.0
        assert nse(0, 100) == 1.0

    def test_bounds_and_reflection(self):
        rng = random.Random(2)
        for _ in range(1000):
            p, g = rng.uniform(0, 100), rng.uniform(0, 100)
            v = nse(p, g)
            assert 0.0 <= v <= 1.0
            assert abs(v - nse(100 - p, 100 - g)) < 1e-12

    def test_denominator_always_at_least_fifty(self):
        assert nse(50, 50) == 0.0  # max(50, 50) = 50, no division trouble

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            nse(120, 50)


class TestSpearman:
    def test_perfect_agreement(self):
        assert spearman([10, 20, 30], [1, 2, 3]) == pytest.approx(100.0)

    def test_perfect_reversal(self):
        assert spearman([30, 20, 10], [1, 2, 3]) == pytest.approx(-100.0)

    def test_worked_tied_example(self):
        assert spearman([50, 50, 80], [10, 30, 60]) == pytest.approx(86.6, abs=0.1)

    def test_matches_oracle_on_ties(self):
        rng = random.Random(11)
        for _ in range(500):
            n = rng.randint(2, 12)
            xs = [rng.choice([0, 25, 50, 75, 100]) for _ in range(n)]
            ys = [rng.choice([10, 20, 30]) for _ in range(n)]
            got = spearman(xs, ys)
            if math.isnan(got):
                assert len(set(xs)) == 1 or len(set(ys)) == 1
            else:
                assert got == pytest.approx(oracle_spearman(xs, ys), abs=1e-9)

    def test_matches_classical_formula_tie_free(self):
        for n in range(2, 7):
            base = list(range(n))
            for perm in permutations(base):
                got = spearman([float(x) for x in base], [float(y) for y in perm])
                assert got == pytest.approx(classical_spearman(base, list(perm)), abs=1e-9)

    def test_symmetry(self):
        rng = random.Random(3)
        for _ in range(100):
            xs = [rng.random() for _ in range(6)]
            ys = [rng.random() for _ in range(6)]
            assert spearman(xs, ys) == pytest.approx(spearman(ys, xs), abs=1e-12)

    def test_self_correlation(self):
        assert spearman([1.0, 3.0, 2.0], [1.0, 3.0, 2.0]) == pytest.approx(100.0)

    def test_monotone_transform_invariance(self):
        rng = random.Random(8)
        for _ in range(100):
            xs = [rng.uniform(-3, 3) for _ in range(8)]
            ys = [rng.uniform(-3, 3) for _ in range(8)]
            assert spearman(xs, ys) == pytest.approx(
                spearman([x**3 for x in xs], ys), abs=1e-9
            )

    def test_nan_on_constant_input(self):
        assert math.isnan(spearman([5, 5, 5], [1, 2, 3]))

    def test_errors(self):
        with pytest.raises(LengthMismatch):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(TooFewSamples):
            spearman([1], [2])

    def test_average_ranks_ties(self):
        assert average_ranks([50, 50, 80]) == [1.5, 1.5, 3.0]
        assert average_ranks([30, 10, 30, 30]) == [3.0, 1.0, 3.0, 3.0]


class TestPrcTrajectory:
    def test_monotone_predictions(self):
        samples = [make_sample(gt=g, score=g + 1, traj="a") for g in (10, 30, 50, 70, 90)]
        assert prc_trajectory(samples) == pytest.approx(100.0)

    def test_collapsed_predictions_are_nan(self):
        samples = [make_sample(gt=g, score=50, traj="a") for g in (10, 30, 50, 70, 90)]
        assert math.isnan(prc_trajectory(samples))

    def test_single_valid_sample_excluded(self):
        samples = [make_sample(gt=10, score=20), make_sample(gt=30, abstain=True)]
        assert prc_trajectory(samples) is EXCLUDED

    def test_abstained_and_malformed_not_valid(self):
        samples = [
            make_sample(gt=10, score=20),
            make_sample(gt=30, score=40),
            make_sample(gt=50, abstain=True),
            make_sample(gt=70, malformed=True),
        ]
        assert prc_trajectory(samples) == pytest.approx(100.0)


class TestRates:
    def test_afrr_counting(self):
        samples = [make_sample(abstain=i < 2) for i in range(10)]
        assert afrr(samples) == pytest.approx(20.0)

    def test_afrr_zero_and_full(self):
        assert afrr([make_sample() for _ in range(4)]) == 0.0
        assert afrr([make_sample(abstain=True) for _ in range(4)]) == 100.0

    def test_afrr_empty(self):
        with pytest.raises(EmptyInput):
            afrr([])

    def test_afrr_malformed_stays_in_denominator(self):
        samples = [make_sample(abstain=True), make_sample(malformed=True), make_sample()]
        assert afrr(samples) == pytest.approx(100.0 / 3)

    def test_uda_counting(self):
        samples = [make_sample(answerable=False, abstain=i < 7) for i in range(10)]
        assert uda(samples) == pytest.approx(70.0)

    def test_uda_none_and_all(self):
        assert uda([make_sample(answerable=False) for _ in range(3)]) == 0.0
        assert uda([make_sample(answerable=False, abstain=True) for _ in range(3)]) == 100.0

    def test_breakdown_sums_to_hundred(self):
        rng = random.Random(4)
        for _ in range(50):
            samples = [
                make_sample(
                    abstain=rng.random() < 0.3,
                    malformed=rng.random() < 0.2,
                )
                for _ in range(rng.randint(1, 30))
            ]
            a, v, m = answerable_breakdown(samples)
            assert a + v + m == pytest.approx(100.0, abs=1e-9)
            assert afrr(samples) == pytest.approx(a)


class TestAggregate:
    def test_micro_macro_weighted_example(self):
        # Two settings with NSE means 18.9 and 23.6 over 2364 and 961 samples.
        samples = [make_sample(gt=50, score=50 + 0.189 * 50, traj="a") for _ in range(2364)]
        samples += [
            ScoredSample(
                instance_id=f"b{i}",
                trajectory_id="b",
                modality=Modality.TEXT,
                view=View.NOT_APPLICABLE,
                answerable=True,
                gt_progress=50.0,
                gt_ref_index=3,
                predicted=ParsedPrediction(ref=3, score=50 + 0.236 * 50, format_ok=True),
                nse=0.236,
                abstained=False,
                reward_components=(0, 0, 0),
                reward_total=0.0,
            )
            for i in range(961)
        ]
        report = aggregate(samples)
        assert 100 * report.micro.nse_mean == pytest.approx(20.3, abs=0.1)
        assert 100 * report.macro.nse_mean == pytest.approx(21.25, abs=1e-9)

    def test_single_setting_micro_equals_macro(self):
        samples = [make_sample(gt=g, score=g + 5, traj="a") for g in (10, 30, 50)]
        report = aggregate(samples)
        assert report.micro.nse_mean == pytest.approx(report.macro.nse_mean)
        only = next(iter(report.per_setting.values()))
        assert report.micro.nse_mean == pytest.approx(only.nse_mean)

    def test_micro_identity_sample_weighted(self):
        samples = [make_sample(gt=g, score=g + d, traj=t) for t, g, d in
                   [("a", 10, 2), ("a", 30, 4), ("b", 60, 1)]]
        samples += [
            ScoredSample(
                instance_id=f"t{i}",
                trajectory_id="c",
                modality=Modality.TEXT,
                view=View.NOT_APPLICABLE,
                answerable=True,
                gt_progress=40.0,
                gt_ref_index=2,
                predicted=ParsedPrediction(ref=2, score=45.0, format_ok=True),
                nse=nse(45.0, 40.0),
                abstained=False,
                reward_components=(0, 0, 0),
                reward_total=0.0,
            )
            for i in range(3)
        ]
        report = aggregate(samples)
        weighted = sum(
            sm.nse_mean * sm.n_nse for sm in report.per_setting.values() if sm.nse_mean is not None
        )
        total = sum(sm.n_nse for sm in report.per_setting.values())
        assert report.micro.nse_mean == pytest.approx(weighted / total, abs=1e-9)
        raw_mean = sum(s.nse for s in samples) / len(samples)
        assert report.micro.nse_mean == pytest.approx(raw_mean, abs=1e-9)

    def test_empty_group_warning(self):
        samples = [make_sample(abstain=True) for _ in range(3)]
        report = aggregate(samples)
        assert report.macro.nse_mean is None
        assert any("no valid samples for NSE" in w for w in report.warnings)

    def test_rates_within_bounds(self):
        rng = random.Random(10)
        samples = [
            make_sample(
                gt=rng.uniform(1, 99),
                score=rng.uniform(0, 100),
                answerable=rng.random() < 0.7,
                abstain=rng.random() < 0.2,
                traj=f"t{rng.randint(0, 3)}",
            )
            for _ in range(300)
        ]
        report = aggregate(samples)
        for sm in [*report.per_setting.values(), report.micro, report.macro]:
            for rate in (sm.afrr, sm.uda):
                if rate is not None:
                    assert 0.0 <= rate <= 100.0


class TestFixtureOracle:
    """40-sample fixture vs. the independently computed expectations."""

    # Frozen outputs of the exact-fraction oracle (tests/fixture_metrics.py pairs).
    NSE_A = 0.12798953183568568
    NSE_B = 0.12351851851851851
    MICRO_NSE = 0.1255943461300604
    MACRO_NSE = 0.1257540251771021
    PRC_A = 100.0
    PRC_B = 95.45984484043912
    MICRO_PRC = 96.97322989362608
    MACRO_PRC = 97.72992242021957

    def report(self):
        samples = [
            score_sample(inst, parse_response(raw, n_steps=inst.n_steps))
            for inst, raw in build_fixture()
        ]
        return aggregate(samples)

    def test_per_setting_values(self):
        report = self.report()
        a = report.per_setting["vision:same:answerable"]
        b = report.per_setting["text:not_applicable:answerable"]
        assert a.nse_mean == pytest.approx(self.NSE_A, abs=1e-9)
        assert b.nse_mean == pytest.approx(self.NSE_B, abs=1e-9)
        assert a.prc_mean == pytest.approx(self.PRC_A, abs=1e-9)
        assert b.prc_mean == pytest.approx(self.PRC_B, abs=1e-9)
        assert a.afrr == pytest.approx(12.5, abs=1e-9)
        assert b.afrr == pytest.approx(6.25, abs=1e-9)
        assert a.n_nan_trajectories == 1  # T2 collapsed to a constant prediction
        na = report.per_setting["vision:same:unanswerable"]
        nb = report.per_setting["text:not_applicable:unanswerable"]
        assert na.uda == pytest.approx(75.0) and nb.uda == pytest.approx(25.0)

    def test_micro_macro(self):
        report = self.report()
        assert report.micro.nse_mean == pytest.approx(self.MICRO_NSE, abs=1e-9)
        assert report.macro.nse_mean == pytest.approx(self.MACRO_NSE, abs=1e-9)
        assert report.micro.prc_mean == pytest.approx(self.MICRO_PRC, abs=1e-9)
        assert report.macro.prc_mean == pytest.approx(self.MACRO_PRC, abs=1e-9)
        assert report.micro.afrr == pytest.approx(9.375, abs=1e-9)
        assert report.micro.uda == pytest.approx(50.0, abs=1e-9)
        assert report.macro.uda == pytest.approx(50.0, abs=1e-9)
