import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cemaudit.data import DataError
from cemaudit.group_metrics import (conditional_parity_gaps,
                                    demographic_parity_gap,
                                    equalized_odds_gaps, parity_report)
from _synth import make_adult_like
from _util import build_ds


class TestDemographicParity:
    def test_identical_distributions(self):
        ds = build_ds([0, 0, 1, 1], [1, 0, 1, 0], x=[1.0, 2.0, 3.0, 4.0])
        assert demographic_parity_gap(ds) == 0.0

    def test_hand_computed(self):
        # S=1 group: y = (0, 0); S=0 group: y = (1, 0) -> 0 - 0.5
        ds = build_ds([1, 1, 0, 0], [0, 0, 1, 0], x=[1.0, 2.0, 3.0, 4.0])
        assert demographic_parity_gap(ds) == pytest.approx(-0.5)

    def test_antisymmetric_under_label_swap(self):
        ds = make_adult_like(300, seed=0, direct_bias=0.8)
        swapped = ds.replace_column("race", 1 - ds.s)
        assert demographic_parity_gap(swapped) == pytest.approx(
            -demographic_parity_gap(ds))

    def test_biased_data_negative(self):
        ds = make_adult_like(3000, seed=1, direct_bias=1.0)
        assert demographic_parity_gap(ds) < 0

    def test_empty_group(self):
        ds = build_ds([1, 1], [0, 1], x=[1.0, 2.0])
        with pytest.raises(DataError):
            demographic_parity_gap(ds)

    @given(st.integers(0, 2**31))
    @settings(max_examples=25, deadline=None)
    def test_gap_in_range(self, seed):
        ds = make_adult_like(80, seed=seed)
        assert -1.0 <= demographic_parity_gap(ds) <= 1.0


class TestConditionalParity:
    def test_empty_conditioning_reduces_to_unconditional(self):
        ds = make_adult_like(200, seed=2)
        gaps = conditional_parity_gaps(ds, [])
        assert len(gaps) == 1
        assert gaps[0].gap == pytest.approx(demographic_parity_gap(ds))

    def test_two_strata_hand_check(self):
        # stratum x=a: S1 y=(1,0) vs S0 y=(1,1) -> -0.5
        # stratum x=b: S1 y=(0,)   vs S0 y=(0,1,0) -> -1/3
        ds = build_ds(
            s=[1, 1, 0, 0, 1, 0, 0, 0],
            y=[1, 0, 1, 1, 0, 0, 1, 0],
            grp=["a", "a", "a", "a", "b", "b", "b", "b"],
        )
        gaps = {g.stratum["grp"]: g.gap for g in conditional_parity_gaps(ds, ["grp"])}
        assert gaps["a"] == pytest.approx(-0.5)
        assert gaps["b"] == pytest.approx(-1 / 3)

    def test_one_sided_stratum_undefined(self):
        ds = build_ds(
            s=[1, 1, 0, 0],
            y=[1, 0, 1, 0],
            grp=["a", "a", "b", "b"],
        )
        gaps = {g.stratum["grp"]: g for g in conditional_parity_gaps(ds, ["grp"])}
        assert gaps["a"].gap is None and gaps["a"].n_s0 == 0
        assert gaps["b"].gap is None and gaps["b"].n_s1 == 0

    def test_strata_partition_rows(self):
        ds = make_adult_like(400, seed=3)
        gaps = conditional_parity_gaps(ds, ["region"])
        assert sum(g.n_s0 + g.n_s1 for g in gaps) == ds.n


class TestEqualizedOdds:
    def test_perfect_predictor(self):
        ds = build_ds([0, 0, 1, 1, 0, 1], [1, 0, 1, 0, 1, 0],
                      x=[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        assert equalized_odds_gaps(ds, ds.y) == (0.0, 0.0)

    def test_constant_predictor(self):
        ds = build_ds([0, 0, 1, 1], [1, 0, 1, 0], x=[1.0, 2.0, 3.0, 4.0])
        assert equalized_odds_gaps(ds, np.ones(4)) == (0.0, 0.0)

    def test_crafted_errors(self):
        # y=1 cell: S0 preds (1,0) -> 0.5; S1 preds (0,0) -> 0.0; gap 0.5
        # y=0 cell: S0 preds (0,)  -> 0.0; S1 preds (1,1,0) -> 2/3; gap -2/3
        ds = build_ds(
            s=[0, 0, 1, 1, 0, 1, 1, 1],
            y=[1, 1, 1, 1, 0, 0, 0, 0],
            x=[1.0] * 8,
        )
        preds = [1, 0, 0, 0, 0, 1, 1, 0]
        gap_y0, gap_y1 = equalized_odds_gaps(ds, preds)
        assert gap_y1 == pytest.approx(0.5)
        assert gap_y0 == pytest.approx(-2 / 3)

    def test_empty_cell_undefined(self):
        ds = build_ds([0, 0, 1, 1], [1, 1, 1, 0], x=[1.0, 2.0, 3.0, 4.0])
        gap_y0, gap_y1 = equalized_odds_gaps(ds, [1, 0, 1, 0])
        assert gap_y0 is None  # no (S=0, Y=0) cell
        assert gap_y1 is not None


def test_report_serialization(tmp_path):
    ds = make_adult_like(300, seed=4)
    rep = parity_report(ds, conditioning_vars=["region"], predictions=ds.y)
    rep.to_json(tmp_path / "parity.json")
    import json
    loaded = json.loads((tmp_path / "parity.json").read_text())
    assert loaded["unconditional_gap"] == pytest.approx(rep.unconditional_gap)
    assert len(loaded["conditional_gaps"]) == len(rep.conditional_gaps)
    assert not rep.to_frame().empty
