import itertools

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings, strategies as st

from cemaudit.cem import (CemScoreVector, CoarseningSpec, coarsen,
                          matched_units, repeated_cem, resolved_cutpoints,
                          sequential_pass, stratify)
from cemaudit.data import DataError
from _synth import make_adult_like
from _util import build_ds, random_mixed_ds


# ---------------------------------------------------------------- oracle ---
# Independent pure-python trace of the sequential matching algorithm, using
# raw (already-discrete) values and list comprehensions only. A unit's own
# row never enters its reference frequency.

def oracle_pass(ds, perm, include_self=False):
    n = ds.n
    s, y = list(ds.s), list(ds.y)
    vals = ds.df.to_dict(orient="records")
    ref0 = [y[j] for j in range(n) if s[j] == 0]
    d = [y[i] - sum(ref0) / len(ref0) for i in range(n)]
    for h in range(1, len(perm) + 1):
        sub = perm[:h]
        for i in range(n):
            cell = [j for j in range(n)
                    if all(vals[j][v] == vals[i][v] for v in sub)]
            ref = [j for j in cell if s[j] == 0 and (include_self or j != i)]
            if ref:
                d[i] = y[i] - sum(y[j] for j in ref) / len(ref)
    return d


def identity_fixture(seed, n=12, k=3):
    """Mixed categorical/small-integer fixture where coarsening is identity
    (categorical pass-through), so the oracle can use raw values."""
    rng = np.random.default_rng(seed)
    features = {f"v{j}": [str(t) for t in rng.integers(0, 3, n)] for j in range(k)}
    s = rng.integers(0, 2, n)
    if not (s == 0).any():
        s[0] = 0
    y = rng.integers(0, 2, n)
    return build_ds(s.tolist(), y.tolist(), **features)


# ------------------------------------------------------------- coarsening --

class TestCoarsen:
    def test_explicit_cutpoints(self):
        ds = build_ds([0, 1, 0], [1, 0, 1], age=[25.0, 40.0, 60.0])
        spec = CoarseningSpec(cutpoints={"age": [30, 50]})
        out = coarsen(ds, spec)
        assert list(out["age"]) == [0, 1, 2]

    def test_single_bin_degenerate(self):
        ds = build_ds([0, 1, 0], [1, 0, 1], x=[1.0, 5.0, 9.0])
        out = coarsen(ds, CoarseningSpec(default_bins=1))
        assert set(out["x"]) == {0}

    def test_equal_width_hand_check(self):
        # range 1..16, 4 bins -> width 3.75, edges 4.75, 8.5, 12.25
        vals = [1.0, 5.0, 8.5, 13.0, 16.0]
        ds = build_ds([0, 1, 0, 1, 0], [1, 0, 1, 0, 1], edu=vals)
        out = coarsen(ds, CoarseningSpec(bins={"edu": 4}))
        assert list(out["edu"]) == [0, 1, 2, 3, 3]

    def test_categorical_pass_through_and_grouping(self):
        ds = build_ds([0, 1], [1, 0], c=["x", "y"])
        assert list(coarsen(ds, CoarseningSpec())["c"]) == ["x", "y"]
        spec = CoarseningSpec(level_groups={"c": {"x": "g", "y": "g"}})
        assert list(coarsen(ds, spec)["c"]) == ["g", "g"]

    def test_sturges_default(self):
        ds = make_adult_like(1000, seed=0)
        cuts = resolved_cutpoints(ds, CoarseningSpec())
        # ceil(log2 1000) + 1 = 11 bins -> 10 interior cutpoints
        assert len(cuts["age"]) == 10

    def test_idempotent_on_coarsened(self):
        ds = build_ds([0, 1, 0, 1], [1, 0, 1, 0], x=[2.0, 7.0, 11.0, 19.0])
        spec = CoarseningSpec(bins={"x": 4})
        once = coarsen(ds, spec)
        rebuilt = ds.replace_column("x", once["x"].astype(float))
        twice = coarsen(rebuilt, spec)
        assert list(twice["x"]) == list(once["x"])


class TestStratify:
    def test_empty_subset_single_cell(self):
        ds = build_ds([0, 1, 0], [1, 0, 1], x=[1.0, 2.0, 3.0])
        strat = stratify(coarsen(ds, CoarseningSpec()), [])
        assert len(strat) == 1
        assert list(strat.cells[()]) == [0, 1, 2]

    def test_binary_variable_two_cells(self):
        ds = build_ds([0, 1, 0, 1], [1, 0, 1, 0], c=["a", "b", "a", "b"])
        strat = stratify(coarsen(ds, CoarseningSpec()), ["c"])
        assert len(strat) == 2
        assert sum(len(v) for v in strat.cells.values()) == 4

    def test_matches_bruteforce_grouping(self):
        ds = identity_fixture(seed=11, n=8, k=2)
        table = coarsen(ds, CoarseningSpec())
        strat = stratify(table, ["v0", "v1"])
        for sig, idx in strat.cells.items():
            expected = [j for j in range(8)
                        if (table["v0"].iloc[j], table["v1"].iloc[j]) == sig]
            assert list(idx) == expected

    def test_cells_partition(self):
        rng = np.random.default_rng(3)
        ds = random_mixed_ds(rng, 30)
        strat = stratify(coarsen(ds, CoarseningSpec()), list(ds.schema.feature_names))
        all_idx = np.sort(np.concatenate(list(strat.cells.values())))
        assert np.array_equal(all_idx, np.arange(30))


class TestMatchedUnits:
    def test_empty_vars_all_s1_matched(self):
        ds = build_ds([1, 1, 0], [1, 0, 1], x=[1.0, 2.0, 3.0])
        strat = stratify(coarsen(ds, CoarseningSpec()), [])
        m = matched_units(strat, ds)
        assert m[0] and m[1]

    def test_pure_s1_cell_unmatched(self):
        ds = build_ds([1, 1, 0], [1, 0, 1], c=["a", "a", "b"])
        strat = stratify(coarsen(ds, CoarseningSpec()), ["c"])
        m = matched_units(strat, ds)
        assert not m[0] and not m[1] and not m[2]  # lone S=0 excludes itself

    def test_self_exclusion_for_s0(self):
        ds = build_ds([0, 0, 1], [1, 0, 1], c=["a", "a", "a"])
        strat = stratify(coarsen(ds, CoarseningSpec()), ["c"])
        assert matched_units(strat, ds).all()
        ds2 = build_ds([0, 1, 1], [1, 0, 1], c=["a", "b", "a"])
        strat2 = stratify(coarsen(ds2, CoarseningSpec()), ["c"])
        m2 = matched_units(strat2, ds2)
        assert not m2[0]  # only S=0 unit in its cell is itself
        assert matched_units(strat2, ds2, include_self=True)[0]

    def test_hand_enumeration(self):
        ds = identity_fixture(seed=21, n=8, k=2)
        table = coarsen(ds, CoarseningSpec())
        strat = stratify(table, ["v0", "v1"])
        m = matched_units(strat, ds)
        vals = ds.df.to_dict(orient="records")
        for i in range(8):
            expected = any(
                ds.s[j] == 0 and j != i
                and vals[j]["v0"] == vals[i]["v0"] and vals[j]["v1"] == vals[i]["v1"]
                for j in range(8))
            assert m[i] == expected


# --------------------------------------------------------- sequential pass --

class TestSequentialPass:
    def test_carry_forward_when_never_matched(self):
        # every cell beyond step 0 lacks a non-self reference unit
        ds = build_ds([1, 1, 0], [1, 0, 0], c=["a", "b", "c"])
        d = sequential_pass(ds, CoarseningSpec(), ["c"])
        ybar = 0.0
        np.testing.assert_allclose(d, ds.y - ybar)

    def test_zero_score_when_cell_agrees(self):
        ds = build_ds([1, 0, 0], [0, 0, 0], c=["a", "a", "a"])
        d = sequential_pass(ds, CoarseningSpec(), ["c"])
        assert d[0] == 0.0

    def test_full_negative_discrimination(self):
        ds = build_ds([1, 0, 0], [0, 1, 1], c=["a", "a", "a"])
        d = sequential_pass(ds, CoarseningSpec(), ["c"])
        assert d[0] == -1.0

    def test_no_reference_group_errors(self):
        ds = build_ds([1, 1], [0, 1], x=[1.0, 2.0])
        with pytest.raises(DataError):
            sequential_pass(ds, CoarseningSpec(), ["x"])

    def test_matches_oracle_all_permutations(self):
        for seed in range(6):
            ds = identity_fixture(seed=seed, n=10, k=2)
            for perm in itertools.permutations(["v0", "v1"]):
                got = sequential_pass(ds, CoarseningSpec(), list(perm))
                np.testing.assert_allclose(got, oracle_pass(ds, list(perm)),
                                           atol=1e-13)

    def test_matches_oracle_three_vars(self):
        for seed in (10, 11, 12):
            ds = identity_fixture(seed=seed, n=14, k=3)
            for perm in itertools.permutations(["v0", "v1", "v2"]):
                got = sequential_pass(ds, CoarseningSpec(), list(perm))
                np.testing.assert_allclose(got, oracle_pass(ds, list(perm)),
                                           atol=1e-13)

    def test_include_self_variant_matches_oracle(self):
        ds = identity_fixture(seed=31, n=10, k=2)
        perm = ["v1", "v0"]
        got = sequential_pass(ds, CoarseningSpec(), perm, include_self=True)
        np.testing.assert_allclose(got, oracle_pass(ds, perm, include_self=True),
                                   atol=1e-13)

    def test_refinement_stops_at_exact_duplicates(self):
        # units 0-2 agree on every variable; once fully matched at step 1,
        # step 2 cannot change unit 0's score
        ds = build_ds([1, 0, 0, 0], [0, 1, 0, 1],
                      a=["x", "x", "x", "z"], b=["u", "u", "u", "w"])
        d1 = sequential_pass(ds, CoarseningSpec(), ["a"])
        d2 = sequential_pass(ds, CoarseningSpec(), ["a", "b"])
        assert d1[0] == d2[0]

    @given(st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_scores_bounded_and_total(self, seed):
        ds = identity_fixture(seed=seed, n=15, k=3)
        d = sequential_pass(ds, CoarseningSpec(), ["v0", "v1", "v2"])
        assert np.all(np.isfinite(d))
        assert np.all(np.abs(d) <= 1.0 + 1e-12)


# ------------------------------------------------------------ repeated cem --

class TestRepeatedCem:
    def test_single_feature_any_reps(self):
        ds = identity_fixture(seed=41, n=10, k=1)
        single = sequential_pass(ds, CoarseningSpec(), ["v0"])
        for reps in (1, 5):
            vec = repeated_cem(ds, CoarseningSpec(), repetitions=reps, seed=3)
            np.testing.assert_allclose(vec.values, single, atol=1e-13)

    def test_m1_equals_first_seeded_pass(self):
        ds = identity_fixture(seed=42, n=12, k=3)
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=1, seed=9)
        rng = np.random.default_rng(np.random.SeedSequence([9, 0]))
        perm = [f"v{j}" for j in rng.permutation(3)]
        np.testing.assert_allclose(
            vec.values, sequential_pass(ds, CoarseningSpec(), perm), atol=1e-13)

    def test_converges_to_exhaustive_average(self):
        ds = identity_fixture(seed=43, n=12, k=2)
        passes = [sequential_pass(ds, CoarseningSpec(), list(p))
                  for p in itertools.permutations(["v0", "v1"])]
        exact = np.mean(passes, axis=0)
        m = 400
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=m, seed=1)
        sd = np.std(passes, axis=0, ddof=0)
        tol = 3 * sd / np.sqrt(m) + 1e-12
        assert np.all(np.abs(vec.values - exact) <= tol)

    def test_deterministic_given_seed(self):
        ds = identity_fixture(seed=44, n=14, k=3)
        a = repeated_cem(ds, CoarseningSpec(), repetitions=20, seed=5)
        b = repeated_cem(ds, CoarseningSpec(), repetitions=20, seed=5)
        np.testing.assert_array_equal(a.values, b.values)

    def test_convergence_trace_recorded(self):
        ds = identity_fixture(seed=45, n=14, k=3)
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=10, seed=5)
        assert len(vec.convergence_trace) == 9
        assert all(t >= 0 for t in vec.convergence_trace)

    def test_early_stop_respects_cap(self):
        ds = identity_fixture(seed=46, n=10, k=1)  # one variable: change is 0
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=100, seed=5,
                           early_stop=True, tol=1e-3, patience=5)
        assert vec.repetitions == 6  # first rep + 5 stable repetitions

    def test_values_bounded(self):
        ds = make_adult_like(300, seed=6, direct_bias=1.0)
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=15, seed=0)
        assert np.all(np.abs(vec.values) <= 1.0 + 1e-12)

    def test_serialization(self, tmp_path):
        ds = identity_fixture(seed=47, n=12, k=2)
        vec = repeated_cem(ds, CoarseningSpec(), repetitions=5, seed=2)
        vec.to_csv(tmp_path / "scores.csv")
        vec.save_metadata(tmp_path / "meta.json")
        loaded = pd.read_csv(tmp_path / "scores.csv")
        assert len(loaded) == ds.n
        import json
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["repetitions"] == 5
        assert "coarsening" in meta and "convergence_trace" in meta
