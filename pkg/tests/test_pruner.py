import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import floor_rate, global_mask_oracle, group_rates_oracle, grouped_mask_oracle
from varprune.core import make_rng
from varprune.errors import ConfigError, DimensionError
from varprune.model import ParamSet
from varprune.pruner import (Group, PruneSpec, apply_mask, build_mask, group_sizes, magnitude_mask_global,
                             magnitude_mask_grouped, per_layer_groups, pruned_count, resolve_group_rates)


def _params(*arrays, names=None):
    p = ParamSet()
    for i, a in enumerate(arrays):
        p.add(names[i] if names else f"e{i}", np.array(a, dtype=np.float32), prunable=True)
    return p


def _random_params(rng, n_entries, max_size, ties=False):
    arrays = []
    for _ in range(n_entries):
        n = int(rng.integers(1, max_size + 1))
        if ties:
            # few distinct magnitudes, random signs
            a = rng.choice([0.0, 0.25, 0.5, 1.0], n) * np.where(rng.random(n) < 0.5, -1, 1)
        else:
            a = rng.standard_normal(n)
        arrays.append(a.astype(np.float32))
    return _params(*arrays)


def test_rate_zero_all_ones():
    p = _params([0.1, -0.2], [3.0])
    assert all(m.all() for m in magnitude_mask_global(p, 0.0).values())


def test_single_entry_example():
    m = magnitude_mask_global(_params([0.1, -0.5, 0.3, -0.2]), 0.5)
    assert m["e0"].tolist() == [0, 1, 1, 0]


def test_global_crosses_layers():
    m = magnitude_mask_global(_params([1.0, 0.01], [0.5, 0.02]), 0.5)
    assert m["e0"].tolist() == [1, 0] and m["e1"].tolist() == [1, 0]


def test_tie_break_entry_then_index():
    p = _params([0.5, -0.5], [0.5, 0.5])
    m = magnitude_mask_global(p, 0.75)
    assert m["e0"].tolist() == [0, 0] and m["e1"].tolist() == [0, 1]


def test_rate_out_of_range():
    p = _params([1.0, 2.0])
    for rate in (-0.1, 1.0, 1.5):
        with pytest.raises(ConfigError):
            magnitude_mask_global(p, rate)


def test_non_prunable_untouched():
    p = _params([0.1, 0.2])
    p.add("bias", np.zeros(3, dtype=np.float32))
    m = magnitude_mask_global(p, 0.5)
    assert set(m) == {"e0"}


@pytest.mark.parametrize("ties", [False, True])
def test_global_matches_oracle(ties):
    rng = make_rng(100 + ties)
    for _ in range(50):
        p = _random_params(rng, int(rng.integers(1, 5)), 300, ties)
        rate = float(rng.uniform(0, 0.99))
        got = magnitude_mask_global(p, rate)
        want = global_mask_oracle([e.value for e in p], rate)
        for e, w in zip(p, want):
            np.testing.assert_array_equal(got[e.name], w)


def test_decimal_rates():
    p = _params(np.arange(1, 101, dtype=np.float32))
    assert pruned_count(magnitude_mask_global(p, 0.29)) == 29
    groups = (Group("a", ("x",), skew=0.03), Group("b", ("y",)))
    assert [g.count for g in resolve_group_rates(groups, 0.47, {"a": 100, "b": 100})] == [50, 44]


def test_pruned_count_exact():
    rng = make_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 200))
        rate = float(rng.uniform(0, 1 - 1e-9))
        p = _params(rng.standard_normal(n))
        assert pruned_count(magnitude_mask_global(p, rate)) == floor_rate(rate, n)


@given(st.floats(0, 0.999), st.floats(0, 0.999), st.integers(0, 2**32 - 1))
def test_masks_nested(p1, p2, seed):
    lo, hi = sorted((p1, p2))
    params = _random_params(make_rng(seed), 3, 50, ties=seed % 2 == 0)
    a = magnitude_mask_global(params, lo)
    b = magnitude_mask_global(params, hi)
    for name in a:
        assert np.all(b[name] <= a[name])


def test_pruned_magnitudes_below_kept():
    p = _random_params(make_rng(3), 3, 100)
    m = magnitude_mask_global(p, 0.4)
    dropped = np.concatenate([np.abs(e.value[m[e.name] == 0]) for e in p])
    kept = np.concatenate([np.abs(e.value[m[e.name] == 1]) for e in p])
    assert dropped.max() <= kept.min()


# grouped

def test_skew_example_rates():
    groups = (Group("ffn", ("f",), skew=0.03), Group("other", ("o",)))
    plan = resolve_group_rates(groups, 0.5, {"ffn": 100, "other": 100})
    assert [g.count for g in plan] == [53, 47]
    assert plan[0].rate == pytest.approx(0.53) and plan[1].rate == pytest.approx(0.47)


def test_no_skew_all_rate_p():
    groups = tuple(Group(n, (n,)) for n in "qkv")
    plan = resolve_group_rates(groups, 0.3, {"q": 100, "k": 100, "v": 100})
    assert [g.rate for g in plan] == pytest.approx([0.3, 0.3, 0.3])
    assert sum(g.count for g in plan) == 90


@pytest.mark.parametrize("selected", [("q",), ("q", "k"), ("q", "k", "v")])
def test_q_qk_qkv_scopes(selected):
    rng = make_rng(len(selected))
    names = ["q", "k", "v", "proj"]
    p = _params(*(rng.standard_normal(s) for s in (64, 64, 64, 40)), names=names)
    groups = tuple(Group(n, (n,), active=n in selected) for n in names)
    rate = 0.6
    mask = build_mask(p, PruneSpec(rate, groups))
    n_selected = 64 * len(selected)
    assert pruned_count(mask) == floor_rate(rate, n_selected)
    for n in names:
        if n not in selected:
            assert mask[n].all()


def test_single_group_equals_global():
    rng = make_rng(5)
    p = _random_params(rng, 3, 80, ties=True)
    groups = (Group("all", tuple(p.names())),)
    g = build_mask(p, PruneSpec(0.45, groups))
    w = magnitude_mask_global(p, 0.45)
    for n in w:
        assert g[n].tobytes() == w[n].tobytes()


def test_rate_zero_group_fully_kept():
    p = _params([0.1, 0.2, 0.3], [0.01, 0.02, 0.5, 0.6, 0.7])
    groups = (Group("a", ("e0",), skew=-0.4), Group("b", ("e1",)))
    mask = build_mask(p, PruneSpec(0.4, groups))
    assert mask["e0"].all()
    assert mask["e1"].tolist() == [0, 0, 0, 1, 1]


def test_infeasible_skew():
    groups = (Group("a", ("x",), skew=0.6), Group("b", ("y",)))
    with pytest.raises(ConfigError) as err:
        resolve_group_rates(groups, 0.5, {"a": 10, "b": 10})
    assert "prune.skew" in str(err.value)


def test_groups_must_partition():
    p = _params([1.0], [2.0])
    with pytest.raises(ConfigError):
        group_sizes(p, (Group("a", ("e0",)),))
    with pytest.raises(ConfigError):
        group_sizes(p, (Group("a", ("e0", "e1")), Group("b", ("e1",))))


def test_grouped_matches_oracle():
    rng = make_rng(31)
    for trial in range(50):
        n_entries = int(rng.integers(3, 7))
        p = _random_params(rng, n_entries, 200, ties=trial % 2 == 0)
        names = p.names()
        cut = sorted(rng.choice(np.arange(1, n_entries), 2, replace=False))
        parts = [names[:cut[0]], names[cut[0]:cut[1]], names[cut[1]:]]
        skews = [float(rng.choice([0.0, 0.03, -0.02])) for _ in parts]
        if all(s != 0 for s in skews):
            skews[0] = 0.0
        active = [True, True, bool(rng.random() < 0.7)]
        groups = tuple(Group(f"g{i}", tuple(m), s, a) for i, (m, s, a) in enumerate(zip(parts, skews, active)))
        sizes = [sum(p[m].value.size for m in part) for part in parts]
        rate = float(rng.uniform(0.05, 0.9))
        try:
            counts = group_rates_oracle(sizes, skews, active, rate)
            if any(c < 0 or (c > 0 and c >= n) for c, n in zip(counts, sizes)):
                raise ValueError
        except ValueError:
            with pytest.raises(ConfigError):
                build_mask(p, PruneSpec(rate, groups))
            continue
        plan = resolve_group_rates(groups, rate, dict(zip([g.name for g in groups], sizes)))
        assert [g.count for g in plan] == counts
        got = magnitude_mask_grouped(p, plan)
        want = grouped_mask_oracle(p, groups, counts)
        for n in names:
            np.testing.assert_array_equal(got[n], want[n])
        total = sum(n for n, a in zip(sizes, active) if a)
        assert pruned_count(got) == floor_rate(rate, total)


def test_per_layer_groups():
    p = _params([1.0, 2.0], [3.0], names=["a.weight", "b.weight"])
    groups = per_layer_groups(p, "b.weight", 0.03)
    assert [(g.name, g.skew) for g in groups] == [("a.weight", 0.0), ("b.weight", 0.03)]


# apply

def test_apply_all_ones_unchanged():
    p = _random_params(make_rng(1), 2, 20)
    q = apply_mask(p, {e.name: np.ones(e.value.shape, np.uint8) for e in p})
    assert q.equal(p)


def test_apply_zero_entry():
    p = _params([1.0, -2.0], [3.0])
    q = apply_mask(p, {"e0": np.zeros(2, np.uint8)})
    assert q["e0"].value.tolist() == [0.0, 0.0]
    assert not np.signbit(q["e0"].value).any()
    assert q["e1"].value.tobytes() == p["e1"].value.tobytes()


def test_apply_idempotent():
    p = _random_params(make_rng(2), 3, 50)
    m = magnitude_mask_global(p, 0.5)
    once = apply_mask(p, m)
    assert apply_mask(once, m).equal(once)


def test_apply_does_not_mutate_input():
    p = _params([1.0, 2.0])
    before = p["e0"].value.copy()
    apply_mask(p, {"e0": np.zeros(2, np.uint8)})
    np.testing.assert_array_equal(p["e0"].value, before)


def test_apply_shape_mismatch():
    with pytest.raises(DimensionError):
        apply_mask(_params([1.0, 2.0]), {"e0": np.ones(3, np.uint8)})
