"""One-shot magnitude pruning.

``k = floor(p * N)`` weights with the smallest ``|w|`` are removed. Equal
magnitudes are ordered by (entry order, flat index), lower first, so masks
are deterministic and nested as ``p`` grows.

Rates are read as the decimal they print as, and counts are computed in
exact arithmetic: ``p = 0.29`` on 100 weights prunes 29, not
``floor(28.999999999999996)``.
"""

import math
from fractions import Fraction
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError


@dataclass(frozen=True)
class Group:
    name: str
    members: tuple
    skew: float = 0.0
    # inactive groups are never pruned and do not count toward N
    active: bool = True


@dataclass(frozen=True)
class PruneSpec:
    rate: float
    groups: Optional[tuple] = None  # None -> global scope


@dataclass(frozen=True)
class GroupPlan:
    name: str
    members: tuple
    size: int
    rate: float
    count: int


def _exact(x):
    return Fraction(repr(float(x)))


def prune_count(p, n):
    """``floor(p * n)`` with ``p`` taken as its printed decimal."""
    return math.floor(_exact(p) * n)


def _check_rate(p):
    if not 0 <= p < 1:
        raise ConfigError(f"pruning rate {p} outside [0, 1)", key="prune.rates")


def _prunable_entries(params, names=None):
    entries = params.prunable()
    if names is not None:
        wanted = set(names)
        entries = [e for e in entries if e.name in wanted]
    if not entries:
        raise ValueError("no prunable entries")
    return entries


def _lowest_k(entries, k):
    """Boolean drop flags (flattened, concatenated) for the k smallest magnitudes."""
    mags = np.concatenate([np.abs(e.value.ravel()) for e in entries])
    order = np.argsort(mags, kind="stable")
    drop = np.zeros(mags.size, dtype=bool)
    drop[order[:k]] = True
    return drop


def _split(entries, drop):
    mask = {}
    pos = 0
    for e in entries:
        n = e.value.size
        mask[e.name] = (~drop[pos:pos + n]).astype(np.uint8).reshape(e.value.shape)
        pos += n
    return mask


def magnitude_mask_global(params, p):
    """Keep/drop mask ``{name: uint8 array}`` over every prunable entry."""
    _check_rate(p)
    entries = _prunable_entries(params)
    n = sum(e.value.size for e in entries)
    return _split(entries, _lowest_k(entries, prune_count(p, n)))


def resolve_group_rates(groups, p, sizes):
    """Per-group rates and pruned counts for a grouped scope.

    Active skewed groups get ``p + skew``; the other active groups share the
    rate that keeps the overall count at ``floor(p * N)`` over active
    weights. After per-group flooring, the leftover count goes to the
    largest unskewed active group (or the largest active group if every
    group is skewed). Inactive groups get rate 0.
    """
    _check_rate(p)
    groups = list(groups)
    if not groups:
        raise ConfigError("no groups given", key="prune.scope")
    active = [g for g in groups if g.active]
    if not active:
        raise ConfigError("no active groups", key="prune.scope")
    n_total = sum(sizes[g.name] for g in active)
    P = _exact(p)
    target = math.floor(P * n_total)
    skewed = [g for g in active if g.skew != 0]
    plain = [g for g in active if g.skew == 0]
    n_plain = sum(sizes[g.name] for g in plain)

    rates = {}
    for g in groups:
        if not g.active:
            rates[g.name] = Fraction(0)
        elif g.skew != 0:
            rates[g.name] = P + _exact(g.skew)
    if plain:
        rest = P * n_total - sum((P + _exact(g.skew)) * sizes[g.name] for g in skewed)
        p_other = rest / n_plain if n_plain else Fraction(0)
        for g in plain:
            rates[g.name] = p_other
    for name, r in rates.items():
        if not 0 <= r < 1:
            raise ConfigError(f"resolved rate {float(r):.6g} for group {name!r} is infeasible", key="prune.skew")

    counts = {g.name: (math.floor(rates[g.name] * sizes[g.name]) if g.active else 0) for g in groups}
    residue = target - sum(counts.values())
    pool = plain or active
    biggest = max(pool, key=lambda g: sizes[g.name])  # first wins ties
    counts[biggest.name] += residue
    for g in groups:
        c, n = counts[g.name], sizes[g.name]
        if c < 0 or (c > 0 and c >= n):
            raise ConfigError(f"group {g.name!r} cannot absorb rounding residue", key="prune.skew")
    return [GroupPlan(g.name, tuple(g.members), sizes[g.name], float(rates[g.name]), counts[g.name]) for g in groups]


def group_sizes(params, groups):
    """Weight counts per group; checks the groups partition the prunable entries."""
    prunable = [e.name for e in params.prunable()]
    seen = []
    for g in groups:
        for m in g.members:
            if m not in prunable:
                raise ConfigError(f"group {g.name!r} names unknown prunable entry {m!r}", key="prune.groups")
            seen.append(m)
    if sorted(seen) != sorted(prunable):
        raise ConfigError("groups must partition the prunable entries", key="prune.groups")
    return {g.name: sum(params[m].value.size for m in g.members) for g in groups}


def magnitude_mask_grouped(params, plan):
    """Per-group magnitude masks from a resolved plan."""
    mask = {}
    order = {name: i for i, name in enumerate(params.names())}
    for g in plan:
        if not g.members:
            continue
        entries = sorted((params[m] for m in g.members), key=lambda e: order[e.name])
        mask.update(_split(entries, _lowest_k(entries, g.count)))
    return {e.name: mask[e.name] for e in params.prunable() if e.name in mask}


def build_mask(params, spec):
    if spec.groups is None:
        return magnitude_mask_global(params, spec.rate)
    sizes = group_sizes(params, spec.groups)
    return magnitude_mask_grouped(params, resolve_group_rates(spec.groups, spec.rate, sizes))


def per_layer_groups(params, skew_layer=None, skew=0.0):
    """One group per prunable tensor, optionally skewing one of them."""
    return tuple(Group(e.name, (e.name,), skew if e.name == skew_layer else 0.0)
                 for e in params.prunable())


def apply_mask(params, mask):
    """Copy of ``params`` with masked-out weights set to exactly +0.0."""
    out = params.copy()
    for name, m in mask.items():
        e = out[name]
        if m.shape != e.value.shape:
            raise DimensionError(f"mask shape {m.shape} != {e.value.shape} for {name}")
        e.value[...] = np.where(m != 0, e.value, e.value.dtype.type(0))
    return out


def pruned_count(mask):
    return int(sum(int(np.count_nonzero(m == 0)) for m in mask.values()))
