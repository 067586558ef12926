"""The cascade objective: seed probabilities, f, costs and the multilinear extension.

An allocation S offers at most one coupon per user; each offered user
independently accepts and becomes a seed.  f(S) is the expected cascade
over the random seed set, c(S) its expected redemption cost, and F(y) the
multilinear extension of f over fractional user-coupon matrices.

Internally, allocations (including the multi-coupon pair sets that arise
when sampling matrix entries independently) are reduced to a per-user
"profile": the highest offered coupon per user, 0 meaning none.  Because
coupon values are strictly increasing, the highest index is the highest
value, and f only depends on the profile.  All exact evaluators memoize f
by profile.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from couponcascade.cascade import CascadeUtility, UtilityError
from couponcascade.instance import Instance


class AllocationError(ValueError):
    pass


@dataclass(frozen=True)
class Allocation:
    """A set of user-coupon pairs with at most one coupon per user."""

    pairs: frozenset

    def __init__(self, pairs):
        pairs = frozenset((int(v), int(d)) for v, d in pairs)
        users = [v for v, _ in pairs]
        if len(users) != len(set(users)):
            raise AllocationError("a user may hold at most one coupon")
        if any(d < 1 for _, d in pairs):
            raise AllocationError("coupon indices are 1-based; 0 is the rounding dummy")
        object.__setattr__(self, "pairs", pairs)

    def __iter__(self):
        return iter(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def coupon_of(self, v: int):
        for user, d in self.pairs:
            if user == v:
                return d
        return None

    def profile(self, n: int) -> tuple:
        prof = [0] * n
        for v, d in self.pairs:
            prof[v - 1] = d
        return tuple(prof)

    @staticmethod
    def from_profile(profile) -> "Allocation":
        return Allocation((v + 1, d) for v, d in enumerate(profile) if d)


@dataclass
class FractionalSolution:
    """An n x m matrix of inclusion probabilities y_vd in [0, 1]."""

    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if np.any(self.y < -1e-9) or np.any(self.y > 1 + 1e-9):
            raise AllocationError("fractional entries must lie in [0,1]")

    def row_sums(self) -> np.ndarray:
        return self.y.sum(axis=1)


def highest_coupon(pairs, v: int):
    """The highest coupon offered to v, or None.

    Accepts unvalidated multi-coupon pair sets; with strictly increasing
    coupon values the highest index carries the highest value.
    """
    best = None
    for user, d in pairs:
        if user == v and (best is None or d > best):
            best = d
    return best


def pairs_to_profile(pairs, n: int) -> tuple:
    prof = [0] * n
    for v, d in pairs:
        if d > prof[v - 1]:
            prof[v - 1] = d
    return tuple(prof)


def seed_prob(inst: Instance, S, U) -> float:
    """Probability that exactly the users in U accept their offers.

    A user with no coupon never seeds (p_v(none) = 0).
    """
    pairs = S.pairs if isinstance(S, Allocation) else S
    prof = pairs_to_profile(pairs, inst.n)
    prob = 1.0
    U = frozenset(U)
    for v in range(1, inst.n + 1):
        p = inst.p(v, prof[v - 1]) if prof[v - 1] else 0.0
        prob *= p if v in U else 1.0 - p
    return prob


def _f_of_profile(inst: Instance, util: CascadeUtility, profile: tuple,
                  cache: dict | None = None) -> float:
    if cache is not None and profile in cache:
        return cache[profile]
    offered = [v for v in range(1, inst.n + 1) if profile[v - 1]]
    probs = [inst.p(v, profile[v - 1]) for v in offered]
    total = 0.0
    for r in range(len(offered) + 1):
        for combo in combinations(range(len(offered)), r):
            chosen = set(combo)
            pr = 1.0
            for i, p in enumerate(probs):
                pr *= p if i in chosen else 1.0 - p
            if pr:
                total += pr * util.value(frozenset(offered[i] for i in chosen))
    if cache is not None:
        cache[profile] = total
    return total


def f_exact(inst: Instance, util: CascadeUtility, S, cache: dict | None = None,
            exact_n_limit: int = 15) -> float:
    """f(S) = sum over seed sets U of Pr(U;S) * gamma(U), exactly."""
    if not util.exact:
        raise UtilityError("f_exact needs an exactly evaluable utility")
    if inst.n > exact_n_limit:
        raise UtilityError(f"exact f limited to n <= {exact_n_limit}")
    pairs = S.pairs if isinstance(S, Allocation) else S
    return _f_of_profile(inst, util, pairs_to_profile(pairs, inst.n), cache)


def f_mc(inst: Instance, util: CascadeUtility, S, samples: int,
         rng: np.random.Generator) -> float:
    """Unbiased estimate of f(S): sample seed sets by independent coins."""
    if samples < 1:
        raise UtilityError("need at least one sample")
    pairs = S.pairs if isinstance(S, Allocation) else S
    prof = pairs_to_profile(pairs, inst.n)
    offered = [v for v in range(1, inst.n + 1) if prof[v - 1]]
    if not offered:
        return 0.0
    probs = np.array([inst.p(v, prof[v - 1]) for v in offered])
    coins = rng.random((samples, len(offered))) < probs
    if util.exact:
        # Profiles repeat heavily at desk scale; evaluate each seed set once.
        codes = coins @ (1 << np.arange(len(offered)))
        uniq, counts = np.unique(codes, return_counts=True)
        total = 0.0
        for code, count in zip(uniq, counts):
            U = frozenset(offered[i] for i in range(len(offered)) if code >> i & 1)
            total += count * util.value(U)
        return total / samples
    total = 0.0
    for row in coins:
        U = frozenset(np.array(offered)[row].tolist())
        total += util.value(U, rng)
    return total / samples


def cost_exact(inst: Instance, S) -> float:
    """Expected redemption cost: sum of p_v(d) * value(d) over offered pairs."""
    pairs = S.pairs if isinstance(S, Allocation) else S
    prof = pairs_to_profile(pairs, inst.n)
    return sum(
        inst.p(v, d) * inst.value_of(d)
        for v, d in enumerate(prof, start=1) if d
    )


def cost_brute_force(inst: Instance, S) -> float:
    """The double-sum definition of c(S): E over seed sets of the redeemed values.

    Independent oracle for cost_exact; enumerates all 2^n seed sets.
    """
    pairs = S.pairs if isinstance(S, Allocation) else S
    prof = pairs_to_profile(pairs, inst.n)
    users = list(range(1, inst.n + 1))
    total = 0.0
    for r in range(inst.n + 1):
        for combo in combinations(users, r):
            U = frozenset(combo)
            pr = seed_prob(inst, pairs, U)
            redeemed = sum(inst.value_of(prof[u - 1]) for u in U if prof[u - 1])
            total += pr * redeemed
    return total


def oplus(a, b):
    """Coordinate-wise maximum of two fractional solutions."""
    ya = a.y if isinstance(a, FractionalSolution) else np.asarray(a, dtype=float)
    yb = b.y if isinstance(b, FractionalSolution) else np.asarray(b, dtype=float)
    if ya.shape != yb.shape:
        raise AllocationError(f"shape mismatch {ya.shape} vs {yb.shape}")
    return np.maximum(ya, yb)


def _as_matrix(y, inst: Instance) -> np.ndarray:
    y = y.y if isinstance(y, FractionalSolution) else np.asarray(y, dtype=float)
    if y.shape != (inst.n, inst.m):
        raise AllocationError(f"expected a {inst.n}x{inst.m} matrix, got {y.shape}")
    return y


def multilinear_F_exact(inst: Instance, util: CascadeUtility, y,
                        cache: dict | None = None, size_limit: int = 16) -> float:
    """F(y): expectation of f over independent entry inclusion, exactly.

    Enumerates the fractional entries only; entries at 0 or 1 are fixed.
    """
    y = _as_matrix(y, inst)
    if inst.n * inst.m > size_limit:
        raise UtilityError(f"exact multilinear extension limited to nm <= {size_limit}")
    cache = {} if cache is None else cache
    ones = [(v, d) for v in range(1, inst.n + 1) for d in range(1, inst.m + 1)
            if y[v - 1, d - 1] >= 1.0 - 1e-12]
    frac = [(v, d) for v in range(1, inst.n + 1) for d in range(1, inst.m + 1)
            if 1e-12 < y[v - 1, d - 1] < 1.0 - 1e-12]
    total = 0.0
    for mask in range(1 << len(frac)):
        weight = 1.0
        pairs = list(ones)
        for i, (v, d) in enumerate(frac):
            p = y[v - 1, d - 1]
            if mask >> i & 1:
                weight *= p
                pairs.append((v, d))
            else:
                weight *= 1.0 - p
        total += weight * _f_of_profile(inst, util, pairs_to_profile(pairs, inst.n), cache)
    return total


def _profiles_from_inclusion(inclusion: np.ndarray) -> np.ndarray:
    """(draws, n, m) inclusion masks -> (draws, n) highest-coupon profiles."""
    m = inclusion.shape[2]
    return (inclusion * np.arange(1, m + 1)[None, None, :]).max(axis=2)


def _mean_f_over_profiles(inst: Instance, util: CascadeUtility,
                          profiles: np.ndarray, cache: dict) -> float:
    codes = profiles @ ((inst.m + 1) ** np.arange(inst.n))
    uniq, inverse, counts = np.unique(codes, return_inverse=True, return_counts=True)
    first = np.zeros(len(uniq), dtype=int)
    first[inverse] = np.arange(len(codes))
    total = 0.0
    for idx, count in zip(first, counts):
        prof = tuple(int(x) for x in profiles[idx])
        total += count * _f_of_profile(inst, util, prof, cache)
    return total / len(profiles)


def multilinear_F_mc(inst: Instance, util: CascadeUtility, y, samples: int,
                     rng: np.random.Generator, cache: dict | None = None) -> float:
    """Sampled F(y): average f over random pair sets with marginals y."""
    if samples < 1:
        raise UtilityError("need at least one sample")
    y = _as_matrix(y, inst)
    cache = {} if cache is None else cache
    inclusion = rng.random((samples, inst.n, inst.m)) < y
    profiles = _profiles_from_inclusion(inclusion)
    return _mean_f_over_profiles(inst, util, profiles, cache)


def marginal_omega(inst: Instance, util: CascadeUtility, y, samples: int,
                   rng: np.random.Generator, cache: dict | None = None) -> np.ndarray:
    """Sampled marginals E[f(R + [vd])] - E[f(R)], common random numbers.

    The same R-draws serve all nm entries, which cancels most of the noise
    in the differences.  Negative estimates are clamped to zero so the
    ascent LP never chases sampling noise downhill.
    """
    if samples < 1:
        raise UtilityError("need at least one sample")
    y = _as_matrix(y, inst)
    cache = {} if cache is None else cache
    inclusion = rng.random((samples, inst.n, inst.m)) < y
    profiles = _profiles_from_inclusion(inclusion)
    base = np.array([
        _f_of_profile(inst, util, tuple(int(x) for x in prof), cache)
        for prof in profiles
    ])
    omega = np.zeros((inst.n, inst.m))
    for v in range(1, inst.n + 1):
        for d in range(1, inst.m + 1):
            lifted = profiles.copy()
            lifted[:, v - 1] = np.maximum(lifted[:, v - 1], d)
            total = 0.0
            for prof, b in zip(lifted, base):
                total += _f_of_profile(inst, util, tuple(int(x) for x in prof), cache) - b
            omega[v - 1, d - 1] = total / samples
    return np.maximum(omega, 0.0)


def marginal_omega_exact(inst: Instance, util: CascadeUtility, y,
                         cache: dict | None = None) -> np.ndarray:
    """Exact marginals F(y + 1_vd) - F(y), via the exact extension."""
    y = _as_matrix(y, inst)
    cache = {} if cache is None else cache
    base = multilinear_F_exact(inst, util, y, cache)
    omega = np.zeros((inst.n, inst.m))
    for v in range(inst.n):
        for d in range(inst.m):
            unit = np.zeros_like(y)
            unit[v, d] = 1.0
            omega[v, d] = multilinear_F_exact(inst, util, oplus(y, unit), cache) - base
    return np.maximum(omega, 0.0)
