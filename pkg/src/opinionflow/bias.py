"""Asymmetric influence kernels and their behavioral verification.

A bias model pairs two kernels built from the same template g(f(ref) - f(x)):

* confirmation kernel: weight DECREASES with the transformed distance from
  the individual's own expected opinion (closer content is favored);
* novelty kernel: weight INCREASES with the transformed distance from the
  individual's sensed surrounding expectation (surprising content is favored).

Verification is by seeded property sampling.  Each behavioral scenario draws
triples (x_ref, x_a, x_b) satisfying that scenario's hypothesis and asserts
the expected ordering of kernel weights, with equality tolerance 1e-9 and a
strict-inequality margin of 1e-12.  The fifth scenario is existential and is
checked by a dense grid search over the opposite-sign domain.

Baseline kernels that only capture symmetric preferences (a hard-threshold
confidence band and a squared-distance influence) are included so their
failures can be demonstrated.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPSILON_FLOOR = 1e-6
EQUALITY_TOL = 1e-9
STRICT_MARGIN = 1e-12
WITNESS_GRID_POINTS = 401
MAX_STORED_COUNTEREXAMPLES = 10


# ===================================================================
# kernel construction
# ===================================================================

@dataclass(frozen=True)
class BiasModel:
    """A confirmation/novelty kernel pair sharing one distance floor.

    f_conf / f_nov: strictly increasing transforms on [-1, 1].
    g_conf / g_nov: maps of the nonnegative floored transformed distance;
    g_conf should decrease, g_nov increase, for the asymmetry axioms to hold.
    params holds named scalars (e.g. the exponent) for reporting only.
    """

    f_conf: object
    g_conf: object
    f_nov: object
    g_nov: object
    epsilon_floor: float = EPSILON_FLOOR
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epsilon_floor <= 0:
            raise ValueError(f"epsilon_floor must be > 0, got {self.epsilon_floor}")


def _floored_distance(f, x_ref, x_other, floor):
    d = np.abs(np.asarray(f(x_ref)) - np.asarray(f(x_other)))
    return np.maximum(d, floor)


def confirmation_weight(model, x_self, x_other):
    """g_conf of the floored |f_conf(x_self) - f_conf(x_other)|."""
    return model.g_conf(
        _floored_distance(model.f_conf, x_self, x_other, model.epsilon_floor)
    )


def novelty_weight(model, x_surround, x_other):
    """g_nov of the floored |f_nov(x_surround) - f_nov(x_other)|."""
    return model.g_nov(
        _floored_distance(model.f_nov, x_surround, x_other, model.epsilon_floor)
    )


def tanh_power_model(alpha, epsilon_floor=EPSILON_FLOOR):
    """The tanh transform with power-law weighting: d^(-alpha) / d^(+alpha)."""
    if alpha <= 0:
        raise ValueError(f"exponent must be > 0, got {alpha}")

    def g_conf(d):
        return np.power(d, -alpha)

    def g_nov(d):
        return np.power(d, alpha)

    return BiasModel(
        f_conf=np.tanh,
        g_conf=g_conf,
        f_nov=np.tanh,
        g_nov=g_nov,
        epsilon_floor=epsilon_floor,
        params={"alpha": float(alpha)},
    )


def confirmation_kernel(model):
    """Two-argument closure over the model's confirmation side."""
    return lambda x_ref, x_other: confirmation_weight(model, x_ref, x_other)


def novelty_kernel(model):
    """Two-argument closure over the model's novelty side."""
    return lambda x_ref, x_other: novelty_weight(model, x_ref, x_other)


# ===================================================================
# baseline kernels (symmetric by construction)
# ===================================================================

def hk_neighbor_set(eps_lo, eps_hi, x_i, others):
    """Indices of opinions whose raw distance from x_i lies in [eps_lo, eps_hi].

    Returns 0-based positions into `others`, ascending.
    """
    if eps_lo > eps_hi:
        raise ValueError(f"confidence band empty: lo={eps_lo} > hi={eps_hi}")
    others = np.asarray(others, dtype=float)
    d = np.abs(x_i - others)
    return [int(k) for k in np.nonzero((d >= eps_lo) & (d <= eps_hi))[0]]


def hk_kernel(eps_lo, eps_hi):
    """Hard confidence band as a 0/1 weight kernel of raw distance."""
    if eps_lo > eps_hi:
        raise ValueError(f"confidence band empty: lo={eps_lo} > hi={eps_hi}")

    def weight(x_ref, x_other):
        d = np.abs(np.asarray(x_ref, dtype=float) - np.asarray(x_other, dtype=float))
        return np.where((d >= eps_lo) & (d <= eps_hi), 1.0, 0.0)

    return weight


def continuous_influence(x_i, x_j, decay=1.0):
    """exp(-decay * |x_i - x_j|^2): depends on squared distance only."""
    d2 = np.square(np.asarray(x_i, dtype=float) - np.asarray(x_j, dtype=float))
    return np.exp(-decay * d2)


def continuous_kernel(decay=1.0):
    return lambda x_ref, x_other: continuous_influence(x_ref, x_other, decay=decay)


# ===================================================================
# verification reports
# ===================================================================

@dataclass
class CheckResult:
    name: str
    samples: int
    passes: int
    fails: int
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self):
        return self.fails == 0


@dataclass
class BehaviorReport:
    family: str  # "confirmation" or "novelty"
    checks: tuple = ()

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def by_name(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]


@dataclass
class ConditionReport:
    family: str
    checks: tuple = ()

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def by_name(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failed_names(self):
        return [c.name for c in self.checks if not c.passed]


def _tally(name, ok, triples, weights=None):
    """Build a CheckResult from a boolean pass vector and sampled triples."""
    ok = np.asarray(ok, dtype=bool)
    fails = int((~ok).sum())
    stored = []
    if fails:
        bad = np.nonzero(~ok)[0][:MAX_STORED_COUNTEREXAMPLES]
        for idx in bad:
            entry = tuple(float(col[idx]) for col in triples)
            if weights is not None:
                entry = entry + tuple(float(w[idx]) for w in weights)
            stored.append(entry)
    return CheckResult(
        name=name,
        samples=int(ok.size),
        passes=int(ok.sum()),
        fails=fails,
        counterexamples=stored,
    )


# ===================================================================
# behavioral scenario samplers
# ===================================================================
# Each sampler returns hypothesis-satisfying (x_ref, x_a, x_b) triples:
#   x_a is the candidate in (or deeper in) the reference's domain,
#   x_b the equidistant / closer / crossing alternative.

def _signs(rng, n):
    return rng.choice(np.array([-1.0, 1.0]), size=n)


def _draw_neutral(rng, n):
    s = _signs(rng, n)
    x_a = s * rng.uniform(0.01, 1.0, n)
    return np.zeros(n), x_a, -x_a


def _draw_cross_equal(rng, n):
    s = _signs(rng, n)
    mag = rng.uniform(0.01, 0.49, n)
    x_ref = s * mag
    d = rng.uniform(mag + 0.01, 1.0 - mag)
    return x_ref, x_ref + s * d, x_ref - s * d


def _draw_within_equal(rng, n):
    s = _signs(rng, n)
    mag = rng.uniform(0.02, 0.98, n)
    x_ref = s * mag
    d = np.minimum(mag, 1.0 - mag) * rng.uniform(0.05, 1.0, n)
    return x_ref, x_ref + s * d, x_ref - s * d


def _draw_same_side(rng, n):
    # both candidates strictly on one side of x_ref, sharing its sign,
    # x_b strictly closer; half the draws go outward, half toward zero
    s = _signs(rng, n)
    outward = rng.random(n) < 0.5
    mag = np.where(outward, rng.uniform(0.0, 0.9, n), rng.uniform(0.05, 0.95, n))
    room = np.where(outward, 1.0 - mag, mag)
    d_near = rng.uniform(0.01, room - 0.02)
    d_far = rng.uniform(d_near + 0.01, room)
    direction = np.where(outward, s, -s)
    x_ref = s * mag
    x_b = x_ref + direction * d_near
    x_a = x_ref + direction * d_far
    return x_ref, x_a, x_b


def _draw_crossing_witness(rng, n):
    # reference small enough that a crossing, closer, still-preferred
    # opinion exists; returns (x_ref, x_a, grid of crossing candidates)
    s = _signs(rng, n)
    mag = rng.uniform(0.01, 0.32, n)
    x_ref = s * mag
    d_a = rng.uniform(2.0 * mag + 0.02, 1.0 - mag)
    x_a = x_ref + s * d_a
    base = np.linspace(1.0 / WITNESS_GRID_POINTS, 1.0, WITNESS_GRID_POINTS)
    x_b_grid = -s[:, None] * base[None, :]
    return x_ref, x_a, x_b_grid


def _check_witness(kernel, x_ref, x_a, x_b_grid, novelty):
    """Existential scenario: some crossing opinion closer than x_a must be
    weighted above x_a (confirmation) or below it (novelty)."""
    w_a = np.asarray(kernel(x_ref, x_a), dtype=float)
    w_grid = np.asarray(kernel(x_ref[:, None], x_b_grid), dtype=float)
    dist_b = np.abs(x_ref[:, None] - x_b_grid)
    closer = dist_b < np.abs(x_ref - x_a)[:, None]
    if novelty:
        better = w_grid < (w_a[:, None] - STRICT_MARGIN)
    else:
        better = w_grid > (w_a[:, None] + STRICT_MARGIN)
    ok = np.any(closer & better, axis=1)
    # best crossing candidate recorded for failed samples
    score = np.where(closer, -w_grid if novelty else w_grid, -np.inf)
    best = x_b_grid[np.arange(len(x_ref)), np.argmax(score, axis=1)]
    best_w = w_grid[np.arange(len(x_ref)), np.argmax(score, axis=1)]
    return ok, best, w_a, best_w


def _verify_behaviors(kernel, seed, n, family):
    """Shared engine: novelty flips every strict direction."""
    novelty = family == "novelty"
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    checks = []

    # equal distances from a neutral reference: equal weights
    x_ref, x_a, x_b = _draw_neutral(streams[0], n)
    w_a = np.asarray(kernel(x_ref, x_a), dtype=float)
    w_b = np.asarray(kernel(x_ref, x_b), dtype=float)
    ok = np.abs(w_a - w_b) <= EQUALITY_TOL
    checks.append(_tally("neutral_reference_symmetry", ok, (x_ref, x_a, x_b), (w_a, w_b)))

    # equal raw distances, x_a inside the reference domain, x_b crossing out
    x_ref, x_a, x_b = _draw_cross_equal(streams[1], n)
    w_a = np.asarray(kernel(x_ref, x_a), dtype=float)
    w_b = np.asarray(kernel(x_ref, x_b), dtype=float)
    diff = (w_b - w_a) if novelty else (w_a - w_b)
    ok = diff > STRICT_MARGIN
    checks.append(_tally("equal_distance_cross_domain", ok, (x_ref, x_a, x_b), (w_a, w_b)))

    # equal raw distances, both candidates inside the domain, x_a deeper
    x_ref, x_a, x_b = _draw_within_equal(streams[2], n)
    w_a = np.asarray(kernel(x_ref, x_a), dtype=float)
    w_b = np.asarray(kernel(x_ref, x_b), dtype=float)
    diff = (w_b - w_a) if novelty else (w_a - w_b)
    ok = diff > STRICT_MARGIN
    checks.append(_tally("equal_distance_within_domain", ok, (x_ref, x_a, x_b), (w_a, w_b)))

    # same side of the reference, x_b strictly closer
    x_ref, x_a, x_b = _draw_same_side(streams[3], n)
    w_a = np.asarray(kernel(x_ref, x_a), dtype=float)
    w_b = np.asarray(kernel(x_ref, x_b), dtype=float)
    diff = (w_a - w_b) if novelty else (w_b - w_a)
    ok = diff > STRICT_MARGIN
    checks.append(_tally("closer_same_side", ok, (x_ref, x_a, x_b), (w_a, w_b)))

    # existential: a crossing opinion closer than x_a outweighs it
    x_ref, x_a, x_b_grid = _draw_crossing_witness(streams[4], n)
    ok, best_b, w_a, w_best = _check_witness(kernel, x_ref, x_a, x_b_grid, novelty)
    checks.append(_tally("cross_domain_witness", ok, (x_ref, x_a, best_b), (w_a, w_best)))

    return BehaviorReport(family=family, checks=tuple(checks))


def verify_confirmation_behaviors(kernel, seed, n):
    """Sample the five confirmation scenarios against a weight kernel.

    kernel: callable(x_ref, x_other) -> weight, broadcasting over arrays;
    a BiasModel is also accepted (its confirmation side is used).
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if isinstance(kernel, BiasModel):
        kernel = confirmation_kernel(kernel)
    return _verify_behaviors(kernel, seed, n, "confirmation")


def verify_novelty_behaviors(kernel, seed, n):
    """Mirror suite: same hypotheses, every strict preference reversed."""
    if n < 1:
        raise ValueError("need at least one sample")
    if isinstance(kernel, BiasModel):
        kernel = novelty_kernel(kernel)
    return _verify_behaviors(kernel, seed, n, "novelty")


# ===================================================================
# sufficient-condition verifiers
# ===================================================================

def _verify_conditions(f, g, seed, n, family):
    novelty = family == "novelty"
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]
    checks = []

    # realized transformed-distance range; fall back when f is degenerate
    span = float(np.asarray(f(1.0)) - np.asarray(f(-1.0)))
    hi = max(span, 0.01)

    # weight monotone in the transformed distance
    rng = streams[0]
    z_small = rng.uniform(1e-4, 0.6 * hi, n)
    z_big = z_small + rng.uniform(0.05 * hi, 0.4 * hi, n)
    g_small = np.asarray(g(z_small), dtype=float)
    g_big = np.asarray(g(z_big), dtype=float)
    diff = (g_big - g_small) if novelty else (g_small - g_big)
    ok = diff > STRICT_MARGIN
    name = "weight_increasing_in_distance" if novelty else "weight_decreasing_in_distance"
    checks.append(_tally(name, ok, (z_small, z_big), (g_small, g_big)))

    # transform strictly increasing
    rng = streams[1]
    x1 = rng.uniform(-1.0, 0.98, n)
    x2 = x1 + rng.uniform(0.01, 1.0 - x1)
    f1 = np.asarray(f(x1), dtype=float)
    f2 = np.asarray(f(x2), dtype=float)
    ok = (f2 - f1) > STRICT_MARGIN
    checks.append(_tally("transform_increasing", ok, (x1, x2), (f1, f2)))

    # midpoint tilt on the positive side: f(ref) above the equal-distance mean
    rng = streams[2]
    xr = rng.uniform(0.02, 0.98, n)
    d = rng.uniform(0.01, 1.0 - xr)
    fr = np.asarray(f(xr), dtype=float)
    mean = (np.asarray(f(xr + d), dtype=float) + np.asarray(f(xr - d), dtype=float)) / 2.0
    ok = (fr - mean) > STRICT_MARGIN
    checks.append(_tally("positive_side_midpoint_concave", ok, (xr, d), (fr, mean)))

    # mirrored tilt on the negative side
    rng = streams[3]
    xr = -rng.uniform(0.02, 0.98, n)
    d = rng.uniform(0.01, 1.0 + xr)
    fr = np.asarray(f(xr), dtype=float)
    mean = (np.asarray(f(xr + d), dtype=float) + np.asarray(f(xr - d), dtype=float)) / 2.0
    ok = (mean - fr) > STRICT_MARGIN
    checks.append(_tally("negative_side_midpoint_convex", ok, (xr, d), (fr, mean)))

    # neutral reference sits exactly between symmetric transforms
    rng = streams[4]
    a = rng.uniform(0.01, 1.0, n)
    f0 = np.asarray(f(0.0), dtype=float)
    mean = (np.asarray(f(a), dtype=float) + np.asarray(f(-a), dtype=float)) / 2.0
    ok = np.abs(f0 - mean) <= EQUALITY_TOL
    checks.append(_tally("neutral_midpoint_balance", ok, (a,), (np.broadcast_to(f0, a.shape), mean)))

    return ConditionReport(family=family, checks=tuple(checks))


def verify_theorem1_conditions(f, g, seed, n):
    """Sufficient conditions for the confirmation axioms: g strictly
    decreasing in the distance, f strictly increasing, the two midpoint
    tilts, and the neutral midpoint balance."""
    if n < 1:
        raise ValueError("need at least one sample")
    return _verify_conditions(f, g, seed, n, "confirmation")


def verify_theorem2_conditions(f, g, seed, n):
    """Sufficient conditions for the novelty axioms: identical to the
    confirmation set except g must be strictly increasing."""
    if n < 1:
        raise ValueError("need at least one sample")
    return _verify_conditions(f, g, seed, n, "novelty")
