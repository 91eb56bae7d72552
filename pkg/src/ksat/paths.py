"""Explicit short-step paths between satisfying assignments.

The bounded-degree walk runs in two stages. Stage 1 processes marked
variables in ascending order, retargeting each to its destination value by
re-solving only the connected component of that variable in the formula
simplified under the other marked values, and picking the component solution
closest in Hamming distance (ties broken by the smallest local solution
encoding). Stage 2 pins all marked variables at their destination values and
switches each residual component wholesale to the destination assignment;
variables outside the marked set and every residual component flip in the
first stage-2 step.

The random-formula walk routes both endpoints through a common uniform
solution of the good CNF, then walks the bad components between the two
bad-variable assignments.
"""

from __future__ import annotations

from dataclasses import dataclass

from .classify import Classification, good_induced_formula
from .errors import InfeasiblePinningError, RegimeError, UsageError
from .formula import Formula, hamming, is_satisfying, simplify
from .marginals import DEFAULT_CAP, pin_masks, plan_for, sample_conditional
from .marking import Marking, verify_marking
from .rng import as_rng

STAGE_MARKED = "marked-update"
STAGE_UNMARKED = "unmarked-component"
STAGE_BAD = "bad-component"
STAGE_LIFT = "lift"


@dataclass(frozen=True)
class SolutionPath:
    """Ordered satisfying assignments with per-step distances and stage tags.

    entries[0] and entries[-1] are the input endpoints; step_distances[i] =
    hamming(entries[i], entries[i+1]) > 0 for every step.
    """

    entries: tuple
    step_distances: tuple
    stages: tuple

    @property
    def max_step(self) -> int:
        return max(self.step_distances, default=0)

    def to_json(self) -> dict:
        return {
            "schema": "ksat/path/v1",
            "entries": ["".join(map(str, a)) for a in self.entries],
            "distances": list(self.step_distances),
            "stages": list(self.stages),
        }


class _PathBuilder:
    def __init__(self, start):
        self.entries = [tuple(start)]
        self.distances = []
        self.stages = []

    @property
    def current(self):
        return self.entries[-1]

    def push(self, assignment, stage):
        assignment = tuple(assignment)
        d = hamming(self.current, assignment)
        if d == 0:
            return
        self.entries.append(assignment)
        self.distances.append(d)
        self.stages.append(stage)

    def extend(self, path: "SolutionPath", stage=None):
        for i, entry in enumerate(path.entries[1:]):
            self.push(entry, stage if stage is not None else path.stages[i])

    def build(self) -> SolutionPath:
        return SolutionPath(
            tuple(self.entries), tuple(self.distances), tuple(self.stages)
        )


def _component_resolve(f, pin, v, want, reference, cap):
    """Values on the component of v in f^pin: the component solution with
    v=want minimizing Hamming distance to `reference`, ties to the smallest
    local encoding. Returns dict of var -> bit for the component vars, or
    None when no component solution has v=want."""
    dom, val = pin_masks(pin)
    plan = plan_for(f, dom, val)
    if not plan.ok:
        raise InfeasiblePinningError(
            f"pinning falsifies clause {plan.falsified_clause}"
        )
    comp = plan.component_of(v)
    if comp is None:
        return {v: want}
    sols = comp.solutions(cap)
    if len(sols) == 0:
        raise InfeasiblePinningError(
            f"component of variable {v} is unsatisfiable under the pinning"
        )
    vbit = comp.bit_of[v]
    ref_mask = 0
    for i, u in enumerate(comp.vars):
        if reference[u - 1]:
            ref_mask |= 1 << i
    best = None
    best_key = None
    for s in sols:
        s = int(s)
        if (s >> vbit) & 1 != want:
            continue
        d = bin(s ^ ref_mask).count("1")
        key = (d, s)
        if best_key is None or key < best_key:
            best_key = key
            best = s
    if best is None:
        return None
    return {u: (best >> i) & 1 for i, u in enumerate(comp.vars)}


def _check_inputs(f, m, sigma, sigma_prime):
    if not m.certified:
        raise UsageError("marking is not certified")
    bad = verify_marking(f, m)
    if bad:
        raise UsageError(f"marking violates its quotas on clauses {bad}")
    for name, a in (("sigma", sigma), ("sigma_prime", sigma_prime)):
        if len(a) != f.n:
            raise UsageError(f"{name} has length {len(a)}, expected {f.n}")
        if not is_satisfying(f, a):
            raise UsageError(f"{name} does not satisfy the formula")


def find_path_bounded(
    f: Formula,
    m: Marking,
    sigma,
    sigma_prime,
    cap: int = DEFAULT_CAP,
) -> SolutionPath:
    """Two-stage marked-variable walk from sigma to sigma_prime."""
    _check_inputs(f, m, sigma, sigma_prime)
    sigma = tuple(sigma)
    sigma_prime = tuple(sigma_prime)
    builder = _PathBuilder(sigma)
    marked = sorted(m.marked)

    # Stage 1: retarget marked variables one at a time
    for v in marked:
        cur = builder.current
        if cur[v - 1] == sigma_prime[v - 1]:
            continue
        pin = {u: cur[u - 1] for u in marked if u != v}
        update = _component_resolve(
            f, pin, v, sigma_prime[v - 1], cur, cap
        )
        if update is None:
            raise RegimeError(
                f"marked variable {v} cannot take value {sigma_prime[v - 1]} "
                "under the shared marked pinning; marking preconditions "
                "do not hold at these parameters"
            )
        nxt = list(cur)
        for u, b in update.items():
            nxt[u - 1] = b
        if not is_satisfying(f, nxt):
            raise AssertionError("stage-1 update broke satisfaction")
        builder.push(nxt, STAGE_MARKED)

    assert all(builder.current[v - 1] == sigma_prime[v - 1] for v in marked)

    # Stage 2: pin the marked destination, switch residual components
    pin = {v: sigma_prime[v - 1] for v in marked}
    dom, val = pin_masks(pin)
    plan = plan_for(f, dom, val)
    if not plan.ok:
        raise AssertionError("destination marked assignment falsifies a clause")
    component_vars = set()
    for comp in plan.comps:
        component_vars.update(comp.vars)
    outside = [
        v
        for v in range(1, f.n + 1)
        if v not in component_vars and v not in pin
    ]

    comps = sorted(plan.comps, key=lambda c: c.min_var)
    if comps:
        for i, comp in enumerate(comps):
            nxt = list(builder.current)
            for u in comp.vars:
                nxt[u - 1] = sigma_prime[u - 1]
            if i == 0:
                for u in outside:
                    nxt[u - 1] = sigma_prime[u - 1]
            if not is_satisfying(f, nxt):
                raise AssertionError("stage-2 update broke satisfaction")
            builder.push(nxt, STAGE_UNMARKED)
    else:
        nxt = list(builder.current)
        for u in outside:
            nxt[u - 1] = sigma_prime[u - 1]
        builder.push(nxt, STAGE_UNMARKED)

    path = builder.build()
    if path.entries[-1] != sigma_prime:
        raise AssertionError("path does not reach the destination")
    return path


def find_path_random(
    f: Formula,
    cl: Classification,
    m: Marking,
    sigma,
    sigma_prime,
    seed=0,
    cap: int = DEFAULT_CAP,
) -> SolutionPath:
    """Route both endpoints through a uniform good-CNF solution, then walk
    the bad components between the endpoint bad assignments."""
    sigma = tuple(sigma)
    sigma_prime = tuple(sigma_prime)
    for name, a in (("sigma", sigma), ("sigma_prime", sigma_prime)):
        if not is_satisfying(f, a):
            raise UsageError(f"{name} does not satisfy the formula")
    if not m.certified:
        raise UsageError("marking is not certified")
    if not m.marked <= cl.v_good:
        raise UsageError("marking must sit inside the good variables")
    rng = as_rng(seed)

    good = good_induced_formula(f, cl, force=True)
    good_vars = sorted(cl.v_good)
    psi = sample_conditional(good, {}, good_vars, rng, cap=cap)

    def lifted_leg(endpoint):
        """Path from `endpoint` to psi + endpoint(bad vars), inside the
        formula simplified under the endpoint's bad assignment."""
        bad_pin = {v: endpoint[v - 1] for v in sorted(cl.v_bad)}
        out = simplify(f, bad_pin)
        if not out.ok:
            raise AssertionError("satisfying endpoint falsified its own pinning")
        target = list(endpoint)
        for v, b in psi.items():
            target[v - 1] = b
        target = tuple(target)
        if not is_satisfying(f, target):
            raise RegimeError(
                "uniform good-CNF solution does not lift to a solution; "
                "classification parameters outside the supported regime"
            )
        return find_path_bounded(out.formula, m, endpoint, target, cap=cap)

    leg_a = lifted_leg(sigma)
    leg_b = lifted_leg(sigma_prime)

    builder = _PathBuilder(sigma)
    builder.extend(leg_a, stage=STAGE_LIFT)

    # middle: switch bad components from sigma's to sigma_prime's values
    tau = builder.current
    psi_pin = dict(psi)
    dom, val = pin_masks(psi_pin)
    plan = plan_for(f, dom, val)
    if not plan.ok:
        raise AssertionError("good-solution pinning falsifies a clause")
    comp_vars = set()
    for comp in plan.comps:
        comp_vars.update(comp.vars)
    stray = [
        v for v in sorted(cl.v_bad) if v not in comp_vars
    ]
    comps = sorted(plan.comps, key=lambda c: c.min_var)
    if comps:
        for i, comp in enumerate(comps):
            nxt = list(builder.current)
            for u in comp.vars:
                nxt[u - 1] = sigma_prime[u - 1]
            if i == 0:
                for u in stray:
                    nxt[u - 1] = sigma_prime[u - 1]
            if not is_satisfying(f, nxt):
                raise AssertionError("bad-component switch broke satisfaction")
            builder.push(nxt, STAGE_BAD)
    elif stray:
        nxt = list(builder.current)
        for u in stray:
            nxt[u - 1] = sigma_prime[u - 1]
        if not is_satisfying(f, nxt):
            raise AssertionError("bad-component switch broke satisfaction")
        builder.push(nxt, STAGE_BAD)

    # reversed second leg: from psi + sigma_prime(bad) back to sigma_prime
    for entry in reversed(leg_b.entries[:-1]):
        builder.push(entry, STAGE_LIFT)

    path = builder.build()
    if path.entries[-1] != sigma_prime:
        raise AssertionError("path does not reach sigma_prime")
    return path


@dataclass(frozen=True)
class PathReport:
    non_satisfying: tuple  # entry indices
    oversize_steps: tuple  # (step index, distance)
    distance_mismatches: tuple  # (step index, recorded, recomputed)
    endpoint_mismatch: tuple  # () or a description tuple

    @property
    def ok(self) -> bool:
        return not (
            self.non_satisfying
            or self.oversize_steps
            or self.distance_mismatches
            or self.endpoint_mismatch
        )


def validate_path(
    f: Formula,
    p: SolutionPath,
    d_bound: int,
    sigma=None,
    sigma_prime=None,
) -> PathReport:
    """Check every entry satisfies, every step distance is recorded correctly
    and at most d_bound, and (when given) the endpoints match."""
    non_sat = tuple(
        i for i, a in enumerate(p.entries) if not is_satisfying(f, a)
    )
    oversize = []
    mismatch = []
    for i in range(len(p.entries) - 1):
        d = hamming(p.entries[i], p.entries[i + 1])
        if i < len(p.step_distances) and d != p.step_distances[i]:
            mismatch.append((i, p.step_distances[i], d))
        if d > d_bound:
            oversize.append((i, d))
    endpoint = ()
    if sigma is not None and p.entries[0] != tuple(sigma):
        endpoint += ("start",)
    if sigma_prime is not None and p.entries[-1] != tuple(sigma_prime):
        endpoint += ("end",)
    return PathReport(
        non_satisfying=non_sat,
        oversize_steps=tuple(oversize),
        distance_mismatches=tuple(mismatch),
        endpoint_mismatch=endpoint,
    )
