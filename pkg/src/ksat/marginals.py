"""Exact conditional marginals and exact conditional sampling.

Everything here reduces to one primitive: simplify the formula under a
pinning, split the residual into connected components, and enumerate each
component's satisfying assignments. Component solution sets are memoized on
a canonical form of the component subformula, and residual decompositions
("plans") are memoized per (formula, pinning), which is what makes the
10^5-run Monte Carlo suites affordable.

Determinism contract for sampling: components are consumed in ascending
order of their minimum variable (one uniform index draw each), then target
variables outside every residual clause get one fair bit each, in ascending
variable order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

import numpy as np

from .errors import CapExceededError, InfeasiblePinningError, UsageError
from .formula import Formula, _check_partial
from .rng import as_rng, rand_below, rand_bit

DEFAULT_CAP = 1 << 22  # assignment evaluations allowed per component

_ENUM_CHUNK = 1 << 20

# canonical component subformula -> uint64 array of satisfying local masks
_SOL_CACHE: dict = {}
# formula -> {(dom_mask, val_mask) -> _Plan}
_PLAN_CACHES: dict = {}


def clear_caches() -> None:
    _SOL_CACHE.clear()
    _PLAN_CACHES.clear()


def pin_masks(x: Mapping) -> tuple:
    """(domain mask, value mask) of a partial assignment, bit v-1 for var v."""
    dom = val = 0
    for v, b in x.items():
        bit = 1 << (v - 1)
        dom |= bit
        if b:
            val |= bit
    return dom, val


def _iter_bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class _Component:
    """One connected component of a simplified formula."""

    __slots__ = ("vars", "key", "bit_of", "min_var", "_sols", "_ones")

    def __init__(self, vars_sorted, clauses_local):
        self.vars = vars_sorted
        self.key = (len(vars_sorted), tuple(sorted(set(clauses_local))))
        self.bit_of = {v: i for i, v in enumerate(vars_sorted)}
        self.min_var = vars_sorted[0]
        self._sols = None
        self._ones = {}

    @property
    def evaluations(self) -> int:
        return 1 << len(self.vars)

    def solutions(self, cap: int) -> np.ndarray:
        if self.evaluations > cap:
            raise CapExceededError(
                f"component on {len(self.vars)} variables needs "
                f"{self.evaluations} evaluations, cap is {cap}",
                size=len(self.vars),
            )
        if self._sols is None:
            cached = _SOL_CACHE.get(self.key)
            if cached is None:
                cached = _enumerate_local(len(self.vars), self.key[1])
                _SOL_CACHE[self.key] = cached
            self._sols = cached
        return self._sols

    def one_count(self, v: int, cap: int) -> int:
        """Number of component solutions assigning v = 1."""
        ones = self._ones.get(v)
        if ones is None:
            sols = self.solutions(cap)
            bit = np.uint64(self.bit_of[v])
            ones = int(((sols >> bit) & np.uint64(1)).sum())
            self._ones[v] = ones
        return ones


def _enumerate_local(nvars: int, clauses) -> np.ndarray:
    """Satisfying local masks of a component subformula, ascending. Local
    variable i (the i-th smallest) sits at bit i."""
    total = 1 << nvars
    pieces = []
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        arr = np.arange(start, stop, dtype=np.uint64)
        ok = np.ones(stop - start, dtype=bool)
        for pos, neg in clauses:
            sat = (arr & np.uint64(pos)) != 0 if pos else np.zeros(len(arr), dtype=bool)
            if neg:
                sat |= (~arr & np.uint64(neg)) != 0
            ok &= sat
            if not ok.any():
                break
        pieces.append(arr[ok])
    return np.concatenate(pieces) if len(pieces) > 1 else pieces[0]


class _Plan:
    """Residual decomposition of a formula under a pinning."""

    __slots__ = (
        "status",
        "falsified_clause",
        "comps",
        "comp_of_var",
        "clause_vars_mask",
        "dom_mask",
        "max_comp_vars",
    )

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def component_of(self, v: int):
        return self.comp_of_var.get(v)


def plan_for(f: Formula, dom_mask: int, val_mask: int) -> _Plan:
    """Cached residual decomposition of f under the pinning (dom, val)."""
    cache = _PLAN_CACHES.get(f)
    if cache is None:
        cache = {}
        _PLAN_CACHES[f] = cache
    key = (dom_mask, val_mask & dom_mask)
    plan = cache.get(key)
    if plan is None:
        plan = _build_plan(f, dom_mask, val_mask & dom_mask)
        cache[key] = plan
    return plan


def _build_plan(f: Formula, dom: int, val: int) -> _Plan:
    plan = _Plan()
    plan.dom_mask = dom
    residual = []  # (free_pos, free_neg, free_vars_mask)
    for cid, (pos, neg) in enumerate(f._clause_masks):
        if (pos & val) or (neg & dom & ~val):
            continue
        fpos = pos & ~dom
        fneg = neg & ~dom
        fmask = fpos | fneg
        if not fmask:
            plan.status = "falsified"
            plan.falsified_clause = cid
            plan.comps = ()
            plan.comp_of_var = {}
            plan.clause_vars_mask = 0
            plan.max_comp_vars = 0
            return plan
        residual.append((fpos, fneg, fmask))

    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    clause_vars_mask = 0
    for fpos, fneg, fmask in residual:
        clause_vars_mask |= fmask
        bits = list(_iter_bits(fmask))
        for b in bits:
            if b not in parent:
                parent[b] = b
        root = find(bits[0])
        for b in bits[1:]:
            rb = find(b)
            if rb != root:
                parent[rb] = root

    clause_groups: dict = {}
    for fpos, fneg, fmask in residual:
        root = find(next(_iter_bits(fmask)))
        clause_groups.setdefault(root, []).append((fpos, fneg))
    var_groups: dict = {}
    for b in parent:
        var_groups.setdefault(find(b), []).append(b)

    comps = []
    for root, bits in var_groups.items():
        vars_sorted = tuple(sorted(b + 1 for b in bits))
        bitpos = {b: i for i, b in enumerate(sorted(bits))}
        local_clauses = []
        for fpos, fneg in clause_groups[root]:
            lpos = lneg = 0
            for b in _iter_bits(fpos):
                lpos |= 1 << bitpos[b]
            for b in _iter_bits(fneg):
                lneg |= 1 << bitpos[b]
            local_clauses.append((lpos, lneg))
        comps.append(_Component(vars_sorted, tuple(local_clauses)))
    comps.sort(key=lambda c: c.min_var)

    plan.status = "ok"
    plan.falsified_clause = None
    plan.comps = tuple(comps)
    plan.comp_of_var = {v: c for c in comps for v in c.vars}
    plan.clause_vars_mask = clause_vars_mask
    plan.max_comp_vars = max((len(c.vars) for c in comps), default=0)
    return plan


def exact_marginal(f: Formula, x: Mapping, v: int, cap: int = DEFAULT_CAP) -> Fraction:
    """mu_v(1 | x), exactly, as the solution-count ratio of v's component.

    The conditional only exists when x has a satisfying extension, so every
    residual component is checked for solutions; InfeasiblePinningError
    covers falsified clauses and empty components alike, CapExceededError a
    component too large to enumerate.
    """
    _check_partial(f, x)
    if not 1 <= v <= f.n:
        raise UsageError(f"variable {v} out of range [1, {f.n}]")
    if v in x:
        raise UsageError(f"variable {v} is pinned by the conditioning")
    dom, val = pin_masks(x)
    plan = plan_for(f, dom, val)
    if not plan.ok:
        raise InfeasiblePinningError(
            f"pinning falsifies clause {plan.falsified_clause}"
        )
    for comp in plan.comps:
        if len(comp.solutions(cap)) == 0:
            raise InfeasiblePinningError(
                f"component containing variable {comp.min_var} has no "
                "satisfying assignment under the pinning"
            )
    comp = plan.component_of(v)
    if comp is None:
        return Fraction(1, 2)
    return Fraction(comp.one_count(v, cap), len(comp.solutions(cap)))


@dataclass(frozen=True)
class ComponentSample:
    """One uniform draw from a component of a simplified formula: the
    component's variables, a satisfying assignment on them, and the
    component's solution count."""

    vars: tuple
    assignment: dict
    weight: int


def _draw_component(comp, rng, cap: int) -> ComponentSample:
    sols = comp.solutions(cap)
    if len(sols) == 0:
        raise InfeasiblePinningError(
            f"component containing variable {comp.min_var} is unsatisfiable "
            "under the pinning"
        )
    mask = int(sols[rand_below(rng, len(sols))])
    return ComponentSample(
        vars=comp.vars,
        assignment={v: (mask >> comp.bit_of[v]) & 1 for v in comp.vars},
        weight=len(sols),
    )


def iter_component_samples(f: Formula, x: Mapping, targets, rng, cap: int = DEFAULT_CAP):
    """One ComponentSample per component of the simplified formula meeting
    the targets, in ascending order of the component's minimum variable."""
    dom, val = pin_masks(x)
    plan = plan_for(f, dom, val)
    if not plan.ok:
        raise InfeasiblePinningError(
            f"pinning falsifies clause {plan.falsified_clause}"
        )
    seen = set()
    comps = []
    for v in targets:
        comp = plan.component_of(v)
        if comp is not None and id(comp) not in seen:
            seen.add(id(comp))
            comps.append(comp)
    comps.sort(key=lambda c: c.min_var)
    for comp in comps:
        yield _draw_component(comp, rng, cap)


def sample_conditional(f: Formula, x: Mapping, targets, seed, cap: int = DEFAULT_CAP):
    """Exact sample from mu_targets(. | x) as a dict on targets.

    Per component of the simplified formula that meets the targets, one
    uniform component solution is drawn and projected onto the targets;
    target variables in no residual clause get independent fair bits.
    """
    _check_partial(f, x)
    rng = as_rng(seed)
    targets = sorted(set(targets))
    for v in targets:
        if not 1 <= v <= f.n:
            raise UsageError(f"target variable {v} out of range [1, {f.n}]")
        if v in x:
            raise UsageError(f"target variable {v} is pinned by the conditioning")
    target_set = set(targets)
    out = {}
    for cs in iter_component_samples(f, x, targets, rng, cap):
        for v, b in cs.assignment.items():
            if v in target_set:
                out[v] = b
    dom, val = pin_masks(x)
    plan = plan_for(f, dom, val)
    for v in targets:
        if plan.component_of(v) is None:
            out[v] = rand_bit(rng)
    return out


@dataclass(frozen=True)
class UniformityReport:
    """Worst exact conditional marginal seen against the (1/2)e^(1/s) bound."""

    s: float
    worst: Fraction
    bound: float
    violations: tuple
    trials: int

    @property
    def ok(self) -> bool:
        return not self.violations


def check_local_uniformity(
    f: Formula,
    marking,
    s: float,
    trials: int,
    seed,
    cap: int = DEFAULT_CAP,
) -> UniformityReport:
    """Probe random marked pinnings for violations of local uniformity.

    Each trial: a uniform subset S of marked variables, an exact conditional
    sample X on S (hence a feasible pinning), a uniform variable v outside S;
    the exact marginal of v given X is compared against (1/2)e^(1/s).
    """
    if s <= 0:
        raise UsageError(f"uniformity parameter s must be positive, got {s}")
    rng = as_rng(seed)
    marked = sorted(marking.marked)
    bound = 0.5 * math.exp(1.0 / s)
    worst = Fraction(0)
    violations = []
    for _ in range(trials):
        sub = [v for v in marked if rand_bit(rng)]
        x = sample_conditional(f, {}, sub, rng, cap=cap) if sub else {}
        candidates = [v for v in range(1, f.n + 1) if v not in x]
        if not candidates:
            continue
        v = candidates[rand_below(rng, len(candidates))]
        p = exact_marginal(f, x, v, cap=cap)
        w = max(p, 1 - p)
        if w > worst:
            worst = w
        if float(w) > bound:
            violations.append((v, dict(x), p))
    return UniformityReport(
        s=s, worst=worst, bound=bound, violations=tuple(violations), trials=trials
    )


def tree_excess(f: Formula, clause_ids) -> int:
    """Edges - vertices + components of the incidence graph of the given
    clauses and their variables. Zero means the component is a hypertree."""
    clause_ids = sorted(set(clause_ids))
    if not clause_ids:
        return 0
    nodes = {}  # incidence-graph node -> index

    def node_id(key):
        if key not in nodes:
            nodes[key] = len(nodes)
        return nodes[key]

    parent = []

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = 0
    for cid in clause_ids:
        c_node = node_id(("c", cid))
        while len(parent) < len(nodes):
            parent.append(len(parent))
        for lit in f.clauses[cid]:
            v_node = node_id(("v", lit.var))
            while len(parent) < len(nodes):
                parent.append(len(parent))
            edges += 1
            ra, rb = find(c_node), find(v_node)
            if ra != rb:
                parent[rb] = ra
    components = len({find(i) for i in range(len(parent))})
    return edges - len(nodes) + components
