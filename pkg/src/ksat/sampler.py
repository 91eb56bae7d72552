"""Heat-bath block dynamics on marked variables, plus the final extension.

One chain: initialize the marked variables with fair coins (redrawing up to
100 times if the pinning has no satisfying extension), then for each step
pick a uniform block S of ceil(theta*|M|) marked variables and redraw X(S)
from the exact conditional law given X(M \\ S), and finally extend to the
unmarked variables with one exact conditional sample.

All draws go through the same plan/solution caches as
``marginals.sample_conditional`` and consume randomness in the same
documented order, so a chain is reproducible from (formula, marking, config)
alone.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .errors import DomainError, UsageError
from .formula import Formula, enumerate_solutions, is_satisfying, mask_to_assignment
from .marginals import DEFAULT_CAP, _PLAN_CACHES, _build_plan
from .marking import Marking
from .rng import as_rng, make_rng, rand_below, rand_bit, spawn_seed, subsample

_MAX_REJECTS = 100


@dataclass(frozen=True)
class SamplerConfig:
    theta: float
    t_max: int
    seed: int
    cap: int = DEFAULT_CAP
    init: Mapping | None = None  # partial assignment on the marked set

    def block_size(self, n_marked: int) -> int:
        return math.ceil(self.theta * n_marked)


@dataclass
class ChainTrace:
    steps: int = 0
    max_component_per_step: list = field(default_factory=list)
    extension_max_component: int = 0
    init_retries: int = 0
    step_retries: int = 0
    final: tuple | None = None  # the returned satisfying assignment

    @property
    def max_component(self) -> int:
        per_step = max(self.max_component_per_step, default=0)
        return max(per_step, self.extension_max_component)


def default_t_max(theta: float, n: int) -> int:
    """Desk-scale step budget: ceil((1/theta)^2 * ln(n) * 50)."""
    return math.ceil((1.0 / theta) ** 2 * math.log(max(n, 2)) * 50)


class _ExecPlan:
    """Pre-decoded draw schedule for one (pinning, targets) pair.

    draws: per component intersecting the targets (ascending min variable),
    (solutions array, count, rejection bit width, (local bit, global bit)
    decode pairs). free_bits: global bit per target in no residual clause,
    ascending.
    """

    __slots__ = ("ok", "draws", "free_bits", "max_comp_vars")

    def __init__(self, ok, draws, free_bits, max_comp_vars):
        self.ok = ok
        self.draws = draws
        self.free_bits = free_bits
        self.max_comp_vars = max_comp_vars


class _Chain:
    """Precomputed state shared by every run on one (formula, marking)."""

    def __init__(self, f: Formula, m: Marking, cfg: SamplerConfig):
        if not 0 < cfg.theta <= 1:
            raise UsageError(f"theta must lie in (0, 1], got {cfg.theta}")
        if cfg.t_max < 0:
            raise UsageError(f"t_max must be >= 0, got {cfg.t_max}")
        # Quota certification refers to the formula the marking was built
        # for (the good CNF, for random formulas); bad clauses of the full
        # formula carry no marked variables, so no re-verification here.
        if not m.certified:
            raise UsageError("marking is not certified")
        self.f = f
        self.marked = sorted(m.marked)
        if not self.marked:
            raise UsageError("marking is empty")
        block = cfg.block_size(len(self.marked))
        if not 1 <= block <= len(self.marked):
            raise UsageError(
                f"block size {block} outside [1, {len(self.marked)}]"
            )
        self.block = block
        self.cfg = cfg
        self.marked_mask = 0
        for v in self.marked:
            self.marked_mask |= 1 << (v - 1)
        self.unmarked = [v for v in range(1, f.n + 1) if not (self.marked_mask >> (v - 1)) & 1]
        self.unmarked_mask = 0
        for v in self.unmarked:
            self.unmarked_mask |= 1 << (v - 1)
        self.plans = _PLAN_CACHES.setdefault(f, {})
        self.execs: dict = {}

    def plan(self, dom: int, val: int):
        key = (dom, val)
        p = self.plans.get(key)
        if p is None:
            p = _build_plan(self.f, dom, val)
            self.plans[key] = p
        return p

    def exec_for(self, dom: int, val: int) -> _ExecPlan:
        """Execution plan for redrawing the step targets under the pinning
        (dom, val). Targets are the marked variables outside dom, except for
        the full marked pinning, whose targets are the unmarked variables
        (the final extension)."""
        key = (dom, val)
        e = self.execs.get(key)
        if e is not None:
            return e
        targets_mask = self.marked_mask & ~dom
        if not targets_mask:
            targets_mask = self.unmarked_mask
        plan = self.plan(dom, val)
        if not plan.ok:
            e = _ExecPlan(False, (), (), 0)
            self.execs[key] = e
            return e
        cap = self.cfg.cap
        draws = []
        ok = True
        for comp in plan.comps:  # already ascending by min variable
            pairs = tuple(
                (comp.bit_of[v], 1 << (v - 1))
                for v in comp.vars
                if (targets_mask >> (v - 1)) & 1
            )
            if not pairs:
                continue
            sols = comp.solutions(cap)
            count = len(sols)
            if count == 0:
                ok = False
                break
            draws.append((sols, count, (count - 1).bit_length(), pairs))
        free_bits = []
        if ok:
            comp_of = plan.comp_of_var
            for b in range(self.f.n):
                if (targets_mask >> b) & 1 and comp_of.get(b + 1) is None:
                    free_bits.append(1 << b)
        e = _ExecPlan(ok, tuple(draws), tuple(free_bits), plan.max_comp_vars)
        self.execs[key] = e
        return e

    def draw(self, e: _ExecPlan, rng, bits: int) -> int:
        grb = rng.getrandbits
        for sols, count, width, pairs in e.draws:
            if count == 1:
                idx = 0
            else:
                while True:
                    idx = grb(width)
                    if idx < count:
                        break
            mask = int(sols[idx])
            for lb, gb in pairs:
                if (mask >> lb) & 1:
                    bits |= gb
                else:
                    bits &= ~gb
        for gb in e.free_bits:
            if grb(1):
                bits |= gb
            else:
                bits &= ~gb
        return bits

    def feasible_full_pinning(self, xbits: int) -> bool:
        plan = self.plan(self.marked_mask, xbits)
        if not plan.ok:
            return False
        return all(len(c.solutions(self.cfg.cap)) > 0 for c in plan.comps)


def _init_marked(chain: _Chain, rng, trace: ChainTrace) -> int:
    cfg = chain.cfg
    if cfg.init is not None:
        if set(cfg.init) != set(chain.marked):
            raise UsageError("init assignment must cover exactly the marked set")
        xbits = 0
        for v in chain.marked:
            if cfg.init[v]:
                xbits |= 1 << (v - 1)
        if not chain.feasible_full_pinning(xbits):
            raise DomainError("given initial marked assignment is infeasible")
        return xbits
    for _ in range(_MAX_REJECTS + 1):
        xbits = 0
        for v in chain.marked:
            if rand_bit(rng):
                xbits |= 1 << (v - 1)
        if chain.feasible_full_pinning(xbits):
            return xbits
        trace.init_retries += 1
    raise DomainError(
        "no feasible initial marked assignment found in "
        f"{_MAX_REJECTS} redraws; the formula may be unsatisfiable"
    )


def _run_marked_chain(chain: _Chain, rng, trace: ChainTrace) -> int:
    """X_0 .. X_{t_max} on the marked bits; returns the final bitmask."""
    xbits = _init_marked(chain, rng, trace)
    marked = chain.marked
    marked_mask = chain.marked_mask
    block_size = chain.block
    exec_for = chain.exec_for
    draw = chain.draw
    max_sizes = trace.max_component_per_step
    grb = rng.getrandbits
    npool = len(marked)
    # inlined partial Fisher-Yates, consuming exactly like rng.subsample
    widths = [(npool - i - 1).bit_length() for i in range(block_size)]
    for _ in range(chain.cfg.t_max):
        for _attempt in range(_MAX_REJECTS + 1):
            pool = marked.copy()
            s_mask = 0
            for i in range(block_size):
                span = npool - i
                if span == 1:
                    j = i
                else:
                    w = widths[i]
                    while True:
                        r = grb(w)
                        if r < span:
                            break
                    j = i + r
                pool[i], pool[j] = pool[j], pool[i]
                s_mask |= 1 << (pool[i] - 1)
            dom = marked_mask & ~s_mask
            e = exec_for(dom, xbits & dom)
            if not e.ok:
                trace.step_retries += 1
                continue
            xbits = draw(e, rng, xbits)
            max_sizes.append(e.max_comp_vars)
            break
        else:
            raise DomainError(
                f"step rejected {_MAX_REJECTS} times; conditioning infeasible"
            )
        trace.steps += 1
    return xbits


def _run_full(chain: _Chain, rng):
    trace = ChainTrace()
    xbits = _run_marked_chain(chain, rng, trace)
    ext = chain.exec_for(chain.marked_mask, xbits)
    if not ext.ok:
        raise DomainError("final marked assignment is infeasible")
    trace.extension_max_component = ext.max_comp_vars
    bits = chain.draw(ext, rng, xbits)
    assignment = mask_to_assignment(bits, chain.f.n)
    if not is_satisfying(chain.f, assignment):
        raise AssertionError("block dynamics produced a non-satisfying assignment")
    trace.final = assignment
    return assignment, trace


def run_block_dynamics(f: Formula, m: Marking, cfg: SamplerConfig):
    """Run the chain and extend to a full satisfying assignment.

    Returns (assignment, trace). Deterministic given (f, m, cfg).
    """
    chain = _Chain(f, m, cfg)
    return _run_full(chain, as_rng(cfg.seed))


@dataclass(frozen=True)
class TvEstimate:
    tv: float
    runs: int
    n_solutions: int
    max_cell_halfwidth: float
    max_component: int


def estimate_tv(f: Formula, m: Marking, cfg: SamplerConfig, runs: int) -> TvEstimate:
    """Total-variation distance of the empirical chain output law from the
    uniform distribution on all solutions, over `runs` independent chains
    seeded from cfg.seed."""
    sols = enumerate_solutions(f)
    if not sols:
        raise DomainError("formula has no solutions to compare against")
    chain = _Chain(f, m, cfg)
    master = make_rng(cfg.seed)
    counts = Counter()
    max_comp = 0
    for _ in range(runs):
        a, trace = _run_full(chain, make_rng(spawn_seed(master)))
        counts[a] += 1
        max_comp = max(max_comp, trace.max_component)
    p = 1.0 / len(sols)
    tv = 0.5 * sum(abs(counts.get(s, 0) / runs - p) for s in sols)
    stray = runs - sum(counts.get(s, 0) for s in sols)
    tv += 0.5 * stray / runs
    halfwidth = max(
        1.96 * math.sqrt(max(c / runs * (1 - c / runs), 0.0) / runs)
        for c in counts.values()
    )
    return TvEstimate(
        tv=tv,
        runs=runs,
        n_solutions=len(sols),
        max_cell_halfwidth=halfwidth,
        max_component=max_comp,
    )


@dataclass(frozen=True)
class ChainUniformityCell:
    subset: tuple
    pattern: tuple
    frequency: float
    bound: float
    slack: float  # bound + z*sigma - frequency; negative means violation


@dataclass(frozen=True)
class ChainUniformityReport:
    trials: int
    s: float
    z: float
    cells: tuple
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def check_chain_uniformity(
    f: Formula,
    m: Marking,
    cfg: SamplerConfig,
    trials: int,
    n_subsets: int = 20,
    subset_sizes=(1, 2),
    s: float | None = None,
    z: float = 3.0,
) -> ChainUniformityReport:
    """Empirical check that the marked chain law stays locally uniform:
    every cell P(X_t(U) = pattern) at most 2^-|U| e^(|U|/s) plus z binomial
    standard errors."""
    if s is None:
        s = max((len(c) for c in f.clauses), default=1)
    chain = _Chain(f, m, cfg)
    master = make_rng(cfg.seed)
    samples = []
    for _ in range(trials):
        rng = make_rng(spawn_seed(master))
        trace = ChainTrace()
        samples.append(_run_marked_chain(chain, rng, trace))

    marked = chain.marked
    cells = []
    violations = []
    for _ in range(n_subsets):
        size = subset_sizes[rand_below(master, len(subset_sizes))]
        size = min(size, len(marked))
        subset = tuple(sorted(subsample(master, marked, size)))
        sub_mask = 0
        for v in subset:
            sub_mask |= 1 << (v - 1)
        counts = Counter(x & sub_mask for x in samples)
        bound = (0.5 ** len(subset)) * math.exp(len(subset) / s)
        for pattern_bits, c in sorted(counts.items()):
            freq = c / trials
            sigma = math.sqrt(max(freq * (1 - freq), 1e-12) / trials)
            slack = bound + z * sigma - freq
            cell = ChainUniformityCell(
                subset=subset,
                pattern=tuple((pattern_bits >> (v - 1)) & 1 for v in subset),
                frequency=freq,
                bound=bound,
                slack=slack,
            )
            cells.append(cell)
            if slack < 0:
                violations.append(cell)
    return ChainUniformityReport(
        trials=trials, s=s, z=z, cells=tuple(cells), violations=tuple(violations)
    )
