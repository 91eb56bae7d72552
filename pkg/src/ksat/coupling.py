"""The disagreement-propagation coupling and pairwise influence matrices.

``run_coupling`` reveals good variables adjacent to the current
disagreement set one at a time, coupling each through a shared uniform
r-value against the two exact conditional marginals. Clauses that collect
k_c revealed unpinned variables while still unsatisfied fail their
remaining variables; clauses whose good variables are exhausted fail their
bad variables; bad components touching a failed variable fail wholesale.
The final extension draws the coupled region once with shared randomness
and the failed regions independently, so each output is an exact
conditional sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .classify import Classification
from .errors import InfeasiblePinningError, UsageError
from .formula import (
    Formula,
    clause_graph_components,
    enumerate_solutions,
    is_satisfying,
)
from .marginals import DEFAULT_CAP, exact_marginal, sample_conditional
from .marking import Marking
from .rng import as_rng, make_rng, rand_float, spawn_seed


def default_k_c(k_u: int, zeta: float) -> int:
    """Reveal cutoff ceil(4 / (4(1 - 12*zeta) + 5) * k_u)."""
    denom = 4 * (1 - 12 * zeta) + 5
    if denom <= 0:
        raise UsageError(f"zeta = {zeta} leaves no valid cutoff denominator")
    return max(1, math.ceil(4 / denom * k_u))


@dataclass(frozen=True)
class CouplingTrace:
    v_set: frozenset
    v_failed: frozenset
    v_coupled: frozenset
    e_failed: frozenset
    e_failed_dagger: frozenset
    e_failed_ddagger: frozenset
    x: tuple
    y: tuple
    r_records: tuple  # (variable, r, X value, Y value) per coupled reveal
    v0: int

    @property
    def disagreements(self) -> frozenset:
        return frozenset(
            v + 1 for v in range(len(self.x)) if self.x[v] != self.y[v]
        )


def _satisfied_by(f: Formula, values: dict, cid: int) -> bool:
    for lit in f.clauses[cid]:
        val = values.get(lit.var)
        if val is not None and (val == 1) == lit.sign:
            return True
    return False


def run_coupling(
    f: Formula,
    cl: Classification,
    m: Marking,
    lambda_pin,
    v0: int,
    k_c: int,
    seed=0,
    cap: int = DEFAULT_CAP,
) -> CouplingTrace:
    """One run of the coupling under the pinning, with X(v0)=0, Y(v0)=1."""
    if v0 not in m.marked:
        raise UsageError(f"v0={v0} is not a marked variable")
    if v0 in lambda_pin:
        raise UsageError(f"v0={v0} is pinned")
    if not set(lambda_pin) <= m.marked:
        raise UsageError("pinning domain must be a subset of the marked set")
    if k_c < 1:
        raise UsageError(f"k_c must be >= 1, got {k_c}")
    p0 = exact_marginal(f, lambda_pin, v0, cap=cap)  # raises if pinning infeasible
    if p0 == 0 or p0 == 1:
        raise InfeasiblePinningError(
            f"pinning forces variable {v0}; both branches must be feasible"
        )
    rng = as_rng(seed)
    lam_dom = set(lambda_pin)

    x = dict(lambda_pin)
    y = dict(lambda_pin)
    x[v0] = 0
    y[v0] = 1
    v_set = set(lam_dom) | {v0}
    v_failed = {v0}
    e_failed: set = set()
    e_dagger: set = set()
    e_ddagger: set = set()
    records = []

    bad_comps = clause_graph_components(f, "shared-bad-var", 1, cl)
    bad_comp_vars = [
        frozenset(v for c in comp for v in f.clause_vars(c)) for comp in bad_comps
    ]
    absorbed = [False] * len(bad_comps)

    e_unsat = {
        cid
        for cid in range(f.m)
        if not (_satisfied_by(f, x, cid) and _satisfied_by(f, y, cid))
    }

    def apply_failure_rules():
        # iterated to fixpoint: each rule can enable the next
        while True:
            grown = len(v_failed)
            # unsatisfied clause with k_c revealed unpinned variables: the
            # rest fail (">=" rather than "==" so k_c = 1 cannot be skipped)
            for cid in sorted(e_unsat):
                vs = f.clause_vars(cid)
                if len(vs & (v_set - lam_dom)) >= k_c:
                    v_failed.update(vs - v_set)
                    e_failed.add(cid)
            # unsatisfied clause touching the failure set with no good
            # variable left to couple but undetermined bad variables
            for cid in sorted(e_unsat):
                vs = f.clause_vars(cid)
                if not vs & v_failed:
                    continue
                good_open = (vs & cl.v_good) - v_set - v_failed
                bad_open = (vs & cl.v_bad) - v_failed
                if not good_open and bad_open:
                    v_failed.update(vs & cl.v_bad)
                    e_dagger.add(cid)
            # bad components touching a failed variable fail wholesale
            for i, comp_vars in enumerate(bad_comp_vars):
                if not absorbed[i] and comp_vars & v_failed:
                    absorbed[i] = True
                    v_failed.update(comp_vars)
                    e_ddagger.update(bad_comps[i])
            if len(v_failed) == grown:
                return

    while True:
        pick = None
        for cid in sorted(e_unsat):
            vs = f.clause_vars(cid)
            if not vs & v_failed:
                continue
            open_good = sorted((vs & cl.v_good) - v_set - v_failed)
            if open_good:
                pick = (cid, open_good[0])
                break
        if pick is None:
            break
        cid, u = pick
        r = rand_float(rng)
        px = exact_marginal(f, x, u, cap=cap)
        py = exact_marginal(f, y, u, cap=cap)
        x[u] = 1 if r <= px else 0
        y[u] = 1 if r <= py else 0
        v_set.add(u)
        records.append((u, r, x[u], y[u]))
        if x[u] != y[u]:
            v_failed.add(u)
            e_failed.add(cid)
        for c2 in [c for c, _ in f.occ[u]]:
            if c2 in e_unsat and _satisfied_by(f, x, c2) and _satisfied_by(f, y, c2):
                e_unsat.discard(c2)
        apply_failure_rules()

    all_vars = set(range(1, f.n + 1))
    v_coupled = all_vars - v_failed

    # extension: one shared draw on the coupled region
    coupled_open = sorted(v_coupled - v_set)
    shared = sample_conditional(f, x, coupled_open, rng, cap=cap) if coupled_open else {}
    _assert_same_coupled_residual(f, x, y, v_failed)
    x.update(shared)
    y.update(shared)
    # independent draws on the failed regions
    failed_open = sorted(v_failed - v_set)
    if failed_open:
        x_pin = {v: b for v, b in x.items() if v in v_set}
        y_pin = {v: b for v, b in y.items() if v in v_set}
        x.update(sample_conditional(f, x_pin, failed_open, rng, cap=cap))
        y.update(sample_conditional(f, y_pin, failed_open, rng, cap=cap))

    x_full = tuple(x[v] for v in range(1, f.n + 1))
    y_full = tuple(y[v] for v in range(1, f.n + 1))
    trace = CouplingTrace(
        v_set=frozenset(v_set),
        v_failed=frozenset(v_failed),
        v_coupled=frozenset(v_coupled),
        e_failed=frozenset(e_failed),
        e_failed_dagger=frozenset(e_dagger),
        e_failed_ddagger=frozenset(e_ddagger),
        x=x_full,
        y=y_full,
        r_records=tuple(records),
        v0=v0,
    )
    verify_coupling_trace(f, cl, trace, k_c, frozenset(lam_dom))
    return trace


def _assert_same_coupled_residual(f, x, y, v_failed):
    """The residual clauses living entirely on coupled variables must agree
    under the X and Y pinnings, so one shared draw serves both."""
    for cid in range(f.m):
        vs = f.clause_vars(cid)
        if vs & v_failed:
            continue
        if _satisfied_by(f, x, cid) != _satisfied_by(f, y, cid):
            raise AssertionError(
                f"coupled-region clause {cid} differs between the two copies"
            )


def verify_coupling_trace(
    f: Formula, cl: Classification, trace: CouplingTrace, k_c: int, lam_dom
) -> None:
    """Runtime validation of the coupling's structural guarantees."""
    x_set = {v: trace.x[v - 1] for v in trace.v_set}
    y_set = {v: trace.y[v - 1] for v in trace.v_set}

    # loop exit condition: no unsatisfied clause has both a failed variable
    # and an uncoupled good variable left
    for cid in range(f.m):
        if _satisfied_by(f, x_set, cid) and _satisfied_by(f, y_set, cid):
            continue
        vs = f.clause_vars(cid)
        if vs & trace.v_failed:
            open_good = (vs & cl.v_good) - trace.v_set - trace.v_failed
            if open_good:
                raise AssertionError(f"exit condition violated at clause {cid}")

    # clause trichotomy
    for cid in range(f.m):
        if _satisfied_by(f, x_set, cid) and _satisfied_by(f, y_set, cid):
            continue
        vs = f.clause_vars(cid)
        in_coupled = vs <= trace.v_set | trace.v_coupled
        in_failed = vs <= trace.v_set | trace.v_failed
        if not (in_coupled or in_failed):
            raise AssertionError(f"clause {cid} split between coupled and failed")

    # every failed variable (except the seeded v0) sits in a failed clause;
    # failed good variables sit in a primary failed clause
    e_all = trace.e_failed | trace.e_failed_dagger | trace.e_failed_ddagger
    covered = {v for c in e_all for v in f.clause_vars(c)}
    covered_primary = {v for c in trace.e_failed for v in f.clause_vars(c)}
    for v in trace.v_failed - {trace.v0}:
        if v not in covered:
            raise AssertionError(f"failed variable {v} in no failed clause")
        if v in cl.v_good and v not in covered_primary:
            raise AssertionError(f"failed good variable {v} not explained")

    # failed clause connectivity at distance <= 2 in the full clause graph
    near = trace.e_failed | trace.e_failed_ddagger
    if len(near) > 1:
        parts = clause_graph_components(f, "shared-any-var", 2, vertices=near)
        if len(parts) != 1:
            raise AssertionError("primary failed clauses not 2-step connected")

    # agreement on the coupled region
    for v in trace.v_coupled:
        if trace.x[v - 1] != trace.y[v - 1]:
            raise AssertionError(f"coupled variable {v} disagrees")

    for out in (trace.x, trace.y):
        if not is_satisfying(f, out):
            raise AssertionError("coupling output does not satisfy the formula")


def r_window_violations(trace: CouplingTrace, s: float):
    """Reveals with r outside [1/2 - 1/s, 1/2 + 1/s] whose copies still
    disagreed. Empty whenever the local-uniformity precondition
    2^(k_u - k_c) >= 2*e*Delta*s holds for the instance."""
    lo, hi = 0.5 - 1.0 / s, 0.5 + 1.0 / s
    return [
        (u, r) for (u, r, xu, yu) in trace.r_records if (r < lo or r > hi) and xu != yu
    ]


@dataclass(frozen=True)
class InfluenceMatrix:
    pinning: tuple  # sorted (var, value) pairs
    order: tuple  # row/column variable of each index
    exact: tuple  # tuple of tuples of Fractions
    matrix: np.ndarray
    max_eigenvalue: float
    flagged: tuple  # rows zeroed because one branch was infeasible

    def entry(self, u: int, v: int) -> Fraction:
        return self.exact[self.order.index(u)][self.order.index(v)]

    def to_json(self) -> dict:
        return {
            "schema": "ksat/influence/v1",
            "pinning": {str(v): b for v, b in self.pinning},
            "order": list(self.order),
            "matrix": [[float(e) for e in row] for row in self.exact],
            "max_eigenvalue": self.max_eigenvalue,
            "flagged": list(self.flagged),
        }


def exact_influence_matrix(
    f: Formula, m: Marking, lambda_pin, cap: int = 26
) -> InfluenceMatrix:
    """Pairwise influences between free marked variables, by enumeration.

    Entry (u, v) is mu(v=1 | u=0, pin) - mu(v=1 | u=1, pin). Rows whose
    conditioning is one-sided (u frozen under the pinning) are zeroed and
    flagged. The maximum eigenvalue comes from shifted power iteration at
    relative tolerance 1e-9.
    """
    if not set(lambda_pin) <= m.marked:
        raise UsageError("pinning domain must be a subset of the marked set")
    sols = enumerate_solutions(f, cap=cap)
    sols = [
        s for s in sols if all(s[v - 1] == b for v, b in lambda_pin.items())
    ]
    if not sols:
        raise InfeasiblePinningError("pinning admits no solutions")
    order = tuple(sorted(m.marked - set(lambda_pin)))
    size = len(order)
    exact = [[Fraction(0)] * size for _ in range(size)]
    flagged = []
    for i, u in enumerate(order):
        s0 = [s for s in sols if s[u - 1] == 0]
        s1 = [s for s in sols if s[u - 1] == 1]
        if not s0 or not s1:
            flagged.append(u)
            continue
        for j, v in enumerate(order):
            if v == u:
                continue
            p0 = Fraction(sum(s[v - 1] for s in s0), len(s0))
            p1 = Fraction(sum(s[v - 1] for s in s1), len(s1))
            exact[i][j] = p0 - p1
    matrix = np.array([[float(e) for e in row] for row in exact], dtype=float)
    return InfluenceMatrix(
        pinning=tuple(sorted(lambda_pin.items())),
        order=order,
        exact=tuple(tuple(row) for row in exact),
        matrix=matrix,
        max_eigenvalue=_max_eigenvalue(matrix),
        flagged=tuple(flagged),
    )


def _max_eigenvalue(mat: np.ndarray, tol: float = 1e-9, max_iter: int = 200_000) -> float:
    """Largest eigenvalue via power iteration on a positive shift."""
    n = mat.shape[0]
    if n == 0:
        return 0.0
    shift = 1.0 + float(np.abs(mat).sum(axis=1).max())
    a = mat + shift * np.eye(n)
    x = np.ones(n) / math.sqrt(n)
    lam_old = None
    for _ in range(max_iter):
        y = a @ x
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            return -shift
        x = y / norm
        lam = float(x @ (a @ x))
        if lam_old is not None and abs(lam - lam_old) <= tol * max(1.0, abs(lam)):
            return lam - shift
        lam_old = lam
    raise ArithmeticError("power iteration did not converge")


@dataclass(frozen=True)
class CouplingEstimate:
    v0: int
    trials: int
    rates: dict  # marked variable -> estimated disagreement probability
    rate_stderr: dict
    total: float  # mean disagreement count over marked variables != v0
    total_stderr: float
    e_failed_mean: float
    e_failed_stderr: float


def coupling_influence_bound(
    f: Formula,
    cl: Classification,
    m: Marking,
    lambda_pin,
    v0: int,
    k_c: int,
    trials: int,
    seed=0,
    cap: int = DEFAULT_CAP,
) -> CouplingEstimate:
    """Monte Carlo disagreement rates of the coupling, which upper-bound the
    row sums of the influence matrix."""
    if trials < 1:
        raise UsageError("trials must be >= 1")
    master = as_rng(seed)
    targets = sorted(m.marked - set(lambda_pin) - {v0})
    diff_counts = {v: 0 for v in targets}
    totals = []
    e_sizes = []
    for _ in range(trials):
        trace = run_coupling(
            f, cl, m, lambda_pin, v0, k_c, seed=make_rng(spawn_seed(master)), cap=cap
        )
        t = 0
        for v in targets:
            if trace.x[v - 1] != trace.y[v - 1]:
                diff_counts[v] += 1
                t += 1
        totals.append(t)
        e_sizes.append(len(trace.e_failed))
    rates = {v: c / trials for v, c in diff_counts.items()}
    stderr = {
        v: math.sqrt(max(r * (1 - r), 1e-12) / trials) for v, r in rates.items()
    }
    return CouplingEstimate(
        v0=v0,
        trials=trials,
        rates=rates,
        rate_stderr=stderr,
        total=_mean(totals),
        total_stderr=_sem(totals),
        e_failed_mean=_mean(e_sizes),
        e_failed_stderr=_sem(e_sizes),
    )


def _mean(xs) -> float:
    return sum(xs) / len(xs)


def _sem(xs) -> float:
    n = len(xs)
    if n < 2:
        return 0.0
    mu = _mean(xs)
    var = sum((v - mu) ** 2 for v in xs) / (n - 1)
    return math.sqrt(var / n)
