"""CNF data model: DIMACS I/O, random instances, simplification, graph views.

Variables are 1-based. Assignments come in two public flavors:

* ``Assignment``: a tuple of 0/1 ints of length n, variable i at index i-1.
* ``PartialAssignment``: a dict mapping a subset of variables to 0/1.

Internally variable sets and assignments are also handled as Python int
bitmasks with variable v at bit v-1; the helpers at the bottom convert.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import CapExceededError, UsageError
from .rng import as_rng, rand_bit, sample_without_replacement

Assignment = tuple  # tuple[int, ...] of 0/1, length n
PartialAssignment = Mapping  # Mapping[int, int], values in {0, 1}

DEFAULT_ENUM_CAP = 26  # max variable count for full enumeration

_ENUM_CHUNK = 1 << 20


class Literal(NamedTuple):
    """A signed variable occurrence; sign=True means the positive literal."""

    var: int
    sign: bool

    @classmethod
    def from_int(cls, lit: int) -> "Literal":
        if lit == 0:
            raise UsageError("literal 0 is reserved as the DIMACS terminator")
        return cls(abs(lit), lit > 0)

    def to_int(self) -> int:
        return self.var if self.sign else -self.var

    def negated(self) -> "Literal":
        return Literal(self.var, not self.sign)


@dataclass(frozen=True)
class Formula:
    """Immutable CNF: n variables, clauses as tuples of Literals.

    Invariants (checked on construction): every clause nonempty, no clause
    repeats a variable, every variable index in [1, n]. Repeated clauses are
    allowed; variable degree counts occurrences with multiplicity.
    """

    n: int
    clauses: tuple

    def __post_init__(self):
        if self.n < 0:
            raise UsageError(f"variable count must be >= 0, got {self.n}")
        for cid, clause in enumerate(self.clauses):
            if not clause:
                raise UsageError(f"clause {cid} is empty")
            seen = set()
            for lit in clause:
                if not 1 <= lit.var <= self.n:
                    raise UsageError(
                        f"clause {cid}: variable {lit.var} out of range [1, {self.n}]"
                    )
                if lit.var in seen:
                    raise UsageError(f"clause {cid}: duplicate variable {lit.var}")
                seen.add(lit.var)

    @classmethod
    def from_ints(cls, n: int, clauses: Iterable[Iterable[int]]) -> "Formula":
        """Build from signed-int clauses, e.g. ``Formula.from_ints(3, [[1, -2]])``."""
        return cls(n, tuple(tuple(Literal.from_int(l) for l in c) for c in clauses))

    @property
    def m(self) -> int:
        return len(self.clauses)

    @cached_property
    def occ(self) -> tuple:
        """Per-variable tuple of (clause id, position) occurrences."""
        occ = [[] for _ in range(self.n + 1)]
        for cid, clause in enumerate(self.clauses):
            for pos, lit in enumerate(clause):
                occ[lit.var].append((cid, pos))
        return tuple(tuple(entries) for entries in occ)

    def degree(self, v: int) -> int:
        return len(self.occ[v])

    def clause_vars(self, cid: int) -> frozenset:
        return frozenset(lit.var for lit in self.clauses[cid])

    @cached_property
    def _clause_masks(self) -> tuple:
        """(pos_mask, neg_mask) int bitmask pair per clause, bit v-1 for var v."""
        masks = []
        for clause in self.clauses:
            pos = neg = 0
            for lit in clause:
                bit = 1 << (lit.var - 1)
                if lit.sign:
                    pos |= bit
                else:
                    neg |= bit
            masks.append((pos, neg))
        return tuple(masks)

    @cached_property
    def _var_clauses(self) -> tuple:
        """Per-variable tuple of clause ids (deduplicated, ascending)."""
        return tuple(
            tuple(sorted({cid for cid, _ in entries})) for entries in self.occ
        )


def parse_dimacs(text) -> Formula:
    """Parse a DIMACS CNF document (str or bytes).

    Comment lines start with 'c'; the header is ``p cnf n m``; clauses are
    zero-terminated literal sequences and may span lines. Exactly m clauses
    are required.
    """
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("ascii")
    n = m = None
    tokens: list[str] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            if n is not None:
                raise UsageError("duplicate DIMACS header")
            parts = line.split()
            if len(parts) != 4 or parts[0] != "p" or parts[1] != "cnf":
                raise UsageError(f"malformed DIMACS header: {line!r}")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError as exc:
                raise UsageError(f"malformed DIMACS header: {line!r}") from exc
            if n < 0 or m < 0:
                raise UsageError(f"malformed DIMACS header: {line!r}")
            continue
        tokens.extend(line.split())
    if n is None:
        raise UsageError("missing DIMACS header 'p cnf n m'")

    clauses = []
    current: list[int] = []
    for tok in tokens:
        try:
            lit = int(tok)
        except ValueError as exc:
            raise UsageError(f"bad literal token {tok!r}") from exc
        if lit == 0:
            if not current:
                raise UsageError(f"empty clause at clause {len(clauses)}")
            clauses.append(current)
            current = []
            continue
        if not 1 <= abs(lit) <= n:
            raise UsageError(f"literal {lit} out of range for n={n}")
        current.append(lit)
    if current:
        raise UsageError("unterminated final clause (missing 0)")
    if len(clauses) != m:
        raise UsageError(f"header declares {m} clauses, found {len(clauses)}")
    return Formula.from_ints(n, clauses)


def emit_dimacs(f: Formula) -> str:
    """Canonical DIMACS text: header plus one zero-terminated line per clause,
    literal order preserved."""
    lines = [f"p cnf {f.n} {f.m}"]
    for clause in f.clauses:
        lines.append(" ".join(str(lit.to_int()) for lit in clause) + " 0")
    return "\n".join(lines) + "\n"


def generate_random_kcnf(n: int, m: int, k: int, seed) -> Formula:
    """m i.i.d. clauses: k distinct variables uniform without replacement,
    each polarity an independent fair coin. Repeated clauses are allowed.

    Deterministic given the seed; variables within a clause are sorted and
    signs are drawn in sorted-variable order.
    """
    if k > n:
        raise UsageError(f"clause width k={k} exceeds variable count n={n}")
    if k < 1 and m > 0:
        raise UsageError("clause width must be >= 1")
    rng = as_rng(seed)
    clauses = []
    for _ in range(m):
        vs = sorted(sample_without_replacement(rng, n, k))
        clauses.append(tuple(Literal(v, bool(rand_bit(rng))) for v in vs))
    return Formula(n, tuple(clauses))


@dataclass(frozen=True)
class SimplifyOutcome:
    """Result of simplifying under a partial assignment.

    ``clause_ids[i]`` is the id in the original formula of clause i of
    ``formula``. On status 'falsified', ``falsified_clause`` is the original
    id of a clause whose literals are all false under the assignment, and
    ``formula`` covers only the clauses processed before it.
    """

    formula: Formula
    status: str  # 'ok' | 'falsified'
    clause_ids: tuple
    falsified_clause: int | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def simplify(f: Formula, x: PartialAssignment) -> SimplifyOutcome:
    """Remove clauses satisfied by x and delete assigned variables elsewhere.

    A clause with every literal falsified yields status 'falsified' (not an
    exception): infeasible pinnings must be detectable, not fatal.
    """
    _check_partial(f, x)
    new_clauses = []
    clause_ids = []
    for cid, clause in enumerate(f.clauses):
        residual = []
        satisfied = False
        for lit in clause:
            val = x.get(lit.var)
            if val is None:
                residual.append(lit)
            elif (val == 1) == lit.sign:
                satisfied = True
                break
        if satisfied:
            continue
        if not residual:
            return SimplifyOutcome(
                formula=Formula(f.n, tuple(new_clauses)),
                status="falsified",
                clause_ids=tuple(clause_ids),
                falsified_clause=cid,
            )
        new_clauses.append(tuple(residual))
        clause_ids.append(cid)
    return SimplifyOutcome(
        formula=Formula(f.n, tuple(new_clauses)),
        status="ok",
        clause_ids=tuple(clause_ids),
    )


def connected_component(f: Formula, v: int):
    """Maximal variable set reachable from v via shared clauses, plus every
    clause touching that set. An isolated variable yields ({v}, set())."""
    if not 1 <= v <= f.n:
        raise UsageError(f"variable {v} out of range [1, {f.n}]")
    seen_vars = {v}
    seen_clauses = set()
    queue = deque([v])
    while queue:
        u = queue.popleft()
        for cid in f._var_clauses[u]:
            if cid in seen_clauses:
                continue
            seen_clauses.add(cid)
            for lit in f.clauses[cid]:
                if lit.var not in seen_vars:
                    seen_vars.add(lit.var)
                    queue.append(lit.var)
    return seen_vars, seen_clauses


def clause_graph_components(
    f: Formula,
    adjacency: str = "shared-any-var",
    power: int = 1,
    classification=None,
    vertices=None,
):
    """Partition clause ids into components of the chosen clause graph.

    adjacency: 'shared-any-var' (all clauses), 'shared-good-var' (good
    clauses, edges via good variables), 'shared-bad-var' (bad clauses).
    Two vertices are joined when their distance in the *base* graph of the
    chosen adjacency is <= power; distances are measured in the full base
    graph even when `vertices` restricts the vertex set.
    """
    if power < 1:
        raise UsageError(f"power must be >= 1, got {power}")
    if adjacency == "shared-any-var":
        base_vertices = set(range(f.m))
        var_filter = None
    elif adjacency in ("shared-good-var", "shared-bad-var"):
        if classification is None:
            raise UsageError(f"adjacency {adjacency!r} requires a classification")
        if adjacency == "shared-good-var":
            base_vertices = set(classification.c_good)
            var_filter = classification.v_good
        else:
            base_vertices = set(classification.c_bad)
            var_filter = classification.v_bad
    else:
        raise UsageError(f"unknown adjacency mode {adjacency!r}")

    if vertices is None:
        vertices = base_vertices
    else:
        vertices = set(vertices)
        if not vertices <= base_vertices:
            raise UsageError("vertices outside the base graph's vertex set")

    neighbors = _clause_adjacency(f, base_vertices, var_filter)

    parent = {c: c for c in vertices}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    vertex_list = sorted(vertices)
    for c in vertex_list:
        # BFS in the base graph out to distance `power`
        dist = {c: 0}
        frontier = deque([c])
        while frontier:
            u = frontier.popleft()
            if dist[u] == power:
                continue
            for w in neighbors[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    frontier.append(w)
        for w in dist:
            if w != c and w in parent:
                ra, rb = find(c), find(w)
                if ra != rb:
                    parent[rb] = ra

    groups = {}
    for c in vertex_list:
        groups.setdefault(find(c), set()).add(c)
    return sorted(groups.values(), key=lambda s: min(s))


def _clause_adjacency(f: Formula, vertex_set, var_filter):
    """Adjacency lists for the clause graph on vertex_set, joining clauses
    that share a variable (restricted to var_filter when given)."""
    by_var = {}
    for cid in vertex_set:
        for lit in f.clauses[cid]:
            if var_filter is not None and lit.var not in var_filter:
                continue
            by_var.setdefault(lit.var, []).append(cid)
    neighbors = {cid: set() for cid in vertex_set}
    for cids in by_var.values():
        for i, a in enumerate(cids):
            for b in cids[i + 1 :]:
                if a != b:
                    neighbors[a].add(b)
                    neighbors[b].add(a)
    return neighbors


def enumerate_solutions(f: Formula, cap: int = DEFAULT_ENUM_CAP) -> list:
    """All satisfying assignments, in lexicographic order of the assignment
    tuple (variable 1 most significant). Brute force over all 2^n points;
    this is the reference oracle for everything else in the package."""
    if f.n > cap:
        raise CapExceededError(
            f"enumeration over n={f.n} variables exceeds cap {cap}", size=f.n
        )
    n = f.n
    total = 1 << n
    # In the integer encoding below, variable v sits at bit n-v, so ascending
    # integers yield ascending assignment tuples.
    pos_list = []
    neg_list = []
    for clause in f.clauses:
        pos = neg = 0
        for lit in clause:
            bit = 1 << (n - lit.var)
            if lit.sign:
                pos |= bit
            else:
                neg |= bit
        pos_list.append(pos)
        neg_list.append(neg)

    out = []
    for start in range(0, total, _ENUM_CHUNK):
        stop = min(start + _ENUM_CHUNK, total)
        arr = np.arange(start, stop, dtype=np.uint64)
        ok = np.ones(stop - start, dtype=bool)
        for pos, neg in zip(pos_list, neg_list):
            sat = (arr & np.uint64(pos)) != 0
            if neg:
                sat |= (~arr & np.uint64(neg)) != 0
            ok &= sat
            if not ok.any():
                break
        for a in arr[ok]:
            a = int(a)
            out.append(tuple((a >> (n - v)) & 1 for v in range(1, n + 1)))
    return out


def is_satisfying(f: Formula, a: Assignment) -> bool:
    if len(a) != f.n:
        raise UsageError(f"assignment length {len(a)} != n={f.n}")
    mask = assignment_to_mask(a)
    for pos, neg in f._clause_masks:
        if not (mask & pos) and not (neg & ~mask):
            return False
    return True


def hamming(a: Assignment, b: Assignment) -> int:
    if len(a) != len(b):
        raise UsageError("assignments of different lengths")
    return sum(x != y for x, y in zip(a, b))


def assignment_to_mask(a: Assignment) -> int:
    """Bitmask with variable v at bit v-1."""
    mask = 0
    for i, bit in enumerate(a):
        if bit:
            mask |= 1 << i
    return mask


def mask_to_assignment(mask: int, n: int) -> Assignment:
    return tuple((mask >> i) & 1 for i in range(n))


def _check_partial(f: Formula, x: PartialAssignment) -> None:
    for v, val in x.items():
        if not 1 <= v <= f.n:
            raise UsageError(f"assigned variable {v} out of range [1, {f.n}]")
        if val not in (0, 1):
            raise UsageError(f"assignment value for {v} must be 0/1, got {val!r}")
