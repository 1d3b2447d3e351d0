"""DAGs, d-separation, and the latent/observation templates GM1-GM3.

Node names are fixed: ``F0`` (prior), ``F1``..``Fn`` (latent), ``xi1``..``xin``
(observations) and ``xip1``..``xipn`` (decoupled tangent copies).
"""
from __future__ import annotations

import itertools
import re
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

FAMILIES = ("gm1", "gm2", "gm3")

_KIND_PATTERNS = (
    (re.compile(r"^F0$"), "prior"),
    (re.compile(r"^F\d+$"), "latent"),
    (re.compile(r"^xip\d+$"), "tangent"),
    (re.compile(r"^xi\d+$"), "observation"),
)


class GraphError(ValueError):
    """Malformed graph, query, or index map."""


def node_kind(name: str) -> str:
    for pattern, kind in _KIND_PATTERNS:
        if pattern.match(name):
            return kind
    return "other"


def _index(name: str) -> int:
    return int(re.search(r"\d+$", name).group())


class Dag:
    """Immutable directed acyclic graph.

    Construction validates acyclicity; a topological order is stored in
    ``order``.
    """

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]]):
        nodes = list(nodes)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node identifiers")
        self.nodes = tuple(nodes)
        self.kinds = {v: node_kind(v) for v in nodes}
        self._parents = {v: set() for v in nodes}
        self._children = {v: set() for v in nodes}
        edge_list = []
        for a, b in edges:
            for v in (a, b):
                if v not in self._parents:
                    raise GraphError(f"edge refers to unknown node {v!r}")
            if a == b:
                raise GraphError(f"self loop on {a!r}")
            if b not in self._children[a]:
                self._children[a].add(b)
                self._parents[b].add(a)
                edge_list.append((a, b))
        self.edges = tuple(edge_list)
        self.order = self._toposort()

    def _toposort(self) -> tuple[str, ...]:
        indeg = {v: len(self._parents[v]) for v in self.nodes}
        queue = deque(v for v in self.nodes if indeg[v] == 0)
        out = []
        while queue:
            v = queue.popleft()
            out.append(v)
            for c in sorted(self._children[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(out) != len(self.nodes):
            raise GraphError("edge relation contains a cycle")
        return tuple(out)

    def parents(self, v: str) -> frozenset[str]:
        return frozenset(self._parents[v])

    def children(self, v: str) -> frozenset[str]:
        return frozenset(self._children[v])

    def ancestors_of(self, vs: Iterable[str]) -> set[str]:
        """The given nodes together with all their ancestors."""
        seen = set()
        stack = list(vs)
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            stack.extend(self._parents[v])
        return seen

    def __contains__(self, v) -> bool:
        return v in self._parents

    def __repr__(self) -> str:
        return f"Dag({len(self.nodes)} nodes, {len(self.edges)} edges)"

    def to_text(self) -> str:
        lines = [f"{a} -> {b}" for a, b in self.edges]
        isolated = [v for v in self.nodes if not self._parents[v] and not self._children[v]]
        return "\n".join(lines + isolated) + "\n"


def parse_dag(text: str) -> Dag:
    """Read the ``parent -> child`` line format; ``#`` starts a comment.

    A line holding a single name declares an isolated node.
    """
    nodes: dict[str, None] = {}
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" in line:
            parts = [p.strip() for p in line.split("->")]
            if len(parts) != 2 or not all(parts):
                raise GraphError(f"line {lineno}: expected 'parent -> child'")
            nodes.setdefault(parts[0])
            nodes.setdefault(parts[1])
            edges.append((parts[0], parts[1]))
        elif re.fullmatch(r"\S+", line):
            nodes.setdefault(line)
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    return Dag(nodes, edges)


@dataclass(frozen=True)
class CiQuery:
    x: frozenset[str]
    y: frozenset[str]
    z: frozenset[str] = frozenset()

    def __post_init__(self):
        for name in ("x", "y", "z"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))

    def __str__(self) -> str:
        fmt = lambda s: ",".join(sorted(s, key=_sort_key))
        return f"{fmt(self.x)} ; {fmt(self.y)} | {fmt(self.z)}"


def _sort_key(v: str):
    m = re.match(r"^(\D*)(\d*)$", v)
    return (m.group(1), int(m.group(2)) if m.group(2) else -1) if m else (v, -1)


def parse_query(text: str) -> CiQuery:
    """Parse ``"X ; Y | Z"`` with comma-separated node lists (Z may be empty)."""
    if ";" not in text:
        raise GraphError(f"query {text!r} lacks ';'")
    left, rest = text.split(";", 1)
    right, _, cond = rest.partition("|")

    def names(part):
        return frozenset(p.strip() for p in part.split(",") if p.strip())

    return CiQuery(names(left), names(right), names(cond))


def _check_query(dag: Dag, q: CiQuery) -> None:
    if not q.x or not q.y:
        raise GraphError("x and y must be non-empty")
    for v in q.x | q.y | q.z:
        if v not in dag:
            raise GraphError(f"unknown node {v!r}")
    if q.x & q.y or q.x & q.z or q.y & q.z:
        raise GraphError("x, y, z must be pairwise disjoint")


def d_separated(dag: Dag, q: CiQuery) -> bool:
    """True iff ``q.z`` d-separates ``q.x`` from ``q.y`` in ``dag``.

    Reachability over (node, direction) states: a trail may pass a collider
    only if the collider has a descendant in z, and may not pass an
    observed non-collider. Linear in nodes plus edges.
    """
    _check_query(dag, q)
    z = q.z
    # colliders are open iff they are ancestors of z (or in z)
    open_colliders = dag.ancestors_of(z)
    up, down = 0, 1
    seen = set()
    queue = deque((x, up) for x in q.x)
    while queue:
        v, direction = queue.popleft()
        if (v, direction) in seen:
            continue
        seen.add((v, direction))
        if v not in z and v in q.y:
            return False
        if direction == up:
            # arrived from a child: v is a non-collider on the trail
            if v not in z:
                queue.extend((p, up) for p in dag._parents[v])
                queue.extend((c, down) for c in dag._children[v])
        else:
            # arrived from a parent
            if v not in z:
                queue.extend((c, down) for c in dag._children[v])
            if v in open_colliders:
                queue.extend((p, up) for p in dag._parents[v])
    return True


def _f(i: int) -> str:
    return f"F{i}"


def _xi(i: int) -> str:
    return f"xi{i}"


def _xip(i: int) -> str:
    return f"xip{i}"


def has_prior(family: str) -> bool:
    return family in ("gm1", "gm3")


def build_gm_template(family: str, n: int, with_tangent: bool = False) -> Dag:
    """DAG of GM1, GM2 or GM3 with every history edge drawn explicitly.

    GM1: F_{0:i-1} -> F_i and F_{0:i-1} -> xi_i.
    GM2: F_{1:i-1} -> F_i and F_{1:i} -> xi_i (no prior).
    GM3: F_{0:i-1} -> F_i, F_{0:i-1} -> xi_i and xi_i -> F_i.
    Tangent nodes get the parents of xi_i for GM1/GM2 and F_{0:i} for GM3,
    whose tangent is drawn from the posterior given F_{0:i}.
    """
    family = family.lower()
    if family not in FAMILIES:
        raise GraphError(f"unknown family {family!r}")
    if n < 1:
        raise GraphError("n must be >= 1")
    first = 0 if has_prior(family) else 1
    lat = [_f(i) for i in range(first, n + 1)]
    obs = [_xi(i) for i in range(1, n + 1)]
    nodes = lat + obs
    edges = []
    for i in range(1, n + 1):
        for j in range(first, i):
            edges.append((_f(j), _f(i)))
        last = i if family == "gm2" else i - 1
        for j in range(first, last + 1):
            edges.append((_f(j), _xi(i)))
        if family == "gm3":
            edges.append((_xi(i), _f(i)))
    if with_tangent:
        for i in range(1, n + 1):
            nodes.append(_xip(i))
            last = i - 1 if family == "gm1" else i
            for j in range(first, last + 1):
                edges.append((_f(j), _xip(i)))
    return Dag(nodes, edges)


def _observation_indices(dag: Dag) -> list[int]:
    return sorted(_index(v) for v in dag.nodes if dag.kinds[v] == "observation")


def _latent_indices(dag: Dag) -> list[int]:
    return sorted(_index(v) for v in dag.nodes if dag.kinds[v] == "latent")


def resolve_varrho(varrho, n: int) -> list[int]:
    """Index map as a list ``[varrho(1), ..., varrho(n)]``.

    Accepts a callable, a sequence, or the names ``"shift0"`` (i -> i) and
    ``"shift1"`` (i -> i - 1).
    """
    if isinstance(varrho, str):
        shift = {"shift0": 0, "shift1": 1}.get(varrho)
        if shift is None:
            raise GraphError(f"unknown index map {varrho!r}")
        values = [i - shift for i in range(1, n + 1)]
    elif callable(varrho):
        values = [int(varrho(i)) for i in range(1, n + 1)]
    else:
        values = [int(v) for v in varrho]
    if len(values) != n:
        raise GraphError(f"index map has {len(values)} entries, expected {n}")
    for i, r in enumerate(values, 1):
        if r < 0 or r > i:
            raise GraphError(f"varrho({i}) = {r} outside [0, {i}]")
        if i > 1 and r < values[i - 2]:
            raise GraphError("varrho must be non-decreasing")
    return values


@dataclass
class CiCheck:
    query: CiQuery
    claim: str
    separated: bool


@dataclass
class Sp2Report:
    checks: list[CiCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.separated for c in self.checks)

    @property
    def failures(self) -> list[CiCheck]:
        return [c for c in self.checks if not c.separated]

    def to_records(self) -> list[dict]:
        return [
            {"query": str(c.query), "claim": c.claim, "separated": c.separated}
            for c in self.checks
        ]


def _conditioning(dag: Dag, upto: int) -> frozenset[str]:
    # the prior F0, when present, is always conditioned on
    z = {_f(k) for k in _latent_indices(dag) if k <= upto}
    if "F0" in dag:
        z.add("F0")
    return frozenset(z)


def verify_sp2(dag: Dag, varrho) -> Sp2Report:
    """Check both latent-history conditional-independence clauses by d-separation.

    For every i: xi_i _|_ xi_j | F_{0:varrho(i)} for j < i, and
    xi_i _|_ F_k | F_{0:varrho(i)} for k > varrho(i).
    """
    obs = _observation_indices(dag)
    n = len(obs)
    if obs != list(range(1, n + 1)):
        raise GraphError("observation nodes must be xi1..xin")
    rho = resolve_varrho(varrho, n)
    latents = _latent_indices(dag)
    report = Sp2Report()
    for i in obs:
        z = _conditioning(dag, rho[i - 1])
        for j in range(1, i):
            q = CiQuery({_xi(i)}, {_xi(j)}, z)
            report.checks.append(CiCheck(q, "obs-obs", d_separated(dag, q)))
        for k in latents:
            if k > rho[i - 1]:
                q = CiQuery({_xi(i)}, {_f(k)}, z)
                report.checks.append(CiCheck(q, "obs-future-latent", d_separated(dag, q)))
    return report


def verify_dts(dag: Dag) -> Sp2Report:
    """Check xi_i _|_ xi'_i | F_{0:i} for every tangent node present."""
    report = Sp2Report()
    for i in _observation_indices(dag):
        if _xip(i) not in dag:
            continue
        q = CiQuery({_xi(i)}, {_xip(i)}, _conditioning(dag, i))
        report.checks.append(CiCheck(q, "dts-1", d_separated(dag, q)))
    return report


def random_binary_cpts(dag: Dag, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """A table P(v = 1 | parents) per node, indexed by the parents' bits.

    Parents are ordered by ``sorted(dag.parents(v))``.
    """
    return {
        v: rng.uniform(0.05, 0.95, size=(2,) * len(dag.parents(v)))
        for v in dag.nodes
    }


def joint_table(dag: Dag, cpts: dict[str, np.ndarray]) -> np.ndarray:
    """Full joint over binary nodes; axis order follows ``dag.nodes``."""
    pos = {v: a for a, v in enumerate(dag.nodes)}
    k = len(dag.nodes)
    joint = np.ones((2,) * k)
    grid = np.indices((2,) * k)
    for v in dag.nodes:
        pa = sorted(dag.parents(v))
        p1 = cpts[v][tuple(grid[pos[u]] for u in pa)] if pa else np.full((2,) * k, float(cpts[v]))
        joint = joint * np.where(grid[pos[v]] == 1, p1, 1.0 - p1)
    return joint


def _conditional(joint: np.ndarray, target: Sequence[int], given: Sequence[int]) -> np.ndarray:
    """P(target | given) broadcast to the full joint shape."""
    k = joint.ndim
    keep_num = set(target) | set(given)
    num = joint.sum(axis=tuple(a for a in range(k) if a not in keep_num), keepdims=True)
    den = joint.sum(axis=tuple(a for a in range(k) if a not in set(given)), keepdims=True)
    return np.broadcast_to(num / den, joint.shape)


def factorization_error(family: str, n: int, varrho, seed: int = 0) -> float:
    """Largest violation of P(xi | F) = prod_i P(xi_i | F_{0:varrho(i)}).

    Random binary CPTs respecting the template; both sides by exhaustive
    enumeration of the joint. The second identity, with every factor
    conditioned on all of F, is folded into the same maximum.
    """
    dag = build_gm_template(family, n)
    rho = resolve_varrho(varrho, n)
    rng = np.random.default_rng(seed)
    joint = joint_table(dag, random_binary_cpts(dag, rng))
    pos = {v: a for a, v in enumerate(dag.nodes)}
    f_axes = [pos[v] for v in dag.nodes if dag.kinds[v] in ("prior", "latent")]
    xi_axes = [pos[_xi(i)] for i in range(1, n + 1)]
    lhs = _conditional(joint, xi_axes, f_axes)
    prod_history = np.ones(joint.shape)
    prod_all = np.ones(joint.shape)
    for i in range(1, n + 1):
        z = [pos[v] for v in _conditioning(dag, rho[i - 1])]
        prod_history = prod_history * _conditional(joint, [pos[_xi(i)]], z)
        prod_all = prod_all * _conditional(joint, [pos[_xi(i)]], f_axes)
    return float(max(np.max(np.abs(lhs - prod_history)), np.max(np.abs(lhs - prod_all))))


def brute_force_d_separated(dag: Dag, q: CiQuery) -> bool:
    """Literal path-enumeration check of d-separation, for small graphs only."""
    _check_query(dag, q)
    nbrs = {v: dag._parents[v] | dag._children[v] for v in dag.nodes}
    desc_in_z = {}
    for v in dag.nodes:
        stack, seen = [v], set()
        while stack:
            u = stack.pop()
            if u in seen:
                continue
            seen.add(u)
            stack.extend(dag._children[u])
        desc_in_z[v] = bool(seen & q.z)

    def active(path):
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = a in dag._parents[b] and c in dag._parents[b]
            if collider and not desc_in_z[b]:
                return False
            if not collider and b in q.z:
                return False
        return True

    def walk(path):
        v = path[-1]
        if v in q.y:
            return active(path)
        for u in nbrs[v]:
            if u not in path and walk(path + [u]):
                return True
        return False

    return not any(walk([x]) for x in q.x)
