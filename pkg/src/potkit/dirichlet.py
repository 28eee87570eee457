"""Dirichlet problems and the quantities derived from them.

Sign conventions: ``L = D - C`` is the positive semidefinite Laplacian and
``Δ = -L``. A Green column ``g_A(·, y)`` solves ``L g = δ_y`` off ``A`` with
``g = 0`` on ``A``; the visit-count Green function is ``Gr_A(x, y) =
deg(y) g_A(x, y)``.
"""
from __future__ import annotations

import threading
import warnings
import weakref
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .errors import (MalformedNesting, NonConvergence, OverlappingSets, SameVertex,
                     SingularSystem, StartOutsideDomain, VertexInSet)
from .graph import Graph, glue, outer_boundary

DENSE_LIMIT = 2000
CLAMP_WARN = 1e-9


@dataclass(frozen=True)
class HarmonicField:
    values: np.ndarray
    domain_tag: int

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __getitem__(self, i):
        return self.values[i]

    def __len__(self) -> int:
        return len(self.values)


class ProbabilityTable:
    """Finite measure on an ordered vertex list, normalized to total mass 1."""

    def __init__(self, support: Sequence[int], masses, tol: float = 1e-12):
        support = tuple(int(s) for s in support)
        masses = np.asarray(masses, dtype=float)
        if len(set(support)) != len(support):
            raise ValueError("support vertices must be distinct")
        if masses.shape != (len(support),):
            raise ValueError("one mass per support vertex")
        if np.any(masses < 0):
            raise ValueError("masses must be nonnegative")
        total = masses.sum()
        if abs(total - 1.0) > tol:
            raise ValueError(f"masses sum to {total!r}, not 1")
        self.support = support
        self.masses = masses

    def __getitem__(self, v: int) -> float:
        return float(self.masses[self.support.index(int(v))])

    def get(self, v: int, default: float = 0.0) -> float:
        return self[v] if int(v) in self.support else default

    def as_dict(self) -> dict[int, float]:
        return {s: float(m) for s, m in zip(self.support, self.masses)}

    def __repr__(self) -> str:
        return f"ProbabilityTable({self.as_dict()})"


def clamp_probability(p, what: str = "probability"):
    """Clip to [0, 1]; warn when the correction is larger than round-off."""
    arr = np.asarray(p, dtype=float)
    clipped = np.clip(arr, 0.0, 1.0)
    excess = float(np.max(np.abs(clipped - arr))) if arr.size else 0.0
    if excess > CLAMP_WARN:
        warnings.warn(f"{what} clamped by {excess:.3g}", RuntimeWarning, stacklevel=2)
    return clipped if arr.ndim else float(clipped)


# ---------------------------------------------------------------- factorizations

class _Factor:
    """Factorization of ``L`` restricted to the vertices not in ``fixed``."""

    def __init__(self, g: Graph, fixed: tuple[int, ...], method: str):
        n = g.vertex_count
        if not fixed:
            raise SingularSystem("Dirichlet problem needs a nonempty boundary")
        mask = np.ones(n, dtype=bool)
        mask[list(fixed)] = False
        self.free = np.flatnonzero(mask)
        self.fixed = np.asarray(fixed, dtype=np.int64)
        self.pos = np.full(n, -1, dtype=np.int64)
        self.pos[self.free] = np.arange(len(self.free))
        L = g.laplacian_matrix
        self.L_ff = L[self.free][:, self.free].tocsc()
        self.C_fb = -L[self.free][:, self.fixed].tocsr()
        k = len(self.free)
        if method == "auto":
            method = "dense" if k <= DENSE_LIMIT else "direct"
        self.method = method
        if k == 0:
            return
        if method == "dense":
            try:
                self._chol = sla.cho_factor(self.L_ff.toarray(), lower=True, check_finite=False)
            except np.linalg.LinAlgError as exc:
                raise SingularSystem(str(exc)) from None
        elif method == "direct":
            try:
                self._lu = splu(self.L_ff, permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from None
        elif method == "cg":
            d = self.L_ff.diagonal()
            self._precond = sp.diags(1.0 / d)
        else:
            raise ValueError(f"unknown solver method {method!r}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if len(self.free) == 0:
            return np.zeros_like(rhs)
        if self.method == "dense":
            return sla.cho_solve(self._chol, rhs, check_finite=False)
        if self.method == "direct":
            return self._lu.solve(np.ascontiguousarray(rhs))
        return self._cg(rhs)

    def _cg(self, rhs: np.ndarray) -> np.ndarray:
        if rhs.ndim == 2:
            return np.column_stack([self._cg(rhs[:, j]) for j in range(rhs.shape[1])])
        k = len(self.free)
        x, info = cg(self.L_ff, rhs, rtol=1e-12, atol=0.0, maxiter=10 * k, M=self._precond)
        if info != 0:
            raise NonConvergence(f"conjugate gradient stopped with info={info}")
        return x


_factor_cache: "weakref.WeakKeyDictionary[Graph, OrderedDict]" = weakref.WeakKeyDictionary()
_column_cache: "weakref.WeakKeyDictionary[Graph, OrderedDict]" = weakref.WeakKeyDictionary()
_cache_lock = threading.RLock()
FACTOR_CACHE_SIZE = 6
COLUMN_CACHE_SIZE = 512


def _lru_get(store, g, key, build, size):
    with _cache_lock:
        table = store.get(g)
        if table is None:
            table = OrderedDict()
            store[g] = table
        hit = table.get(key)
        if hit is not None:
            table.move_to_end(key)
            return hit
    value = build()
    with _cache_lock:
        table[key] = value
        while len(table) > size:
            table.popitem(last=False)
    return value


def factor(g: Graph, fixed: Iterable[int], method: str = "auto") -> _Factor:
    key = (tuple(sorted({int(v) for v in fixed})), method)
    return _lru_get(_factor_cache, g, key, lambda: _Factor(g, key[0], method), FACTOR_CACHE_SIZE)


def clear_caches() -> None:
    with _cache_lock:
        _factor_cache.clear()
        _column_cache.clear()


def _solve_full(g: Graph, fixed: Sequence[int], fixed_values, source=None, method: str = "auto") -> np.ndarray:
    """Core solver: ``L u = source`` off ``fixed`` and ``u = fixed_values`` on it."""
    fixed = np.asarray(list(fixed), dtype=np.int64)
    f = factor(g, fixed.tolist(), method)
    u = np.zeros(g.vertex_count)
    u[fixed] = np.broadcast_to(np.asarray(fixed_values, dtype=float), fixed.shape)
    vals_sorted = u[f.fixed]
    rhs = f.C_fb @ vals_sorted if len(f.fixed) else np.zeros(len(f.free))
    if source is not None:
        rhs = rhs + np.asarray(source, dtype=float)[f.free]
    u[f.free] = f.solve(rhs)
    return u


def _check_residual(g: Graph, u: np.ndarray, free: np.ndarray, source: np.ndarray, f: _Factor) -> np.ndarray:
    tol = 1e-10 * (1.0 + float(np.max(np.abs(source))) if source.size else 1.0)
    r = (g.laplacian_matrix @ u)[free] - source[free]
    if r.size and np.max(np.abs(r)) > tol:
        u = u.copy()
        u[free] -= f.solve(r)  # one step of iterative refinement
        r = (g.laplacian_matrix @ u)[free] - source[free]
        if np.max(np.abs(r)) > tol:
            raise NonConvergence(f"Dirichlet residual {np.max(np.abs(r)):.3g} exceeds {tol:.3g}")
    return u


def solve_dirichlet(g: Graph, boundary: Mapping[int, float], source: Mapping[int, float] | None = None,
                    method: str = "auto") -> HarmonicField:
    """Solve ``Δu = -source`` off the boundary with ``u = boundary`` on it.

    Boundary values win where a vertex appears in both maps.
    """
    if not boundary:
        raise SingularSystem("boundary is empty")
    fixed = [int(k) for k in boundary]
    vals = [float(boundary[k]) for k in boundary]
    s = np.zeros(g.vertex_count)
    for k, v in (source or {}).items():
        s[int(k)] += float(v)
    s[fixed] = 0.0
    u = _solve_full(g, fixed, vals, s, method)
    f = factor(g, fixed, method)
    u = _check_residual(g, u, f.free, s, f)
    return HarmonicField(u, g.tag)


# ---------------------------------------------------------------- Green functions

def green_column(g: Graph, A: Iterable[int], y: int, method: str = "auto") -> np.ndarray:
    """``g_A(·, y)``; zero when ``y ∈ A``. Cached per ``(A, y)``; do not mutate."""
    A = tuple(sorted({int(a) for a in A}))
    y = int(y)

    def build():
        col = np.zeros(g.vertex_count)
        if y in A:
            col.setflags(write=False)
            return col
        f = factor(g, A, method)
        rhs = np.zeros(len(f.free))
        rhs[f.pos[y]] = 1.0
        col[f.free] = f.solve(rhs)
        col.setflags(write=False)
        return col

    return _lru_get(_column_cache, g, (A, y, method), build, COLUMN_CACHE_SIZE)


def green(g: Graph, A: Iterable[int], x: int, y: int) -> float:
    """Expected number of visits to ``y`` before hitting ``A``, from ``x``."""
    return float(g.degrees[y] * green_column(g, A, y)[x])


def green_matrix(g: Graph, A: Iterable[int], cols: Sequence[int], method: str = "auto") -> np.ndarray:
    """Columns ``g_A(·, y)`` for all ``y`` in ``cols`` (one batched solve)."""
    A = tuple(sorted({int(a) for a in A}))
    f = factor(g, A, method)
    out = np.zeros((g.vertex_count, len(cols)))
    live = [j for j, y in enumerate(cols) if int(y) not in A]
    if not live:
        return out
    rhs = np.zeros((len(f.free), len(live)))
    for k, j in enumerate(live):
        rhs[f.pos[int(cols[j])], k] = 1.0
    out[np.ix_(f.free, live)] = f.solve(rhs)
    return out


def grounded_diagonal(g: Graph, ground: Iterable[int], vids: Sequence[int], chunk: int = 64) -> np.ndarray:
    """``g_ground(v, v)`` for each ``v`` in ``vids``."""
    vids = [int(v) for v in vids]
    out = np.empty(len(vids))
    for s in range(0, len(vids), chunk):
        part = vids[s:s + chunk]
        m = green_matrix(g, ground, part)
        out[s:s + len(part)] = m[part, np.arange(len(part))]
    return out


# ---------------------------------------------------------------- hitting

def hitting_field(g: Graph, target: Iterable[int], taboo: Iterable[int]) -> np.ndarray:
    """``x -> P_x(T_target < T_taboo)`` with value 1 on target, 0 on taboo."""
    target = {int(t) for t in target}
    taboo = {int(t) for t in taboo}
    if target & taboo:
        raise OverlappingSets("target and taboo intersect")
    if not target:
        return np.zeros(g.vertex_count)
    if not taboo:
        return np.ones(g.vertex_count)
    fixed = sorted(target | taboo)
    vals = [1.0 if v in target else 0.0 for v in fixed]
    u = _solve_full(g, fixed, vals)
    return clamp_probability(u, "hitting probability")


def hitting_prob(g: Graph, start: int, target: Iterable[int], taboo: Iterable[int] = ()) -> float:
    target = {int(t) for t in target}
    taboo = {int(t) for t in taboo}
    if target & taboo:
        raise OverlappingSets("target and taboo intersect")
    if start in target:
        return 1.0
    if start in taboo or not target:
        return 0.0
    return float(hitting_field(g, target, taboo)[start])


def escape_probability(g: Graph, y: int, A: Iterable[int]) -> float:
    """``P_y(T_A < T_y^+)`` from one harmonic solve."""
    A = {int(a) for a in A}
    if y in A:
        raise VertexInSet(f"{y} lies in the target set")
    h = hitting_field(g, A, {y})
    m = g.conductance_matrix
    row = m.getrow(y)
    return float(row.data @ h[row.indices] / g.degrees[y])


# ---------------------------------------------------------------- exit measures

def exit_support(g: Graph, domain: Iterable[int], taboo: Iterable[int] = ()) -> list[int]:
    dom = {int(d) for d in domain}
    return sorted(outer_boundary(g, dom) | {int(t) for t in taboo})


def exit_matrix(g: Graph, domain: Iterable[int], starts: Sequence[int], taboo: Iterable[int] = ()):
    """Exit laws from several starts at once.

    Returns ``(support, M)`` with ``M[i, j] = P_{starts[i]}(walk stopped at support[j])``,
    where the walk stops on leaving ``domain`` or on hitting ``taboo``.
    """
    dom = {int(d) for d in domain}
    taboo = {int(t) for t in taboo}
    support = exit_support(g, dom, taboo)
    inner = dom - taboo
    stopped = sorted(set(range(g.vertex_count)) - inner)
    m = g.conductance_matrix
    out = np.zeros((len(starts), len(support)))
    live = [i for i, s in enumerate(starts) if int(s) in inner]
    for i, s in enumerate(starts):
        if int(s) not in inner:
            if int(s) in support:
                out[i, support.index(int(s))] = 1.0
    if live:
        # P_x(X_T = b) = sum_z g(x, z) c(z, b), and g is symmetric, so solve for columns at x
        cols = green_matrix(g, stopped, [int(starts[i]) for i in live])
        inner_idx = np.array(sorted(inner))
        sub = m[inner_idx][:, support]  # c(z, b), sparse
        out[live] = (sub.T @ cols[inner_idx]).T
    out = clamp_probability(out, "exit measure")
    return support, out


def exit_measure(g: Graph, domain: Iterable[int], start: int, taboo: Iterable[int] | None = None) -> ProbabilityTable:
    dom = {int(d) for d in domain}
    if int(start) not in dom:
        raise StartOutsideDomain(f"start {start} is not in the domain")
    support, M = exit_matrix(g, dom, [int(start)], taboo or ())
    masses = M[0]
    return ProbabilityTable(support, masses / masses.sum() if masses.sum() > 0 else masses, tol=1e-9)


# ---------------------------------------------------------------- resistance

def eff_resistance(g: Graph, x: int, y: int) -> float:
    if int(x) == int(y):
        raise SameVertex("effective resistance needs two distinct vertices")
    return float(green_column(g, [x], y)[y])


def eff_resistance_to_set(g: Graph, x: int, A: Iterable[int]) -> float:
    A = {int(a) for a in A}
    if int(x) in A:
        raise VertexInSet(f"{x} lies in the set")
    q, qmap = glue(g, A)
    return eff_resistance(q, qmap(x), qmap.glued_block)


def resistance_from(g: Graph, z: int, vids: Sequence[int] | None = None) -> np.ndarray:
    """``R_eff(z <-> v)`` for the requested vertices (all by default)."""
    if vids is None:
        vids = range(g.vertex_count)
    vids = [int(v) for v in vids]
    out = np.zeros(len(vids))
    others = [i for i, v in enumerate(vids) if v != z]
    if others:
        out[others] = grounded_diagonal(g, [z], [vids[i] for i in others])
    return out


def reff_ball(g: Graph, z: int, R: float, outside: int | None = None, max_hops: int | None = None):
    """Effective-resistance ball around ``z`` and its hull.

    The hull adds every component of the complement that does not contain
    ``outside`` (by default the vertex farthest from ``z`` in hops). With
    ``max_hops`` only vertices within that hop radius are examined, which is
    valid when the ball is known to lie inside it.
    """
    dist = g.hop_distances(z)
    cand = np.flatnonzero(dist <= max_hops) if max_hops is not None else np.arange(g.vertex_count)
    r = resistance_from(g, z, cand)
    ball = {int(v) for v, rv in zip(cand, r) if rv <= R}
    if outside is None:
        outside = int(np.argmax(dist))
    if outside in ball:
        return ball, set(range(g.vertex_count))
    comp = _component_avoiding(g, outside, ball)
    hull = set(range(g.vertex_count)) - comp
    return ball, hull


def _component_avoiding(g: Graph, start: int, blocked: set[int]) -> set[int]:
    dist = g.hop_distances(start, blocked=blocked)
    return set(np.flatnonzero(dist >= 0).tolist())


# ---------------------------------------------------------------- last exit

def last_exit_check(g: Graph, A: Iterable[int], B: Iterable[int], x: int, b: int) -> float:
    """Residual of the last-exit decomposition for the exit point ``b`` of ``B``."""
    A = {int(a) for a in A}
    B = {int(v) for v in B}
    if not A or not A <= B or int(x) not in A or B == set(range(g.vertex_count)):
        raise MalformedNesting("need nonempty A ⊆ B, x ∈ A and B a proper subset")
    bnd = outer_boundary(g, B)
    if int(b) not in bnd:
        raise MalformedNesting(f"{b} is not on the outer boundary of B")
    support, M = exit_matrix(g, B, [int(x)])
    lhs = M[0, support.index(int(b))]
    Bc = sorted(set(range(g.vertex_count)) - B)
    col = green_column(g, Bc, x)  # g_{B^c}(·, x) = g_{B^c}(x, ·) by symmetry
    mid = sorted(B - A)
    if mid:
        sup2, M2 = exit_matrix(g, B, mid, taboo=A)
        j = sup2.index(int(b))
        via = dict(zip(mid, M2[:, j]))
    else:
        via = {}
    m = g.conductance_matrix
    rhs = 0.0
    for z in sorted(A):
        # P_z(T_{B^c} < T_A^+, X_{T_{B^c}} = b), conditioning on the first step
        row = m.getrow(z)
        esc = 0.0
        for w, c in zip(row.indices.tolist(), row.data.tolist()):
            if w == int(b):
                esc += c
            elif w in via:
                esc += c * via[w]
        rhs += g.degrees[z] * col[z] * esc / g.degrees[z]
    return float(abs(lhs - rhs))
