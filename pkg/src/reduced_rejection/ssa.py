"""Gillespie stochastic simulation with pluggable reaction selection.

A well-stirred network of elementary reactions (at most two reactant
molecules) is simulated exactly: the waiting time is exponential with mean
``1 / a(X)`` and the next reaction is chosen with probability ``a_j / a``.
Three selection backends are interchangeable:

* ``direct`` -- cumulative-sum inversion over the propensity vector.
* ``ar`` -- uniform proposal over reactions, accepted with ``a_j / a_bar``,
  where ``a_bar`` is a lazily maintained upper bound on ``max_j a_j``.
* ``rr`` -- Reduced Rejection on a :class:`DynamicWeights` mirror of the
  propensities.

After a firing only the propensities of reactions whose reactants changed
are recomputed, from their closed form, so they never drift.

Network files are JSON::

    {"species": ["A", "B"],
     "initial": {"A": 100, "B": 0},
     "reactions": [{"rate": 1.0, "reactants": ["A"], "products": ["B"]}]}

``reactants``/``products`` are lists of species names (repeat a name for a
stoichiometric coefficient of two) or ``{name: coefficient}`` maps.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from numba import njit

from .core import DEFAULT_CYCLE_CAP
from .dynamic import (
    C_CAP,
    C_FP,
    C_QDRAWS,
    C_XTRIALS,
    METHOD_DISPATCH,
    DynamicWeights,
    _reinit,
    _sample,
    _update,
    default_threshold,
    raise_for,
)
from .errors import ExhaustedSystem, InvalidParams, NegativeCount, NonTermination
from .rng import RngStream
from .tables import neumaier_sum

BACKENDS = {"direct": 0, "ar": 1, "rr": 2}

ZEROTH, UNIMOLECULAR, BIMOLECULAR, BIMOLECULAR_SAME = 0, 1, 2, 3
KIND_NAMES = ("zeroth", "unimolecular", "bimolecular", "bimolecular_same")

# float slots
S_TOTAL = 0  # with compensation in S_TOTAL + 1
S_T = 2
S_ABAR = 3
NSF = 4

# int slots
N_FIRINGS = 0
N_SELECTIONS = 1
N_AR_PROPOSALS = 2
N_POS = 3
N_SINCE_ABAR = 4
N_SINCE_TOTAL = 5
N_LAST = 6
NSC = 7

TOTAL_RECOMPUTE_EVERY = 10_000

# kernel status codes
DONE = 0
EXHAUSTED = 1
STEP_LIMIT = 2
ERR_NEGATIVE = -3


# ------------------------------------------------------------------ network


@dataclass(frozen=True)
class Reaction:
    """One elementary reaction ``reactants -> products`` with rate ``c``."""

    rate: float
    reactants: tuple[str, ...] = ()
    products: tuple[str, ...] = ()
    name: str | None = None

    @property
    def kind(self) -> str:
        r = self.reactants
        if len(r) == 0:
            return "zeroth"
        if len(r) == 1:
            return "unimolecular"
        return "bimolecular_same" if r[0] == r[1] else "bimolecular"

    def change(self) -> dict[str, int]:
        """Net state change, zero entries dropped."""
        delta = Counter(self.products)
        delta.subtract(Counter(self.reactants))
        return {s: d for s, d in delta.items() if d != 0}


def _molecules(entry) -> tuple[str, ...]:
    if entry is None:
        return ()
    if isinstance(entry, str):
        return (entry,)
    if isinstance(entry, dict):
        out = []
        for name, k in entry.items():
            if int(k) != k or k < 0:
                raise InvalidParams(f"bad coefficient {k!r} for {name!r}")
            out.extend([name] * int(k))
        return tuple(out)
    return tuple(entry)


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[str, ...]
    initial: tuple[int, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        if len(set(self.species)) != len(self.species):
            raise InvalidParams("species names must be unique")
        if len(self.initial) != len(self.species):
            raise InvalidParams("one initial count per species is required")
        if any(int(x) != x or x < 0 for x in self.initial):
            raise InvalidParams("initial counts must be non-negative integers")
        known = set(self.species)
        for r in self.reactions:
            if not (r.rate >= 0 and math.isfinite(r.rate)):
                raise InvalidParams(f"rate constants must be finite and >= 0, got {r.rate}")
            if len(r.reactants) > 2:
                raise InvalidParams("only elementary reactions (at most two reactants) are supported")
            unknown = (set(r.reactants) | set(r.products)) - known
            if unknown:
                raise InvalidParams(f"unknown species {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict) -> ReactionNetwork:
        try:
            species = tuple(data["species"])
            init = data.get("initial", {})
            if isinstance(init, dict):
                extra = set(init) - set(species)
                if extra:
                    raise InvalidParams(f"initial counts for unknown species {sorted(extra)}")
                initial = tuple(init.get(s, 0) for s in species)
            else:
                initial = tuple(init)
            reactions = tuple(
                Reaction(
                    rate=float(r["rate"]),
                    reactants=_molecules(r.get("reactants")),
                    products=_molecules(r.get("products")),
                    name=r.get("name"),
                )
                for r in data.get("reactions", [])
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidParams):
                raise
            raise InvalidParams(f"malformed network description: {exc}") from exc
        return cls(species, initial, reactions)

    @classmethod
    def load(cls, path) -> ReactionNetwork:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParams(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "species": list(self.species),
            "initial": dict(zip(self.species, self.initial)),
            "reactions": [
                {"rate": r.rate, "reactants": list(r.reactants), "products": list(r.products)}
                for r in self.reactions
            ],
        }

    def compile(self) -> CompiledNetwork:
        return compile_network(self)

    def dependencies(self) -> list[list[int]]:
        """``dep[j]``: reactions whose propensity can change when ``j`` fires."""
        return _dependency_lists(self)


def isomerization(rate: float = 1.0, a0: int = 100) -> ReactionNetwork:
    """``A -> B``; ``E[X_A(t)] = a0 exp(-rate t)``."""
    return ReactionNetwork(("A", "B"), (a0, 0), (Reaction(rate, ("A",), ("B",)),))


def birth_death(birth: float, death: float, a0: int = 0) -> ReactionNetwork:
    """``0 -> A`` and ``A -> 0``; stationary law Poisson(``birth / death``)."""
    return ReactionNetwork(
        ("A",),
        (a0,),
        (Reaction(birth, (), ("A",)), Reaction(death, ("A",), ())),
    )


def spread_network(big: int = 10**6, pairs: int = 9) -> ReactionNetwork:
    """One abundant species next to ``pairs`` rare reversible isomerizations.

    ``A -> Z`` starts with propensity ``big`` while every ``B_k <-> C_k``
    reaction has propensity at most one, so propensities span ``big``-fold.
    """
    names = ["A", "Z"]
    init = [big, 0]
    rx = [Reaction(1.0, ("A",), ("Z",))]
    for k in range(pairs):
        b, c = f"B{k}", f"C{k}"
        names += [b, c]
        init += [1, 0]
        rx += [Reaction(1.0, (b,), (c,)), Reaction(1.0, (c,), (b,))]
    return ReactionNetwork(tuple(names), tuple(init), tuple(rx))


# ------------------------------------------------------------------ compiled form


class CompiledNetwork(NamedTuple):
    kind: np.ndarray  # int64[R]
    rate: np.ndarray  # float64[R]
    r1: np.ndarray  # int64[R], first reactant species or -1
    r2: np.ndarray  # int64[R], second reactant species or -1
    nu_ptr: np.ndarray  # CSR over reactions of (species, delta)
    nu_sp: np.ndarray
    nu_d: np.ndarray
    dep_ptr: np.ndarray  # CSR dependency graph
    dep_idx: np.ndarray
    x0: np.ndarray  # int64[S]


def _dependency_lists(net: ReactionNetwork) -> list[list[int]]:
    index = {s: i for i, s in enumerate(net.species)}
    readers: dict[int, set[int]] = {}
    for k, r in enumerate(net.reactions):
        for s in r.reactants:
            readers.setdefault(index[s], set()).add(k)
    deps = []
    for r in net.reactions:
        touched: set[int] = set()
        for s in r.change():
            touched |= readers.get(index[s], set())
        deps.append(sorted(touched))
    return deps


def compile_network(net: ReactionNetwork) -> CompiledNetwork:
    index = {s: i for i, s in enumerate(net.species)}
    kinds = {"zeroth": ZEROTH, "unimolecular": UNIMOLECULAR, "bimolecular": BIMOLECULAR, "bimolecular_same": BIMOLECULAR_SAME}
    n = len(net.reactions)
    kind = np.zeros(n, dtype=np.int64)
    r1 = np.full(n, -1, dtype=np.int64)
    r2 = np.full(n, -1, dtype=np.int64)
    nu_ptr = [0]
    nu_sp: list[int] = []
    nu_d: list[int] = []
    for j, r in enumerate(net.reactions):
        kind[j] = kinds[r.kind]
        if r.reactants:
            r1[j] = index[r.reactants[0]]
        if len(r.reactants) == 2:
            r2[j] = index[r.reactants[1]]
        for s, d in sorted(r.change().items(), key=lambda kv: index[kv[0]]):
            nu_sp.append(index[s])
            nu_d.append(d)
        nu_ptr.append(len(nu_sp))
    dep_ptr = [0]
    dep_idx: list[int] = []
    for d in _dependency_lists(net):
        dep_idx.extend(d)
        dep_ptr.append(len(dep_idx))
    return CompiledNetwork(
        kind=kind,
        rate=np.array([r.rate for r in net.reactions], dtype=np.float64),
        r1=r1,
        r2=r2,
        nu_ptr=np.array(nu_ptr, dtype=np.int64),
        nu_sp=np.array(nu_sp, dtype=np.int64),
        nu_d=np.array(nu_d, dtype=np.int64),
        dep_ptr=np.array(dep_ptr, dtype=np.int64),
        dep_idx=np.array(dep_idx, dtype=np.int64),
        x0=np.array(net.initial, dtype=np.int64),
    )


def propensity(reaction: Reaction, counts: dict[str, int]) -> float:
    """Mass-action propensity of ``reaction`` at species counts ``counts``."""
    kind = reaction.kind
    c = reaction.rate
    if kind == "zeroth":
        return c
    x = counts[reaction.reactants[0]]
    if kind == "unimolecular":
        return c * x
    if kind == "bimolecular":
        return c * x * counts[reaction.reactants[1]]
    return c * x * (x - 1) / 2


# ------------------------------------------------------------------ kernels


class SSAState(NamedTuple):
    x: np.ndarray  # int64[S]
    a: np.ndarray  # float64[R]
    f: np.ndarray  # float64[NSF]
    c: np.ndarray  # int64[NSC]


@njit(cache=True)
def _acc(f, k, v):
    s = f[k]
    t = s + v
    if abs(s) >= abs(v):
        f[k + 1] += (s - t) + v
    else:
        f[k + 1] += (v - t) + s
    f[k] = t


@njit(cache=True)
def _prop(net, x, j):
    k = net.kind[j]
    c = net.rate[j]
    if k == ZEROTH:
        return c
    xi = float(x[net.r1[j]])
    if k == UNIMOLECULAR:
        return c * xi
    if k == BIMOLECULAR:
        return c * xi * float(x[net.r2[j]])
    return c * xi * (xi - 1.0) / 2.0


@njit(cache=True)
def _reset(net, st, f, ix, tab, backend):
    st.x[:] = net.x0
    npos = 0
    for j in range(st.a.shape[0]):
        st.a[j] = _prop(net, st.x, j)
        if st.a[j] > 0.0:
            npos += 1
    st.f[S_TOTAL] = neumaier_sum(st.a)
    st.f[S_TOTAL + 1] = 0.0
    st.f[S_T] = 0.0
    st.f[S_ABAR] = st.a.max() if st.a.shape[0] > 0 else 0.0
    st.c[N_POS] = npos
    st.c[N_SINCE_ABAR] = 0
    st.c[N_SINCE_TOTAL] = 0
    st.c[N_LAST] = -1
    if backend == 2:
        fp = ix[C_FP]
        f[fp : fp + st.a.shape[0]] = st.a
        _reinit(f, ix, tab)


@njit(cache=True)
def _partial_sum_index(a, target):
    """Smallest ``k`` with ``a[0] + ... + a[k] > target``."""
    acc = 0.0
    last = -1
    for j in range(a.shape[0]):
        if a[j] > 0.0:
            acc += a[j]
            last = j
            if acc > target:
                return j
    # the maintained total can exceed the running sum by rounding
    return last


@njit(cache=True)
def _select(st, f, ix, tab, g, backend, cap):
    st.c[N_SELECTIONS] += 1
    if backend == 0:
        return _partial_sum_index(st.a, g.random() * (st.f[S_TOTAL] + st.f[S_TOTAL + 1]))
    if backend == 1:
        m = st.a.shape[0]
        bound = st.f[S_ABAR]
        for _ in range(cap):
            j = np.int64(g.random() * m)
            st.c[N_AR_PROPOSALS] += 1
            if g.random() * bound < st.a[j]:
                return j
        return np.int64(-2)
    return _sample(f, ix, tab, g, METHOD_DISPATCH)


@njit(cache=True)
def _run(net, st, f, ix, tab, g, backend, t_end, max_steps, times, out):
    """Advance until ``t_end``, ``max_steps`` firings or exhaustion.

    ``out[k]`` receives the state at ``times[k]`` (right-continuous). Returns
    ``(status, n_recorded)``; a negative status is an error.

    Selection and firing are written out here: an out-of-line numba call
    pays a reference-count round trip for each of its many array arguments.
    """
    cap = ix[C_CAP]
    x = st.x
    a = st.a
    sf = st.f
    sc = st.c
    nu_ptr = net.nu_ptr
    nu_sp = net.nu_sp
    nu_d = net.nu_d
    dep_ptr = net.dep_ptr
    dep_idx = net.dep_idx
    m = a.shape[0]
    k = 0
    nt = times.shape[0]
    steps = 0
    while True:
        if sc[N_POS] == 0:
            while k < nt:
                out[k, :] = x
                k += 1
            return EXHAUSTED, k
        if steps >= max_steps:
            return STEP_LIMIT, k
        total = sf[S_TOTAL] + sf[S_TOTAL + 1]
        tn = sf[S_T] - np.log1p(-g.random()) / total
        while k < nt and times[k] < tn:
            out[k, :] = x
            k += 1
        if tn > t_end:
            sf[S_T] = t_end
            return DONE, k
        # select
        sc[N_SELECTIONS] += 1
        if backend == 0:
            j = _partial_sum_index(a, g.random() * total)
        elif backend == 1:
            j = np.int64(-2)
            bound = sf[S_ABAR]
            for _ in range(cap):
                c = np.int64(g.random() * m)
                sc[N_AR_PROPOSALS] += 1
                if g.random() * bound < a[c]:
                    j = c
                    break
        else:
            j = _sample(f, ix, tab, g, METHOD_DISPATCH)
        if j < 0:
            return j, k
        # fire
        for q in range(nu_ptr[j], nu_ptr[j + 1]):
            if x[nu_sp[q]] + nu_d[q] < 0:
                return ERR_NEGATIVE, k
        for q in range(nu_ptr[j], nu_ptr[j + 1]):
            x[nu_sp[q]] += nu_d[q]
        for q in range(dep_ptr[j], dep_ptr[j + 1]):
            r = dep_idx[q]
            old = a[r]
            new = _prop(net, x, r)
            if new == old:
                continue
            a[r] = new
            _acc(sf, S_TOTAL, new - old)
            if old > 0.0:
                sc[N_POS] -= 1
            if new > 0.0:
                sc[N_POS] += 1
            if new > sf[S_ABAR]:
                sf[S_ABAR] = new
            if backend == 2:
                _update(f, ix, r, new)
        sc[N_FIRINGS] += 1
        sc[N_LAST] = j
        sc[N_SINCE_ABAR] += 1
        sc[N_SINCE_TOTAL] += 1
        if sc[N_POS] == 0:
            sf[S_TOTAL] = 0.0
            sf[S_TOTAL + 1] = 0.0
        elif sc[N_SINCE_TOTAL] >= TOTAL_RECOMPUTE_EVERY:
            sf[S_TOTAL] = neumaier_sum(a)
            sf[S_TOTAL + 1] = 0.0
            sc[N_SINCE_TOTAL] = 0
        if backend == 1 and sc[N_SINCE_ABAR] >= m:
            sf[S_ABAR] = a.max()
            sc[N_SINCE_ABAR] = 0
        sf[S_T] = tn
        steps += 1


@njit(cache=True)
def _selections(st, f, ix, tab, g, backend, n):
    """``n`` selections at a frozen state; returns per-reaction counts."""
    counts = np.zeros(st.a.shape[0], dtype=np.int64)
    cap = ix[C_CAP]
    for _ in range(n):
        j = _select(st, f, ix, tab, g, backend, cap)
        if j < 0:
            return counts, j
        counts[j] += 1
    return counts, 0


# ------------------------------------------------------------------ Python API


def select_reaction_partial_sum(a: Sequence[float], r: float) -> int:
    """Direct-method index for the uniform variate ``r``: the smallest ``k``
    whose partial sum ``a_0 + ... + a_k`` exceeds ``r * sum(a)``."""
    a = np.asarray(a, dtype=np.float64)
    total = math.fsum(a)
    if not total > 0:
        raise ExhaustedSystem("total propensity is zero")
    return int(_partial_sum_index(a, r * total))


@dataclass
class Trajectory:
    """Species counts recorded at fixed sample times."""

    times: np.ndarray
    counts: np.ndarray  # (len(times), n_species)
    species: tuple[str, ...]
    exhausted: bool = False
    firings: int = 0
    t_final: float = 0.0

    def column(self, name: str) -> np.ndarray:
        return self.counts[:, self.species.index(name)]


class Simulator:
    """Exact SSA for one network with a chosen selection backend.

    Args:
        network: the reaction network; its ``initial`` counts are the state
            at ``t = 0``.
        backend: ``"direct"``, ``"ar"`` or ``"rr"``.
        rng: uniform stream driving both waiting times and selections.
        reinit_threshold: ``M`` for the ``rr`` backend (default
            ``ceil(4 sqrt(R))`` for ``R`` reactions).
    """

    def __init__(
        self,
        network: ReactionNetwork,
        backend: str = "direct",
        rng: RngStream | None = None,
        *,
        reinit_threshold: int | None = None,
        table: str = "marsaglia",
        cycle_cap: int = DEFAULT_CYCLE_CAP,
    ):
        if backend not in BACKENDS:
            raise InvalidParams(f"unknown backend {backend!r}; expected one of {sorted(BACKENDS)}")
        self.network = network
        self.backend = backend
        self._code = BACKENDS[backend]
        self.rng = rng if rng is not None else RngStream(0)
        self.net = compile_network(network)
        n_rx = len(network.reactions)
        self._st = SSAState(
            x=self.net.x0.copy(),
            a=np.zeros(n_rx),
            f=np.zeros(NSF),
            c=np.zeros(NSC, dtype=np.int64),
        )
        # The rr mirror is sized to the reaction count; other backends only
        # need its cycle cap.
        size = max(n_rx, 1) if backend == "rr" else 1
        m = reinit_threshold if reinit_threshold is not None else default_threshold(size)
        self._dw = DynamicWeights(np.ones(size), m, table=table, cycle_cap=cycle_cap)
        self.reset()

    def reset(self, rng: RngStream | None = None) -> None:
        """Return to the initial state; counters keep accumulating."""
        if rng is not None:
            self.rng = rng
        if len(self.network.reactions) == 0:
            self._st.x[:] = self.net.x0
            self._st.f[:] = 0.0
            self._st.c[N_POS] = 0
            return
        _reset(self.net, self._st, *self._dw.state, self._code)

    # -- views
    @property
    def t(self) -> float:
        return float(self._st.f[S_T])

    @property
    def x(self) -> np.ndarray:
        return self._st.x.copy()

    @property
    def propensities(self) -> np.ndarray:
        return self._st.a.copy()

    @property
    def a_total(self) -> float:
        return float(self._st.f[S_TOTAL] + self._st.f[S_TOTAL + 1])

    @property
    def weights(self) -> DynamicWeights:
        return self._dw

    @property
    def firings(self) -> int:
        return int(self._st.c[N_FIRINGS])

    @property
    def selections(self) -> int:
        return int(self._st.c[N_SELECTIONS])

    @property
    def proposals_total(self) -> int:
        """Candidate indices examined by the selection step."""
        if self._code == 0:
            return self.selections
        if self._code == 1:
            return int(self._st.c[N_AR_PROPOSALS])
        c = self._dw.state.ix
        return int(c[C_QDRAWS] + c[C_XTRIALS])

    @property
    def state(self) -> SSAState:
        return self._st

    def counts(self) -> dict[str, int]:
        return dict(zip(self.network.species, self._st.x.tolist()))

    # -- checks
    def check_consistency(self, rtol: float = 1e-12) -> None:
        """Compare the maintained propensities with a full recomputation."""
        counts = self.counts()
        if any(v < 0 for v in counts.values()):
            raise NegativeCount("negative species count")
        for j, r in enumerate(self.network.reactions):
            exact = propensity(r, counts)
            if abs(self._st.a[j] - exact) > rtol * max(abs(exact), 1.0):
                raise AssertionError(f"propensity {j} is {self._st.a[j]}, expected {exact}")
        exact_total = math.fsum(self._st.a)
        if abs(self.a_total - exact_total) > 1e-9 * max(exact_total, 1.0):
            raise AssertionError(f"total propensity drifted: {self.a_total} vs {exact_total}")
        if self._code == 2:
            if not np.array_equal(self._dw.p, self._st.a):
                raise AssertionError("rr weights no longer mirror the propensities")
            self._dw.check_invariants()

    # -- stepping
    def _raise(self, status: int) -> None:
        if status == ERR_NEGATIVE:
            raise NegativeCount(f"firing reaction would drive a count negative at t={self.t}")
        if status < 0:
            raise_for(status)
            raise NonTermination(f"selection failed with code {status}")

    def step(self, *, check: bool = False) -> tuple[int, float]:
        """Fire one reaction; returns ``(reaction index, dt)``."""
        if self._st.c[N_POS] == 0:
            raise ExhaustedSystem(f"no reaction can fire at t={self.t}")
        t0 = self.t
        before = self._st.a.copy() if check else None
        empty = np.empty(0)
        out = np.empty((0, self._st.x.size), dtype=np.int64)
        status, _ = _run(self.net, self._st, *self._dw.state, self.rng.generator, self._code, math.inf, 1, empty, out)
        self._raise(status)
        j = int(self._st.c[N_LAST])
        if check:
            self.check_consistency()
            allowed = set(self.network.dependencies()[j])
            changed = set(np.flatnonzero(before != self._st.a).tolist())
            if not changed <= allowed:
                raise AssertionError(f"reactions {sorted(changed - allowed)} changed outside dep({j})")
        return j, self.t - t0

    def run_until(self, t_end: float, sample_times: Sequence[float] | None = None) -> Trajectory:
        """Simulate to time ``t_end``.

        The state is recorded at ``sample_times`` (default: just ``t_end``).
        A trajectory that runs out of reactions before ``t_end`` is returned
        with ``exhausted=True`` and its final state held constant.
        """
        t0 = self.t
        if not t_end >= t0:
            raise InvalidParams(f"t_end={t_end} precedes the current time {t0}")
        names = self.network.species
        if t_end == t0:
            return Trajectory(np.empty(0), np.empty((0, len(names)), dtype=np.int64), names, t_final=t0)
        times = np.array([t_end] if sample_times is None else sample_times, dtype=np.float64)
        if times.size and (np.any(np.diff(times) < 0) or times[0] < t0 or times[-1] > t_end):
            raise InvalidParams("sample times must be sorted and inside [t, t_end]")
        if self._st.c[N_POS] == 0:
            raise ExhaustedSystem(f"no reaction can fire at t={t0}")
        out = np.zeros((times.size, len(names)), dtype=np.int64)
        f0 = self.firings
        status, k = _run(
            self.net, self._st, *self._dw.state, self.rng.generator, self._code, float(t_end), np.iinfo(np.int64).max, times, out
        )
        self._raise(status)
        return Trajectory(times, out[:k], names, status == EXHAUSTED, self.firings - f0, self.t)

    def run_steps(self, n_steps: int) -> Trajectory:
        """Fire up to ``n_steps`` reactions (fewer if the system exhausts)."""
        if n_steps < 0:
            raise InvalidParams("n_steps must be >= 0")
        names = self.network.species
        if n_steps and self._st.c[N_POS] == 0:
            raise ExhaustedSystem(f"no reaction can fire at t={self.t}")
        f0 = self.firings
        status, _ = _run(
            self.net, self._st, *self._dw.state, self.rng.generator, self._code, math.inf, int(n_steps), np.empty(0), np.empty((0, len(names)), dtype=np.int64)
        )
        self._raise(status)
        return Trajectory(np.array([self.t]), self._st.x[None, :].copy(), names, status == EXHAUSTED, self.firings - f0, self.t)

    def sample_selections(self, n: int) -> np.ndarray:
        """``n`` reaction selections at the current, frozen state."""
        if self._st.c[N_POS] == 0:
            raise ExhaustedSystem("total propensity is zero")
        counts, err = _selections(self._st, *self._dw.state, self.rng.generator, self._code, int(n))
        self._raise(err)
        return counts


def selection_counts(a: Sequence[float], backend: str, n: int, rng: RngStream) -> tuple[np.ndarray, int]:
    """Frozen-state selection test bed: draw ``n`` reaction indices from the
    propensity vector ``a``; returns ``(counts, proposals)``."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or not np.all(np.isfinite(a)):
        raise InvalidParams("propensities must be finite and non-negative")
    # one zeroth-order reaction per entry reproduces ``a`` exactly
    net = ReactionNetwork((), (), tuple(Reaction(float(v)) for v in a))
    sim = Simulator(net, backend, rng)
    counts = sim.sample_selections(n)
    return counts, sim.proposals_total


@dataclass
class EnsembleResult:
    backend: str
    times: np.ndarray
    species: tuple[str, ...]
    counts: np.ndarray  # (replicas, len(times), n_species)
    exhausted: np.ndarray  # bool[replicas]
    firings: int = 0
    selections: int = 0
    proposals: int = 0
    wall_time_ns: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def proposals_per_selection(self) -> float:
        return self.proposals / self.selections if self.selections else float("nan")

    def final(self, name: str) -> np.ndarray:
        return self.counts[:, -1, self.species.index(name)]


def replica_streams(seed: int, replicas: int) -> list[RngStream]:
    return RngStream(seed).spawn(replicas)


def ensemble(
    network: ReactionNetwork,
    backend: str,
    t_end: float,
    replicas: int,
    seed: int = 0,
    *,
    sample_times: Sequence[float] | None = None,
    replica_range: tuple[int, int] | None = None,
    reinit_threshold: int | None = None,
) -> EnsembleResult:
    """Run independent trajectories to ``t_end``.

    Replica ``r`` always uses the ``r``-th child stream of ``seed``, so any
    split of ``replica_range`` across workers reproduces the same numbers.
    """
    if replicas < 1:
        raise InvalidParams("replicas must be >= 1")
    times = np.array([t_end] if sample_times is None else sample_times, dtype=np.float64)
    lo, hi = replica_range or (0, replicas)
    streams = replica_streams(seed, replicas)[lo:hi]
    sim = Simulator(network, backend, streams[0] if streams else None, reinit_threshold=reinit_threshold)
    counts = np.zeros((hi - lo, times.size, len(network.species)), dtype=np.int64)
    exhausted = np.zeros(hi - lo, dtype=bool)
    start = time.perf_counter_ns()
    for r, stream in enumerate(streams):
        sim.reset(stream)
        if sim.state.c[N_POS] == 0:
            raise ExhaustedSystem("no reaction can fire in the initial state")
        traj = sim.run_until(t_end, times)
        counts[r] = traj.counts
        exhausted[r] = traj.exhausted
    wall = time.perf_counter_ns() - start
    return EnsembleResult(
        backend=backend,
        times=times,
        species=network.species,
        counts=counts,
        exhausted=exhausted,
        firings=sim.firings,
        selections=sim.selections,
        proposals=sim.proposals_total,
        wall_time_ns=wall,
        extra={"reinit_count": sim.weights.reinit_count if backend == "rr" else 0},
    )


def merge(parts: Sequence[EnsembleResult]) -> EnsembleResult:
    """Concatenate replica chunks in order."""
    first = parts[0]
    extra = {"reinit_count": sum(p.extra.get("reinit_count", 0) for p in parts)}
    if "t_final" in first.extra:
        extra["t_final"] = np.concatenate([p.extra["t_final"] for p in parts])
    return EnsembleResult(
        backend=first.backend,
        times=first.times,
        species=first.species,
        counts=np.concatenate([p.counts for p in parts]),
        exhausted=np.concatenate([p.exhausted for p in parts]),
        firings=sum(p.firings for p in parts),
        selections=sum(p.selections for p in parts),
        proposals=sum(p.proposals for p in parts),
        wall_time_ns=sum(p.wall_time_ns for p in parts),
        extra=extra,
    )
