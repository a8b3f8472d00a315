"""Kinetic Monte Carlo with fluctuating, singular pair rates.

``N`` particles carry states ``x_i`` in (0, 1). Particles ``k`` and ``l``
interact at rate ``s_k * s_l`` with ``s_i = x_i**-alpha``; after an
interaction both states are redrawn uniformly. Events are selected BKL-style:
the waiting time is exponential with mean ``1 / s**2`` (``s = sum s_i``) and
the two particles are drawn separately with probability ``s_i / s`` each,
instead of choosing one of ``N**2`` pairs.

Two selection backends are available:

``"rr"``
    Reduced Rejection over :class:`~reduced_rejection.dynamic.DynamicWeights`.
``"ar"``
    Acceptance-rejection against a constant height ``max s_i``; the height is
    raised on updates and recomputed from scratch every ``ar_refresh``
    interactions (default ``N``; 0 keeps the running maximum).

Both run the whole event loop in compiled code.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dynamic import C_CAP, C_QDRAWS, C_XTRIALS, METHOD_DISPATCH, DynamicWeights, _sample, _update, raise_for
from .errors import InconsistentWeights, InvalidParams
from .rng import RngStream
from .tables import neumaier_sum

BACKENDS = {"rr": 0, "ar": 1}

# observable slots (value, compensation pairs)
O_S = 0
O_SUM = 2
O_SUMSQ = 4
O_ACC_SUM = 6
O_ACC_SUMSQ = 8
O_T = 10
O_LAST_DT = 11
O_AR_BOUND = 12
NO = 13

# counter slots
K_INTERACTIONS = 0
K_AR_PROPOSALS = 1
K_SELECTIONS = 2
K_LAST_K = 3
K_LAST_L = 4
K_SINCE_REFRESH = 5
K_SINCE_RECOMPUTE = 6
NK = 7

RECOMPUTE_EVERY = 100_000


def expected_g(n_particles: int, alpha: float, kind: str = "sum") -> float:
    """Stationary mean of ``sum x_i`` or ``sum x_i**2`` in closed form.

    The stationary density over configurations is proportional to
    ``prod x_i**alpha * sum_{i<j} (x_i x_j)**-alpha`` with normalizing
    constant ``binom(N, 2) / (alpha + 1)**(N - 2)``; integrating ``g`` against
    it gives ``(a+1)/(a+2) (N-2) + 1`` for the sum and
    ``(a+1)/(a+3) (N-2) + 2/3`` for the sum of squares.
    """
    if n_particles < 2 or not 0 < alpha < 1:
        raise InvalidParams("need N >= 2 and 0 < alpha < 1")
    if kind == "sum":
        return (alpha + 1) / (alpha + 2) * (n_particles - 2) + 1
    if kind == "sum_of_squares":
        return (alpha + 1) / (alpha + 3) * (n_particles - 2) + 2.0 / 3.0
    raise InvalidParams(f"unknown observable {kind!r}")


OBSERVABLES = ("sum", "sum_of_squares")


@njit(cache=True)
def _acc(f, k, x):
    s = f[k]
    t = s + x
    if abs(s) >= abs(x):
        f[k + 1] += (s - t) + x
    else:
        f[k + 1] += (x - t) + s
    f[k] = t


@njit(cache=True)
def _recompute(x, s, obs):
    obs[O_S] = neumaier_sum(s)
    obs[O_S + 1] = 0.0
    obs[O_SUM] = neumaier_sum(x)
    obs[O_SUM + 1] = 0.0
    obs[O_SUMSQ] = neumaier_sum(x * x)
    obs[O_SUMSQ + 1] = 0.0


@njit(cache=True)
def _select(s, f, ix, tab, obs, cnt, g, backend):
    cnt[K_SELECTIONS] += 1
    if backend == 0:
        return _sample(f, ix, tab, g, METHOD_DISPATCH)
    n = s.shape[0]
    bound = obs[O_AR_BOUND]
    for _ in range(ix[C_CAP]):
        i = np.int64(g.random() * n)
        cnt[K_AR_PROPOSALS] += 1
        if g.random() * bound < s[i]:
            return i
    return -2


@njit(cache=True)
def _pick_pair(s, f, ix, tab, obs, cnt, g, backend, allow_self):
    while True:
        k = _select(s, f, ix, tab, obs, cnt, g, backend)
        if k < 0:
            return k, k
        l = _select(s, f, ix, tab, obs, cnt, g, backend)
        if l < 0:
            return l, l
        # Redrawing the whole pair keeps P(k, l) proportional to s_k s_l on k != l.
        if allow_self or k != l:
            return k, l


@njit(cache=True)
def _steps(x, s, alpha, f, ix, tab, obs, cnt, g, n_steps, backend, allow_self, ar_refresh):
    # Pair selection and renewal are written out in this loop rather than
    # calling _pick_pair: every out-of-line numba call pays a reference-count
    # round trip per array argument, and there are eight here.
    n = s.shape[0]
    cap = ix[C_CAP]
    for _ in range(n_steps):
        total = obs[O_S] + obs[O_S + 1]
        dt = -np.log1p(-g.random()) / (total * total)
        k = -1
        l = -1
        while True:
            for slot in range(2):
                cnt[K_SELECTIONS] += 1
                if backend == 0:
                    i = _sample(f, ix, tab, g, METHOD_DISPATCH)
                else:
                    i = -2
                    bound = obs[O_AR_BOUND]
                    for _ in range(cap):
                        j = np.int64(g.random() * n)
                        cnt[K_AR_PROPOSALS] += 1
                        if g.random() * bound < s[j]:
                            i = j
                            break
                if i < 0:
                    return i
                if slot == 0:
                    k = i
                else:
                    l = i
            # Redrawing the whole pair keeps P(k, l) proportional to s_k s_l on k != l.
            if allow_self or k != l:
                break
        for r in range(1 if l == k else 2):
            i = k if r == 0 else l
            old_x = x[i]
            old_s = s[i]
            xi = g.random()
            while xi == 0.0:
                xi = g.random()
            si = xi ** (-alpha)
            x[i] = xi
            s[i] = si
            _acc(obs, O_S, -old_s)
            _acc(obs, O_S, si)
            _acc(obs, O_SUM, -old_x)
            _acc(obs, O_SUM, xi)
            _acc(obs, O_SUMSQ, -old_x * old_x)
            _acc(obs, O_SUMSQ, xi * xi)
            if backend == 0:
                _update(f, ix, i, si)
            elif si > obs[O_AR_BOUND]:
                obs[O_AR_BOUND] = si
        obs[O_T] += dt
        obs[O_LAST_DT] = dt
        cnt[K_LAST_K] = k
        cnt[K_LAST_L] = l
        cnt[K_INTERACTIONS] += 1
        cnt[K_SINCE_REFRESH] += 1
        cnt[K_SINCE_RECOMPUTE] += 1
        if backend == 1 and ar_refresh > 0 and cnt[K_SINCE_REFRESH] >= ar_refresh:
            obs[O_AR_BOUND] = s.max()
            cnt[K_SINCE_REFRESH] = 0
        if cnt[K_SINCE_RECOMPUTE] >= RECOMPUTE_EVERY:
            _recompute(x, s, obs)
            cnt[K_SINCE_RECOMPUTE] = 0
        _acc(obs, O_ACC_SUM, obs[O_SUM] + obs[O_SUM + 1])
        _acc(obs, O_ACC_SUMSQ, obs[O_SUMSQ] + obs[O_SUMSQ + 1])
    return 0


@njit(cache=True)
def _pairs(s, f, ix, tab, obs, cnt, g, n, backend, allow_self):
    out = np.empty((n, 2), dtype=np.int64)
    for j in range(n):
        k, l = _pick_pair(s, f, ix, tab, obs, cnt, g, backend, allow_self)
        if k < 0:
            return out[:j], k
        out[j, 0] = k
        out[j, 1] = l
    return out, 0


@dataclass(frozen=True)
class InteractionEvent:
    k: int
    l: int
    dt: float


@dataclass
class RunningEstimate:
    """Running average of an observable, evaluated after every interaction."""

    kind: str
    count: int
    mean: float
    series: np.ndarray  # (m, 2): interaction count, running mean at that count


@dataclass
class TracePoint:
    interaction_count: int
    running_means: dict[str, float]
    wall_time_ns: int
    proposals_total: int
    reinit_count: int


@dataclass
class RunResult:
    estimates: dict[str, RunningEstimate]
    trace: list[TracePoint] = field(default_factory=list)


class ParticleSystem:
    """State of the interacting-particle process plus its event selector.

    Args:
        n_particles: ``N >= 2``.
        alpha: rate exponent in (0, 1).
        rng: stream used for the initial configuration and every later draw.
        x: optional initial states; defaults to i.i.d. uniforms on (0, 1).
        backend: ``"rr"`` or ``"ar"``.
        reinit_threshold: ``M`` for the Reduced Rejection weights.
        allow_self_pairs: draw ``k`` and ``l`` independently even if equal.
        ar_refresh: interactions between full recomputations of the
            acceptance-rejection height (default ``N``); 0 never recomputes,
            so the height is the largest rate seen so far.
    """

    def __init__(
        self,
        n_particles: int,
        alpha: float,
        rng: RngStream,
        *,
        x=None,
        backend: str = "rr",
        reinit_threshold: int | None = None,
        allow_self_pairs: bool = False,
        ar_refresh: int | None = None,
        table: str = "marsaglia",
    ):
        if n_particles < 2:
            raise InvalidParams("need at least two particles")
        if not 0 < alpha < 1:
            raise InvalidParams("alpha must lie in (0, 1)")
        if backend not in BACKENDS:
            raise InvalidParams(f"unknown backend {backend!r}")
        self.alpha = float(alpha)
        self.rng = rng
        self.backend = backend
        self.allow_self_pairs = bool(allow_self_pairs)
        self.ar_refresh = n_particles if ar_refresh is None else int(ar_refresh)
        if self.ar_refresh < 0:
            raise InvalidParams("ar_refresh must be >= 0")
        if x is None:
            x = np.array([rng.open_uniform() for _ in range(n_particles)])
        self.x = np.array(x, dtype=np.float64)
        if self.x.shape != (n_particles,) or not np.all((self.x > 0) & (self.x < 1)):
            raise InvalidParams("states must be N values strictly inside (0, 1)")
        self.s = self.x ** (-self.alpha)
        # The AR backend never touches the weights; keep a 1-element stand-in.
        self.weights = DynamicWeights(
            self.s if backend == "rr" else [1.0],
            reinit_threshold if backend == "rr" else 1,
            table=table,
        )
        self._obs = np.zeros(NO)
        self._cnt = np.zeros(NK, dtype=np.int64)
        _recompute(self.x, self.s, self._obs)
        self._obs[O_AR_BOUND] = self.s.max()
        self._code = BACKENDS[backend]

    # -- views
    @property
    def n_particles(self) -> int:
        return self.x.size

    @property
    def t(self) -> float:
        return float(self._obs[O_T])

    @property
    def total_rate(self) -> float:
        return float(self._obs[O_S] + self._obs[O_S + 1])

    @property
    def interaction_count(self) -> int:
        return int(self._cnt[K_INTERACTIONS])

    @property
    def selections(self) -> int:
        return int(self._cnt[K_SELECTIONS])

    @property
    def proposals_total(self) -> int:
        """Candidate indices drawn so far: table and excess-set draws for
        ``rr``, uniform proposals for ``ar``."""
        if self.backend == "rr":
            c = self.weights.state.ix
            return int(c[C_QDRAWS] + c[C_XTRIALS])
        return int(self._cnt[K_AR_PROPOSALS])

    @property
    def reinit_count(self) -> int:
        return self.weights.reinit_count if self.backend == "rr" else 0

    def observable(self, kind: str) -> float:
        if kind == "sum":
            return float(self._obs[O_SUM] + self._obs[O_SUM + 1])
        if kind == "sum_of_squares":
            return float(self._obs[O_SUMSQ] + self._obs[O_SUMSQ + 1])
        raise InvalidParams(f"unknown observable {kind!r}")

    def running_mean(self, kind: str) -> float:
        n = self.interaction_count
        slot = O_ACC_SUM if kind == "sum" else O_ACC_SUMSQ
        return float(self._obs[slot] + self._obs[slot + 1]) / n if n else float("nan")

    def check_consistency(self, rtol: float = 1e-12) -> None:
        if not np.allclose(self.s, self.x ** (-self.alpha), rtol=rtol, atol=0):
            raise InconsistentWeights("rates no longer match states")
        if self.backend == "rr" and not np.allclose(self.weights.p, self.s, rtol=rtol, atol=0):
            raise InconsistentWeights("sampler weights diverge from particle rates")
        exact = math.fsum(self.s)
        if abs(self.total_rate - exact) > 1e-9 * exact:
            raise InconsistentWeights(f"total rate drifted: {self.total_rate} vs {exact}")

    # -- dynamics
    def advance(self, n_steps: int) -> None:
        err = _steps(
            self.x,
            self.s,
            self.alpha,
            *self.weights.state,
            self._obs,
            self._cnt,
            self.rng.generator,
            int(n_steps),
            self._code,
            self.allow_self_pairs,
            self.ar_refresh,
        )
        raise_for(err)

    def step(self, *, check: bool = False) -> InteractionEvent:
        """Perform one interaction: waiting time, pair selection, update."""
        if check:
            self.check_consistency()
        self.advance(1)
        return InteractionEvent(int(self._cnt[K_LAST_K]), int(self._cnt[K_LAST_L]), float(self._obs[O_LAST_DT]))

    def sample_pairs(self, n: int) -> np.ndarray:
        """Draw ``n`` interacting pairs at the frozen current state."""
        out, err = _pairs(
            self.s, *self.weights.state, self._obs, self._cnt, self.rng.generator, int(n), self._code, self.allow_self_pairs
        )
        raise_for(err)
        return out


def run(
    system: ParticleSystem,
    n_interactions: int,
    observables: tuple[str, ...] | str = "sum",
    record_every: int | None = None,
    checkpoints=None,
) -> RunResult:
    """Run the event loop, averaging observables after every interaction.

    Observables are maintained incrementally from the two changed states, so
    each interaction costs O(1) beyond event selection. A trace point is
    recorded every ``record_every`` interactions, or at each count listed in
    ``checkpoints``, and always at the end.
    """
    if n_interactions < 1:
        raise InvalidParams("n_interactions must be >= 1")
    kinds = (observables,) if isinstance(observables, str) else tuple(observables)
    for kind in kinds:
        if kind not in OBSERVABLES:
            raise InvalidParams(f"unknown observable {kind!r}")
    if checkpoints is not None:
        stops = sorted({int(c) for c in checkpoints if 0 < c < n_interactions} | {n_interactions})
    else:
        chunk = int(record_every or n_interactions)
        if chunk < 1:
            raise InvalidParams("record_every must be >= 1")
        stops = list(range(chunk, n_interactions, chunk)) + [n_interactions]
    trace: list[TracePoint] = []
    done = 0
    start = time.perf_counter_ns()
    for stop in stops:
        system.advance(stop - done)
        done = stop
        trace.append(
            TracePoint(
                system.interaction_count,
                {k: system.running_mean(k) for k in kinds},
                time.perf_counter_ns() - start,
                system.proposals_total,
                system.reinit_count,
            )
        )
    estimates = {}
    for kind in kinds:
        series = np.array([(tp.interaction_count, tp.running_means[kind]) for tp in trace])
        estimates[kind] = RunningEstimate(kind, system.interaction_count, system.running_mean(kind), series)
    return RunResult(estimates, trace)


def warm_up() -> None:
    """Compile the event-loop kernels for both backends on a tiny system."""
    for backend in BACKENDS:
        run(ParticleSystem(4, 0.5, RngStream(0), backend=backend), 10, OBSERVABLES)
