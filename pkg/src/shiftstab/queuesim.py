"""Single-server, three-class queue with quadratic sojourn costs.

Jobs of class j arrive with interarrival law

    1/2 Exp(lambda_j(t)) + 1/2 |Normal(0, lambda_j(t)^-2 * pi/2)|

(both components have mean 1/lambda_j(t)), need Exp(mu_j(t)) service, and cost
w_j * sojourn^2.  The server is non-idling and non-preemptive; a scheduling
decision is taken at t = 0 and at every service completion.  Rates are
frozen at the start of each draw.

The cumulative cost of a path at the horizon counts departed jobs by their
sojourn and jobs still in the system by their age at the horizon.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from ._rng import child
from .core import CostSample, estimate_stability
from .errors import InvalidArgumentError

HALF_NORMAL_SCALE = math.sqrt(math.pi / 2)
DEFAULT_WEIGHTS = (1.0, 3.0, 6.0)
DEFAULT_ARRIVAL = (0.6, 0.6, 0.6)
DEFAULT_SERVICE = (2.0, 2.0, 2.0)
DEFAULT_HORIZON = 100.0
_BLOCK = 256


# --------------------------------------------------------------------------
# rate profiles


@dataclass(frozen=True)
class RateProfile:
    """Piecewise-continuous positive rate r(t).

    kinds: ``constant`` (r0), ``ramp`` (r0 until t0, linear to r1 at t1, then
    r1), ``step`` (r0 before t_jump, r1 from t_jump on) and ``sinusoidal``
    (r0 + amplitude * sin(2 pi t / period)).
    """

    kind: str
    r0: float
    r1: float = 0.0
    t0: float = 0.0
    t1: float = 0.0
    amplitude: float = 0.0
    period: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "step", "sinusoidal"):
            raise InvalidArgumentError(f"unknown rate profile kind {self.kind!r}")
        if self.kind == "constant":
            # a zero constant rate switches a stream off (no arrivals)
            if not self.r0 >= 0:
                raise InvalidArgumentError("rate must be nonnegative")
        elif not self.r0 > 0:
            raise InvalidArgumentError("base rate must be positive")
        if self.kind in ("ramp", "step") and not self.r1 > 0:
            raise InvalidArgumentError("target rate must be positive")
        if self.kind == "ramp" and not self.t1 > self.t0:
            raise InvalidArgumentError("ramp needs t1 > t0")
        if self.kind == "sinusoidal":
            if not (0 <= self.amplitude < self.r0):
                raise InvalidArgumentError("sinusoid amplitude must be in [0, base)")
            if not self.period > 0:
                raise InvalidArgumentError("period must be positive")

    @classmethod
    def constant(cls, r):
        return cls("constant", float(r))

    @classmethod
    def ramp(cls, r0, r1, t0, t1):
        return cls("ramp", float(r0), float(r1), float(t0), float(t1))

    @classmethod
    def step(cls, r0, r1, t_jump):
        return cls("step", float(r0), float(r1), float(t_jump))

    @classmethod
    def sinusoidal(cls, base, amplitude, period):
        return cls("sinusoidal", float(base), amplitude=float(amplitude), period=float(period))

    @property
    def is_off(self) -> bool:
        return self.kind == "constant" and self.r0 == 0.0

    def __call__(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return self.r0
        if k == "step":
            return self.r0 if t < self.t0 else self.r1
        if k == "ramp":
            if t <= self.t0:
                return self.r0
            if t >= self.t1:
                return self.r1
            return self.r0 + (self.r1 - self.r0) * (t - self.t0) / (self.t1 - self.t0)
        return self.r0 + self.amplitude * math.sin(2.0 * math.pi * t / self.period)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "r0": self.r0}
        if self.kind == "ramp":
            d.update(r1=self.r1, t0=self.t0, t1=self.t1)
        elif self.kind == "step":
            d.update(r1=self.r1, t_jump=self.t0)
        elif self.kind == "sinusoidal":
            d.update(amplitude=self.amplitude, period=self.period)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RateProfile":
        kind = d["kind"]
        if kind == "constant":
            return cls.constant(d["r0"])
        if kind == "ramp":
            return cls.ramp(d["r0"], d["r1"], d["t0"], d["t1"])
        if kind == "step":
            return cls.step(d["r0"], d["r1"], d["t_jump"])
        if kind == "sinusoidal":
            return cls.sinusoidal(d["r0"], d["amplitude"], d["period"])
        raise InvalidArgumentError(f"unknown rate profile kind {kind!r}")


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class JobClass:
    weight: float
    arrival: RateProfile
    service: RateProfile
    # service profile the Gc-mu index believes in; defaults to ``service``
    nominal_service: RateProfile | None = None

    @property
    def index_service(self) -> RateProfile:
        return self.nominal_service if self.nominal_service is not None else self.service

    def to_dict(self):
        d = {"weight": self.weight, "arrival": self.arrival.to_dict(), "service": self.service.to_dict()}
        if self.nominal_service is not None:
            d["nominal_service"] = self.nominal_service.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        nominal = d.get("nominal_service")
        return cls(
            float(d["weight"]),
            RateProfile.from_dict(d["arrival"]),
            RateProfile.from_dict(d["service"]),
            RateProfile.from_dict(nominal) if nominal is not None else None,
        )


@dataclass(frozen=True)
class QueueConfig:
    classes: tuple
    horizon: float = DEFAULT_HORIZON
    policy: str = "gcmu"
    name: str = "baseline"

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) == 0:
            raise InvalidArgumentError("need at least one job class")
        if not self.horizon > 0:
            raise InvalidArgumentError("horizon must be positive")
        for c in self.classes:
            if not c.weight > 0:
                raise InvalidArgumentError("class weights must be positive")

    def with_policy(self, policy: str) -> "QueueConfig":
        return replace(self, policy=policy)

    def to_dict(self):
        return {
            "name": self.name,
            "horizon": self.horizon,
            "policy": self.policy,
            "classes": [c.to_dict() for c in self.classes],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tuple(JobClass.from_dict(c) for c in d["classes"]),
            float(d.get("horizon", DEFAULT_HORIZON)),
            d.get("policy", "gcmu"),
            d.get("name", "custom"),
        )


def baseline_config(policy: str = "gcmu", arrival=DEFAULT_ARRIVAL, service=DEFAULT_SERVICE,
                    weights=DEFAULT_WEIGHTS, horizon=DEFAULT_HORIZON) -> QueueConfig:
    classes = tuple(
        JobClass(float(w), RateProfile.constant(a), RateProfile.constant(m))
        for w, a, m in zip(weights, arrival, service)
    )
    return QueueConfig(classes, float(horizon), policy, "baseline")


SCENARIOS = {
    1: "arrival rates ramp linearly to 1.5x over the horizon",
    2: "arrival rates jump to 1.5x at t = 50",
    3: "service rates ramp linearly down to 0.75x over the horizon",
    4: "arrival ramp to 1.5x and service ramp to 0.75x together",
    5: "sinusoidal arrivals, amplitude 0.25x base, period 1",
}


def shift_scenario(sid, policy: str = "gcmu", base: QueueConfig | None = None) -> QueueConfig:
    """Shifted version of ``base`` (default: the stationary baseline).

    The Gc-mu index keeps using the baseline service profile under every
    shift, as a scheduler unaware of the change would.
    """
    if sid in ("baseline", 0, "0"):
        cfg = base if base is not None else baseline_config()
        return replace(cfg, policy=policy)
    try:
        sid = int(sid)
    except (TypeError, ValueError):
        raise InvalidArgumentError(f"unknown scenario {sid!r}") from None
    if sid not in SCENARIOS:
        raise InvalidArgumentError(f"scenario id must be in 1..5, got {sid}")
    base = base if base is not None else baseline_config()
    h = base.horizon
    out = []
    for c in base.classes:
        lam0 = c.arrival(0.0)
        mu0 = c.service(0.0)
        arrival, service = c.arrival, c.service
        if sid in (1, 4):
            arrival = RateProfile.ramp(lam0, 1.5 * lam0, 0.0, h)
        if sid == 2:
            arrival = RateProfile.step(lam0, 1.5 * lam0, 0.5 * h)
        if sid in (3, 4):
            service = RateProfile.ramp(mu0, 0.75 * mu0, 0.0, h)
        if sid == 5:
            arrival = RateProfile.sinusoidal(lam0, 0.25 * lam0, 1.0)
        out.append(JobClass(c.weight, arrival, service, c.index_service))
    return QueueConfig(tuple(out), h, policy, f"scenario{sid}")


# --------------------------------------------------------------------------
# policies


def gc_mu_index(age: float, weight: float, service_rate: float) -> float:
    """Marginal quadratic cost times service rate: 2 w a mu."""
    return 2.0 * weight * age * service_rate


@dataclass
class QueueView:
    """What a policy sees at a decision epoch."""

    time: float
    heads: list  # arrival time of the oldest waiting job per class, or None
    lengths: list
    classes: tuple

    def age(self, j: int) -> float | None:
        h = self.heads[j]
        return None if h is None else self.time - h


def fifo_policy(view: QueueView) -> int:
    """Oldest waiting job overall; ties go to the lowest class index."""
    best, best_head = -1, math.inf
    for j, h in enumerate(view.heads):
        if h is not None and h < best_head:
            best, best_head = j, h
    return best


def gc_mu_policy(view: QueueView) -> int:
    """Highest 2 w_j a_j mu_j over nonempty classes, using the nominal mu."""
    best, best_val = -1, -math.inf
    t = view.time
    for j, h in enumerate(view.heads):
        if h is None:
            continue
        c = view.classes[j]
        v = gc_mu_index(t - h, c.weight, c.index_service(t))
        if v > best_val:
            best, best_val = j, v
    return best


POLICIES: dict[str, Callable[[QueueView], int]] = {"gcmu": gc_mu_policy, "fifo": fifo_policy}


def resolve_policy(policy) -> Callable[[QueueView], int]:
    if callable(policy):
        return policy
    try:
        return POLICIES[str(policy).lower()]
    except KeyError:
        raise InvalidArgumentError(f"unknown policy {policy!r}; expected one of {sorted(POLICIES)}") from None


# --------------------------------------------------------------------------
# simulation


def draw_interarrival(rate: float, rng: np.random.Generator, size=None):
    """Interarrival time(s) with mean 1/rate from the Exp / half-normal mix."""
    if not rate > 0:
        raise InvalidArgumentError("rate must be positive")
    return _unit_interarrivals(rng, size) / rate


def _unit_interarrivals(rng, size):
    coin = rng.random(size) < 0.5
    e = rng.standard_exponential(size)
    z = np.abs(rng.standard_normal(size)) * HALF_NORMAL_SCALE
    return np.where(coin, e, z)


def _unit_block(rng, kind) -> np.ndarray:
    if kind == "arrival":
        return _unit_interarrivals(rng, _BLOCK)
    return rng.standard_exponential(_BLOCK)


def _unit_blocks(seed_seq, kind, n_blocks) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    return np.concatenate([_unit_block(rng, kind) for _ in range(n_blocks)])


class _Stream:
    """Buffered unit variates from one dedicated generator."""

    __slots__ = ("rng", "buf", "i", "kind")

    def __init__(self, seed_seq, kind):
        self.rng = np.random.default_rng(seed_seq)
        self.kind = kind
        self.buf = []
        self.i = 0

    def next(self) -> float:
        if self.i >= len(self.buf):
            self.buf = _unit_block(self.rng, self.kind).tolist()
            self.i = 0
        v = self.buf[self.i]
        self.i += 1
        return v


@dataclass
class SamplePathResult:
    cumulative_cost: float
    completed: list
    mean_sojourn: list
    in_system: list
    arrivals: list
    trace: list | None = None
    jobs: list | None = None

    def cost_at(self, t: float) -> float:
        """Cumulative cost at time t, from the recorded job list."""
        if self.jobs is None:
            raise InvalidArgumentError("simulate with record=True to query costs over time")
        total = 0.0
        for _, w, a, d in self.jobs:
            if a <= t:
                total += w * (min(t, d) - a) ** 2
        return total

    def cost_trajectory(self, times: Sequence[float]) -> list:
        return [self.cost_at(t) for t in times]


def simulate_path(config: QueueConfig, seed, policy=None, record: bool = False,
                  engine: str = "auto") -> SamplePathResult:
    """Simulate one sample path up to ``config.horizon``.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``; each class gets
    its own arrival and service substreams, so two policies run with the same
    seed see the same arrival epochs and per-class service requirements.
    With ``record=True`` the result carries an event trace and per-job
    (class, weight, arrival, departure) records; departure is inf for jobs
    still in the system at the horizon.

    ``engine`` is ``"python"``, ``"compiled"`` or ``"auto"``; the compiled loop
    handles the built-in policies without recording and draws the same
    variates, so both engines return the same path.
    """
    pol = policy if policy is not None else config.policy
    if engine not in ("auto", "python", "compiled"):
        raise InvalidArgumentError(f"unknown engine {engine!r}")
    builtin = isinstance(pol, str) and pol.lower() in POLICIES
    if engine == "compiled" and (record or not builtin):
        raise InvalidArgumentError("the compiled engine supports built-in policies without recording")
    if engine == "compiled" or (engine == "auto" and builtin and not record):
        return _simulate_compiled(config, seed, pol.lower())
    return _simulate_python(config, seed, pol, record)


def _simulate_compiled(config: QueueConfig, seed, policy: str) -> SamplePathResult:
    from . import _queue_kernel as kern

    classes = config.classes
    k = len(classes)
    arr_p = np.stack([kern.pack_profile(c.arrival) for c in classes])
    svc_p = np.stack([kern.pack_profile(c.service) for c in classes])
    nom_p = np.stack([kern.pack_profile(c.index_service) for c in classes])
    weights = np.array([c.weight for c in classes], dtype=np.float64)
    code = kern.POLICY_CODES[policy]
    n_arr = n_svc = 1
    while True:
        arr_u = np.stack([_unit_blocks(child(seed, 0, j), "arrival", n_arr) for j in range(k)])
        svc_u = np.stack([_unit_blocks(child(seed, 1, j), "service", n_svc) for j in range(k)])
        status, cost, completed, soj, arrivals = kern.run_path(
            arr_u, svc_u, arr_p, svc_p, nom_p, weights, float(config.horizon), code
        )
        if status == kern.OK:
            break
        if status == kern.NEED_ARRIVALS:
            n_arr *= 2
        else:
            n_svc *= 2
    completed = [int(c) for c in completed]
    arrivals = [int(a) for a in arrivals]
    mean_soj = [soj[j] / completed[j] if completed[j] else math.nan for j in range(k)]
    in_system = [arrivals[j] - completed[j] for j in range(k)]
    return SamplePathResult(float(cost), completed, mean_soj, in_system, arrivals)


def _simulate_python(config: QueueConfig, seed, policy, record: bool) -> SamplePathResult:
    choose = resolve_policy(policy)
    classes = config.classes
    k = len(classes)
    horizon = config.horizon
    arr_streams = [_Stream(child(seed, 0, j), "arrival") for j in range(k)]
    svc_streams = [_Stream(child(seed, 1, j), "service") for j in range(k)]
    weights = [c.weight for c in classes]
    arr_rate = [c.arrival for c in classes]
    svc_rate = [c.service for c in classes]

    queues = [deque([0.0]) for _ in range(k)]  # one job per class at t = 0
    arrivals = [1] * k
    next_arr = [
        math.inf if arr_rate[j].is_off else arr_streams[j].next() / arr_rate[j](0.0)
        for j in range(k)
    ]
    completed = [0] * k
    sojourn_sum = [0.0] * k
    cost = 0.0
    trace = [] if record else None
    jobs = [] if record else None
    t = 0.0

    while t < horizon:
        for j in range(k):
            na = next_arr[j]
            if na <= t:
                q = queues[j]
                while na <= t:
                    q.append(na)
                    arrivals[j] += 1
                    if record:
                        trace.append((na, "arrival", j))
                    na += arr_streams[j].next() / arr_rate[j](na)
                next_arr[j] = na
        lengths = [len(q) for q in queues]
        if not any(lengths):
            t = min(next_arr)
            continue
        view = QueueView(t, [q[0] if q else None for q in queues], lengths, classes)
        j = choose(view)
        if not (0 <= j < k) or not queues[j]:
            raise InvalidArgumentError(f"policy chose class {j}, which has no waiting job")
        a = queues[j].popleft()
        done = t + svc_streams[j].next() / svc_rate[j](t)
        if record:
            trace.append((t, "start", j, tuple(lengths)))
        w = weights[j]
        if done <= horizon:
            soj = done - a
            cost += w * soj * soj
            completed[j] += 1
            sojourn_sum[j] += soj
            if record:
                trace.append((done, "departure", j))
                jobs.append((j, w, a, done))
        else:
            cost += w * (horizon - a) ** 2
            if record:
                jobs.append((j, w, a, math.inf))
        t = done

    # jobs arriving before the horizon and still waiting
    for j in range(k):
        q = queues[j]
        na = next_arr[j]
        while na <= horizon:
            q.append(na)
            arrivals[j] += 1
            if record:
                trace.append((na, "arrival", j))
            na += arr_streams[j].next() / arr_rate[j](na)
        for a in q:
            cost += weights[j] * (horizon - a) ** 2
            if record:
                jobs.append((j, weights[j], a, math.inf))

    in_system = [arrivals[j] - completed[j] for j in range(k)]
    mean_soj = [sojourn_sum[j] / completed[j] if completed[j] else math.nan for j in range(k)]
    return SamplePathResult(cost, completed, mean_soj, in_system, arrivals, trace, jobs)


@dataclass(frozen=True)
class BatchResult:
    sample: CostSample
    mean: float
    sd: float
    policy: str
    scenario: str

    @property
    def se(self) -> float:
        return self.sd / math.sqrt(self.sample.n)

    def stability(self, y: float):
        return estimate_stability(self.sample, y)


def run_batch(config: QueueConfig, n_paths: int, seed, policy=None, engine: str = "auto") -> BatchResult:
    """Simulate ``n_paths`` independent paths; path i uses substream (seed, i)."""
    n_paths = int(n_paths)
    if n_paths < 1:
        raise InvalidArgumentError("n_paths must be >= 1")
    costs = np.empty(n_paths)
    for i in range(n_paths):
        costs[i] = simulate_path(config, child(seed, i), policy, engine=engine).cumulative_cost
    s = CostSample(costs)
    pol = policy if isinstance(policy, str) else (config.policy if policy is None else getattr(policy, "__name__", "custom"))
    return BatchResult(s, s.mean, s.std, pol, config.name)
