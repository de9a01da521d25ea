"""Scenario orchestration: N-trial perturbation ensembles and their statistics.

A scenario pairs two chain families (one per decay class), perturbs each
with independent seeded draws, fits every perturbed trajectory with the
family's model class, and aggregates the deviation/alteration quantifiers
into histograms, scatter pairs and means.
"""

from __future__ import annotations

import csv
import enum
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from typing import NamedTuple, Sequence

import numpy as np

from .chain import CorrelationSeries, LanczosChain, propagate
from .design import edo_chain, exponential_chain, gaussian_chain, linear_continuation
from .fitting import (FitModel, ModelClass, detect_equilibration, epsilon,
                      fit, sigma)
from .perturb import POSITIVITY_FLOOR, apply_draw, draw_noise
from .reverse import AnalyticCorrelation, fourier_of_correlation, lanczos_from_spectrum

__all__ = [
    "Scenario",
    "ScenarioConfig",
    "TrialRecord",
    "Histogram",
    "FamilySummary",
    "EnsembleSummary",
    "run_scenario",
    "histogram",
    "summarize",
    "build_families",
    "records_to_csv",
    "records_from_csv",
    "worker_count",
]

ENV_THREADS = "MORILAB_THREADS"


class Scenario(enum.Enum):
    DECAY = "decay"
    OSCILLATION = "oscillation"
    PATHOLOGICAL_DECAY = "pathological_decay"
    PATHOLOGICAL_OSCILLATION = "pathological_oscillation"

    @property
    def pathological(self) -> bool:
        return self in (Scenario.PATHOLOGICAL_DECAY,
                        Scenario.PATHOLOGICAL_OSCILLATION)

    @property
    def oscillating(self) -> bool:
        return self in (Scenario.OSCILLATION,
                        Scenario.PATHOLOGICAL_OSCILLATION)


# profile -> (d, n_trials, dt)
_PROFILES = {"desk": (2000, 200, 0.02), "paper": (10000, 1000, 0.01)}


@dataclass
class ScenarioConfig:
    """Complete, reproducible description of one ensemble run."""

    scenario: Scenario
    d: int = 2000
    n_f: int | None = None          # None: d//3, or d for pathological runs
    n_trials: int = 200
    strength: float | None = None   # None: 0.5 decay-type, 0.1 oscillation-type
    dt: float = 0.02
    t_max: float | None = None      # None: 40 decay-type, 30 oscillation-type
    base_seed: int = 0
    n_star: int = 150
    a: float = 1.2
    b1: float = 2.0
    b2: float = 1.6
    bin_width: float | None = None  # None: 5e-4, or 5e-3 for pathological runs
    eq_threshold: float = 0.01
    eq_window: float = 5.0
    floor: float = POSITIVITY_FLOOR
    reverse_n_max: int = 50
    workers: int | None = None
    profile: str = "desk"

    def __post_init__(self):
        if isinstance(self.scenario, str):
            self.scenario = Scenario(self.scenario)
        if self.n_f is None:
            self.n_f = self.d if self.scenario.pathological else self.d // 3
        if self.strength is None:
            self.strength = 0.1 if self.scenario.oscillating else 0.5
        if self.t_max is None:
            self.t_max = 30.0 if self.scenario.oscillating else 40.0
        if self.bin_width is None:
            self.bin_width = 5e-3 if self.scenario.pathological else 5e-4
        if self.d < 4:
            raise ValueError("d must be >= 4")
        if not 1 <= self.n_f <= self.d:
            raise ValueError("require 1 <= n_f <= d")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.strength < 0:
            raise ValueError("strength must be nonnegative")
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.bin_width <= 0:
            raise ValueError("bin_width must be positive")
        if not 1 <= self.n_star < self.d:
            raise ValueError("require 1 <= n_star < d")

    @classmethod
    def preset(cls, scenario, profile: str = "desk", **overrides) -> "ScenarioConfig":
        if profile not in _PROFILES:
            raise ValueError(f"unknown profile {profile!r} (desk or paper)")
        d, trials, dt = _PROFILES[profile]
        base = dict(scenario=scenario, d=d, n_trials=trials, dt=dt, profile=profile)
        base.update(overrides)
        return cls(**base)

    def to_json_dict(self) -> dict:
        out = asdict(self)
        out["scenario"] = self.scenario.value
        return out


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    family: str
    seed: int
    model: str
    a: float
    mu: float
    omega: float | None
    phi: float | None
    epsilon: float
    sigma: float
    eps0: float
    n_eq: int
    equilibrated: bool
    clamp_count: int
    converged: bool
    valid: bool


class Histogram(NamedTuple):
    """Left-closed uniform bins anchored at zero."""

    edges: np.ndarray
    counts: np.ndarray


def histogram(values: Sequence[float], bin_width: float) -> Histogram:
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return Histogram(np.array([0.0, bin_width]), np.zeros(1, dtype=int))
    if values.min() < 0:
        raise ValueError("histogram values must be nonnegative")
    idx = np.floor(values / bin_width).astype(int)
    counts = np.bincount(idx)
    edges = np.arange(counts.size + 1) * bin_width
    return Histogram(edges, counts)


@dataclass
class FamilySummary:
    family: str
    mean_epsilon: float
    mean_sigma: float
    n_valid: int
    n_invalid: int
    n_nonequilibrated: int
    histogram: Histogram

    def to_json_dict(self) -> dict:
        return {"family": self.family, "mean_epsilon": self.mean_epsilon,
                "mean_sigma": self.mean_sigma, "n_valid": self.n_valid,
                "n_invalid": self.n_invalid,
                "n_nonequilibrated": self.n_nonequilibrated,
                "histogram": {"edges": self.histogram.edges.tolist(),
                              "counts": self.histogram.counts.tolist()}}


@dataclass
class EnsembleSummary:
    families: dict[str, FamilySummary]
    n_trials: int
    bin_width: float

    def scatter(self, records: Sequence[TrialRecord], family: str) -> np.ndarray:
        pairs = [(r.sigma, r.epsilon) for r in records if r.family == family]
        return np.array(pairs) if pairs else np.empty((0, 2))

    def to_json_dict(self) -> dict:
        return {"n_trials": self.n_trials, "bin_width": self.bin_width,
                "families": {k: v.to_json_dict() for k, v in self.families.items()}}


def summarize(records: Sequence[TrialRecord], bin_width: float) -> EnsembleSummary:
    """Per-family means and histograms; invalid trials counted but excluded."""
    families: dict[str, FamilySummary] = {}
    names = list(dict.fromkeys(r.family for r in records))
    n_trials = len({r.trial for r in records})
    for name in names:
        fam = [r for r in records if r.family == name]
        valid = [r for r in fam if r.valid]
        if not valid:
            continue
        eps_arr = np.array([r.epsilon for r in valid])
        families[name] = FamilySummary(
            family=name,
            mean_epsilon=float(eps_arr.mean()),
            mean_sigma=float(np.mean([r.sigma for r in valid])),
            n_valid=len(valid),
            n_invalid=len(fam) - len(valid),
            n_nonequilibrated=sum(not r.equilibrated for r in fam),
            histogram=histogram(eps_arr, bin_width),
        )
    return EnsembleSummary(families, n_trials, bin_width)


# ---------------------------------------------------------------------------
# family construction
# ---------------------------------------------------------------------------

class Family(NamedTuple):
    name: str
    chain: LanczosChain
    model_class: ModelClass


def build_families(config: ScenarioConfig) -> list[Family]:
    """The two competing chain designs for the configured scenario."""
    if config.scenario.oscillating:
        target = AnalyticCorrelation(gauss_rate=-0.125, cos_freq=2.0)
        density = fourier_of_correlation(target, n_max=config.reverse_n_max)
        prefix = lanczos_from_spectrum(density, config.reverse_n_max)
        cont = linear_continuation(prefix.b, config.d, label="gdo")
        edo = edo_chain(config.b1, config.b2, (cont.slope, cont.intercept),
                        config.d)
        return [Family("gdo", cont.chain, ModelClass.GAUSS_COS),
                Family("edo", edo, ModelClass.EXP_COS)]
    return [Family("g", gaussian_chain(config.n_star, config.d), ModelClass.GAUSS),
            Family("e", exponential_chain(config.a, config.n_star, config.d),
                   ModelClass.EXP)]


def trial_seed(base_seed: int, family_index: int, trial: int) -> int:
    """Deterministic per-(family, trial) RNG seed, order-independent."""
    ss = np.random.SeedSequence(entropy=base_seed,
                                spawn_key=(family_index, trial))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class _FamilyContext:
    """Everything a worker needs: immutable and cheap to pickle."""

    name: str
    index: int
    base_b: np.ndarray
    model_class: ModelClass
    c0: np.ndarray
    f0_params: tuple
    config: ScenarioConfig


def _run_one_trial(ctx: _FamilyContext, trial: int) -> TrialRecord:
    cfg = ctx.config
    seed = trial_seed(cfg.base_seed, ctx.index, trial)
    base = LanczosChain(ctx.base_b, label=ctx.name)
    draw = draw_noise(cfg.d, cfg.n_f, seed)
    pert = apply_draw(base, cfg.strength, draw, floor=cfg.floor)
    series = propagate(pert.chain, dt=cfg.dt, t_max=cfg.t_max)
    n_eq, equilibrated = detect_equilibration(series, cfg.eq_threshold,
                                              cfg.eq_window)
    result = fit(series, ctx.model_class, n_eq, warm_starts=[ctx.f0_params])
    c0_series = CorrelationSeries(cfg.dt, ctx.c0, label=ctx.name)
    sig = sigma(series, c0_series, n_eq)
    eps0 = epsilon(c0_series, FitModel(ctx.model_class, ctx.f0_params), n_eq)
    m = result.model
    return TrialRecord(
        trial=trial, family=ctx.name, seed=seed, model=m.kind.value,
        a=m.a, mu=m.mu, omega=m.omega, phi=m.phi,
        epsilon=result.epsilon, sigma=sig, eps0=eps0, n_eq=n_eq,
        equilibrated=equilibrated, clamp_count=pert.clamp_count,
        converged=result.converged,
        valid=not pert.invalid and result.converged)


def _run_block(args) -> list[TrialRecord]:
    ctx, trials = args
    return [_run_one_trial(ctx, t) for t in trials]


def worker_count(config: ScenarioConfig) -> int:
    if config.workers is not None:
        return max(1, config.workers)
    env = os.environ.get(ENV_THREADS)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_scenario(config: ScenarioConfig,
                 progress=None) -> tuple[list[TrialRecord], EnsembleSummary]:
    """Run the configured ensemble; deterministic for a fixed config.

    Each family is perturbed by its own independent seeded draws (seeds
    derived from (base_seed, family index, trial index), so the record set
    is invariant under execution order and worker count).  Trials whose
    draw overwhelms the chain (clamp overflow) or whose fit never converged
    are recorded with valid = False and excluded from the means.
    """
    families = build_families(config)
    contexts = []
    for idx, fam in enumerate(families):
        c0 = propagate(fam.chain, dt=config.dt, t_max=config.t_max)
        n_eq0, _ = detect_equilibration(c0, config.eq_threshold, config.eq_window)
        f0 = fit(c0, fam.model_class, n_eq0)
        contexts.append(_FamilyContext(
            name=fam.name, index=idx, base_b=fam.chain.b,
            model_class=fam.model_class, c0=c0.values,
            f0_params=tuple(f0.model.params), config=config))

    jobs: list[tuple[_FamilyContext, list[int]]] = []
    n_workers = worker_count(config)
    block = max(1, config.n_trials // max(1, n_workers * 4))
    for ctx in contexts:
        for lo in range(0, config.n_trials, block):
            jobs.append((ctx, list(range(lo, min(lo + block, config.n_trials)))))

    records: list[TrialRecord] = []
    if n_workers == 1 or len(jobs) == 1:
        for job in jobs:
            records.extend(_run_block(job))
            if progress:
                progress(len(records), config.n_trials * len(contexts))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for part in pool.map(_run_block, jobs):
                records.extend(part)
                if progress:
                    progress(len(records), config.n_trials * len(contexts))

    records.sort(key=lambda r: (r.trial, r.family))
    return records, summarize(records, config.bin_width)


# ---------------------------------------------------------------------------
# flat-file exports
# ---------------------------------------------------------------------------

_RECORD_FIELDS = ["trial", "family", "seed", "model", "A", "mu", "omega", "phi",
                  "epsilon", "sigma", "eps0", "n_eq", "equilibrated",
                  "clamp_count", "converged", "valid"]


def records_to_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_RECORD_FIELDS)
        for r in records:
            w.writerow([
                r.trial, r.family, r.seed, r.model, repr(r.a), repr(r.mu),
                "" if r.omega is None else repr(r.omega),
                "" if r.phi is None else repr(r.phi),
                repr(r.epsilon), repr(r.sigma), repr(r.eps0), r.n_eq,
                int(r.equilibrated), r.clamp_count, int(r.converged),
                int(r.valid)])


def records_from_csv(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _RECORD_FIELDS:
        raise ValueError(f"{path}: unexpected records header")
    out = []
    for row in rows[1:]:
        out.append(TrialRecord(
            trial=int(row[0]), family=row[1], seed=int(row[2]), model=row[3],
            a=float(row[4]), mu=float(row[5]),
            omega=None if row[6] == "" else float(row[6]),
            phi=None if row[7] == "" else float(row[7]),
            epsilon=float(row[8]), sigma=float(row[9]), eps0=float(row[10]),
            n_eq=int(row[11]), equilibrated=bool(int(row[12])),
            clamp_count=int(row[13]), converged=bool(int(row[14])),
            valid=bool(int(row[15]))))
    return out


def histogram_to_csv(summary: EnsembleSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_left", "bin_right", "family", "count"])
        for name, fam in summary.families.items():
            h = fam.histogram
            for i, count in enumerate(h.counts):
                w.writerow([repr(float(h.edges[i])), repr(float(h.edges[i + 1])),
                            name, int(count)])


def scatter_to_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "sigma", "epsilon"])
        for r in records:
            w.writerow([r.family, repr(r.sigma), repr(r.epsilon)])
