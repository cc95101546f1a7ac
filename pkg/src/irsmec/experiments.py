"""Monte Carlo harness: schemes, trials, sweeps and table emission.

A trial draws one placement and one channel realisation from its seed and
runs a scheme on it.  Schemes evaluated with the same seed see the same
channels, so per-trial comparisons between schemes are meaningful.

Per-trial seeds are ``stable_mix(base_seed, param_index, trial_index)``:
the three integers are hashed by :class:`numpy.random.SeedSequence`, whose
mixing function is fixed and platform independent, and the first 64-bit
word of its state becomes the PCG64 seed.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .channel import (
    composite_amplitude,
    am_discrete_phases,
    inverse_gain,
    optimal_phases_continuous,
    quantize_phases,
)
from .errors import ConvergenceError, ValidationError
from .model import DeviceArrays
from .scenario import ScenarioConfig, build_channels, place_devices
from .solvers import (
    DEFAULT_RHO,
    SolverReport,
    all_local_solve,
    all_offload_solve,
    enumerate_solve,
    greedy_solve,
    penalty_solve,
)

ALGORITHMS = ("greedy", "penalty", "enumerate", "all_offload", "all_local")
PHASE_MODES = ("irs", "no_irs", "discrete", "quantized")

#: scheme names accepted without a level count
PLAIN_SCHEMES = (
    "greedy_irs",
    "penalty_irs",
    "enumerate_irs",
    "all_offload_irs",
    "all_local",
    "greedy_no_irs",
    "penalty_no_irs",
    "enumerate_no_irs",
    "all_offload_no_irs",
)
#: scheme families that take a level count, written ``greedy_discrete:3`` or ``greedy_discrete(3)``
LEVEL_SCHEMES = (
    "greedy_discrete",
    "penalty_discrete",
    "enumerate_discrete",
    "all_offload_discrete",
    "greedy_quantized",
    "penalty_quantized",
    "enumerate_quantized",
    "all_offload_quantized",
)

TABLE_COLUMNS = (
    "param_name",
    "param_value",
    "scheme",
    "trials",
    "failed_trials",
    "mean_energy_J",
    "std_energy_J",
    "mean_solver_time_s",
    "offload_prob_all",
    "offload_prob_near_irs",
    "offload_prob_near_server",
)
GROUP_COLUMNS = (
    "param_name",
    "param_value",
    "scheme",
    "trials",
    "mean_energy_near_irs_J",
    "mean_energy_near_server_J",
)
SWEPT_PARAMS = ("M", "N", "L")


@dataclass(frozen=True)
class Scheme:
    """An algorithm paired with a way of choosing the IRS phases.

    ``phases`` is ``"irs"`` (continuous co-phasing), ``"no_irs"`` (``M = 0``),
    ``"discrete"`` (quantise, then alternating maximisation) or
    ``"quantized"`` (quantisation only).  ``L`` of ``None`` on a discrete
    scheme means "use the scenario's ``L``".
    """

    algorithm: str
    phases: str = "irs"
    L: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValidationError(f"unknown algorithm {self.algorithm!r}")
        if self.phases not in PHASE_MODES:
            raise ValidationError(f"unknown phase mode {self.phases!r}")
        if self.L is not None and (self.phases not in ("discrete", "quantized") or self.L < 1):
            raise ValidationError(f"level count {self.L!r} is not valid for {self.phases!r} phases")

    @property
    def name(self) -> str:
        if self.algorithm == "all_local":
            return "all_local"
        base = f"{self.algorithm}_{self.phases}"
        return base if self.L is None else f"{base}:{self.L}"

    def levels(self, cfg: ScenarioConfig) -> int:
        L = self.L if self.L is not None else cfg.sys.L
        if L is None:
            raise ValidationError(f"scheme {self.name} needs a level count: set system.L or write {self.name}:L")
        return int(L)


def valid_scheme_names() -> list[str]:
    return list(PLAIN_SCHEMES) + [f"{s}:L" for s in LEVEL_SCHEMES]


_SCHEME_RE = re.compile(r"^([a-z_]+?)(?:[:(](\d+)\)?)?$")


def parse_scheme(text: str) -> Scheme:
    """Parse a scheme name such as ``penalty_irs`` or ``greedy_discrete:3``."""
    if isinstance(text, Scheme):
        return text
    m = _SCHEME_RE.match(str(text).strip())
    if m is not None:
        base, level = m.group(1), m.group(2)
        if base == "all_local" and level is None:
            return Scheme("all_local", "irs")
        if level is None and base in PLAIN_SCHEMES:
            algo, _, phases = base.rpartition("_no_irs")
            if phases == "" and algo:
                return Scheme(algo, "no_irs")
            algo, _, _ = base.rpartition("_irs")
            return Scheme(algo, "irs")
        if base in LEVEL_SCHEMES:
            algo, _, phases = base.rpartition("_")
            return Scheme(algo, phases, None if level is None else int(level))
    raise ValidationError(f"unknown scheme {text!r}; valid schemes: {', '.join(valid_scheme_names())}")


@dataclass(frozen=True)
class SolverOptions:
    """Knobs forwarded to the penalty solver."""

    rho: float = DEFAULT_RHO
    max_iter: int = 500
    tol: float = 1e-8
    round_tol: float = 1e-6


@dataclass
class TrialMetrics:
    """Outcome of one scheme on one random instance."""

    scheme: str
    param_value: float
    total_energy: float
    per_group_energy: dict
    offloaded: tuple
    solver_wall_time: float
    phase_wall_time: float
    seed: int
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class SweepConfig:
    scenario: ScenarioConfig
    swept_param: str
    values: tuple
    trials: int = 300
    base_seed: int = 0
    schemes: tuple = ()
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.swept_param not in SWEPT_PARAMS:
            raise ValidationError(f"swept_param must be one of {SWEPT_PARAMS}, got {self.swept_param!r}")
        if not self.values:
            raise ValidationError("sweep values must be non-empty")
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(parse_scheme(s) for s in self.schemes))
        if not self.schemes:
            raise ValidationError("at least one scheme is required")

    def scenario_at(self, value) -> ScenarioConfig:
        return self.scenario.with_sys(**{self.swept_param: int(value)})


@dataclass
class SweepRow:
    param_name: str
    param_value: float
    scheme: str
    trials: int
    failed_trials: int
    mean_energy_J: float
    std_energy_J: float
    mean_solver_time_s: float
    offload_prob_all: float
    offload_prob_near_irs: float
    offload_prob_near_server: float


@dataclass
class GroupRow:
    param_name: str
    param_value: float
    scheme: str
    trials: int
    mean_energy_near_irs_J: float
    mean_energy_near_server_J: float


@dataclass
class SweepResult:
    rows: list
    groups: list
    trials: list


def stable_mix(base_seed: int, param_index: int, trial_index: int) -> int:
    """Deterministic 64-bit seed for one trial of a sweep."""
    ss = np.random.SeedSequence([int(base_seed), int(param_index), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0])


# ---------------------------------------------------------------------------
# trials


def draw_instance(cfg: ScenarioConfig, seed: int):
    """Placement and channels for ``seed`` (placement first, then g, h, r)."""
    rng = np.random.default_rng(seed)
    pos = place_devices(cfg, rng)
    return pos, build_channels(cfg, pos, rng)


def scheme_phases(scheme: Scheme, cfg: ScenarioConfig, channels):
    """Phase matrix ``(N, M)`` and inverse gains ``b`` for one scheme."""
    ch = channels.without_irs() if scheme.phases == "no_irs" else channels
    theta = optimal_phases_continuous(ch.g, ch.h, ch.r)
    if scheme.phases in ("discrete", "quantized"):
        L = scheme.levels(cfg)
        theta = quantize_phases(theta, L)
        if scheme.phases == "discrete":
            theta = am_discrete_phases(ch.g, ch.h, ch.r, L, theta)
    gain2 = composite_amplitude(ch.g, ch.h, ch.r, theta) ** 2
    if scheme.phases == "no_irs":
        theta = np.zeros((cfg.sys.N, cfg.sys.M))
    return theta, inverse_gain(gain2, cfg.sys.sigma2)


def run_scheme(scheme: Scheme, cfg: ScenarioConfig, b, theta, options: SolverOptions = SolverOptions()) -> SolverReport:
    devs, sys = cfg.devs, cfg.sys
    if scheme.algorithm == "greedy":
        return greedy_solve(devs, sys, b, theta)
    if scheme.algorithm == "penalty":
        return penalty_solve(
            devs, sys, b, rho=options.rho, theta=theta,
            max_iter=options.max_iter, tol=options.tol, round_tol=options.round_tol,
        )
    if scheme.algorithm == "enumerate":
        return enumerate_solve(devs, sys, b, theta)
    if scheme.algorithm == "all_offload":
        return all_offload_solve(devs, sys, b, theta)
    return all_local_solve(devs, sys, b, theta)


def device_energies(cfg: ScenarioConfig, sol) -> np.ndarray:
    arr = DeviceArrays(cfg.devs)
    return np.where(sol.beta == 1, sol.P * sol.tau, arr.epsilon * arr.S * arr.C * sol.f**2)


def _metrics(cfg, scheme, param_value, seed, report, solver_time, phase_time) -> TrialMetrics:
    per_dev = device_energies(cfg, report.solution)
    near = cfg.near_irs
    return TrialMetrics(
        scheme=scheme.name,
        param_value=param_value,
        total_energy=float(report.objective),
        per_group_energy={
            "near_irs": float(np.sum(per_dev[near])),
            "near_server": float(np.sum(per_dev[~near])),
        },
        offloaded=tuple(bool(x) for x in report.solution.beta == 1),
        solver_wall_time=solver_time,
        phase_wall_time=phase_time,
        seed=int(seed),
    )


def _failed(cfg, scheme, param_value, seed, exc) -> TrialMetrics:
    return TrialMetrics(
        scheme=scheme.name,
        param_value=param_value,
        total_energy=math.nan,
        per_group_energy={"near_irs": math.nan, "near_server": math.nan},
        offloaded=tuple([False] * cfg.sys.N),
        solver_wall_time=math.nan,
        phase_wall_time=math.nan,
        seed=int(seed),
        failed=True,
        error=f"{type(exc).__name__}: {exc}",
    )


def run_trial_schemes(cfg, schemes, seed, param_value=math.nan, options: SolverOptions = SolverOptions(), keep_reports=False):
    """Run several schemes on the same random instance.

    Only the solver call is counted in ``solver_wall_time``; phase design and
    the computation of ``b`` go to ``phase_wall_time``.  A convergence error
    marks the trial failed instead of propagating.
    """
    _, channels = draw_instance(cfg, seed)
    out, reports = [], []
    for scheme in schemes:
        scheme = parse_scheme(scheme)
        t0 = time.perf_counter()
        theta, b = scheme_phases(scheme, cfg, channels)
        t1 = time.perf_counter()
        try:
            report = run_scheme(scheme, cfg, b, theta, options)
        except ConvergenceError as exc:
            out.append(_failed(cfg, scheme, param_value, seed, exc))
            reports.append(None)
            continue
        t2 = time.perf_counter()
        out.append(_metrics(cfg, scheme, param_value, seed, report, t2 - t1, t1 - t0))
        reports.append((report, b))
    return (out, reports) if keep_reports else out


def run_trial(cfg: ScenarioConfig, scheme, seed: int, param_value=math.nan, options: SolverOptions = SolverOptions()) -> TrialMetrics:
    return run_trial_schemes(cfg, [scheme], seed, param_value, options)[0]


# ---------------------------------------------------------------------------
# sweeps


def _sweep_job(args):
    sweep, param_index, trial_index = args
    value = sweep.values[param_index]
    cfg = sweep.scenario_at(value)
    seed = stable_mix(sweep.base_seed, param_index, trial_index)
    return run_trial_schemes(cfg, sweep.schemes, seed, float(value), sweep.solver)


def _aggregate(sweep: SweepConfig, value, cfg: ScenarioConfig, metrics: list):
    near = cfg.near_irs
    rows, groups = [], []
    for scheme in sweep.schemes:
        ok = [m for m in metrics if m.scheme == scheme.name and not m.failed]
        failed = sum(1 for m in metrics if m.scheme == scheme.name and m.failed)
        energy = np.array([m.total_energy for m in ok])
        if sweep.swept_param == "M":
            times = np.array([m.solver_wall_time + m.phase_wall_time for m in ok])
        else:
            times = np.array([m.solver_wall_time for m in ok])
        flags = np.array([m.offloaded for m in ok], dtype=float).reshape(len(ok), cfg.sys.N)

        def _mean(x):
            return float(np.mean(x)) if x.size else math.nan

        rows.append(
            SweepRow(
                param_name=sweep.swept_param,
                param_value=float(value),
                scheme=scheme.name,
                trials=len(ok),
                failed_trials=failed,
                mean_energy_J=_mean(energy),
                std_energy_J=float(np.std(energy)) if energy.size else math.nan,
                mean_solver_time_s=_mean(times),
                offload_prob_all=_mean(flags),
                offload_prob_near_irs=_mean(flags[:, near]),
                offload_prob_near_server=_mean(flags[:, ~near]),
            )
        )
        groups.append(
            GroupRow(
                param_name=sweep.swept_param,
                param_value=float(value),
                scheme=scheme.name,
                trials=len(ok),
                mean_energy_near_irs_J=_mean(np.array([m.per_group_energy["near_irs"] for m in ok])),
                mean_energy_near_server_J=_mean(np.array([m.per_group_energy["near_server"] for m in ok])),
            )
        )
    return rows, groups


def run_sweep(sweep: SweepConfig, parallel: int = 1, record_timing: bool = True) -> SweepResult:
    """Run every (value, trial) pair and aggregate per (value, scheme).

    Results do not depend on ``parallel``: each trial owns its seed and the
    aggregation walks trials in index order.  With ``record_timing`` false
    all wall times are written as 0 so that tables are byte-reproducible.
    """
    jobs = [(sweep, p, t) for p in range(len(sweep.values)) for t in range(sweep.trials)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_sweep_job, jobs, chunksize=max(1, len(jobs) // (4 * parallel))))
    else:
        results = [_sweep_job(j) for j in jobs]
    all_trials = [m for r in results for m in r]
    if not record_timing:
        for m in all_trials:
            if not m.failed:
                m.solver_wall_time = 0.0
                m.phase_wall_time = 0.0

    rows, groups = [], []
    for p, value in enumerate(sweep.values):
        cfg = sweep.scenario_at(value)
        chunk = [m for r in results[p * sweep.trials:(p + 1) * sweep.trials] for m in r]
        r, g = _aggregate(sweep, value, cfg, chunk)
        rows += r
        groups += g
    return SweepResult(rows=rows, groups=groups, trials=all_trials)


# ---------------------------------------------------------------------------
# tables


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _columns_for(rows):
    if rows and isinstance(rows[0], GroupRow):
        return GROUP_COLUMNS
    if rows and isinstance(rows[0], BenchRow):
        return BENCH_COLUMNS
    return TABLE_COLUMNS


def format_table(rows, fmt: str = "csv", columns=None) -> str:
    """Serialise rows as CSV or JSON text.

    Floats are written with ``repr`` (shortest round-tripping form, always a
    ``.`` decimal point); NaN is written as ``nan`` in CSV and ``null`` in JSON.
    """
    columns = tuple(columns or _columns_for(rows))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            d = asdict(row) if not isinstance(row, dict) else row
            w.writerow([_fmt(d[c]) for c in columns])
        return buf.getvalue()
    if fmt == "json":
        out = []
        for row in rows:
            d = asdict(row) if not isinstance(row, dict) else row
            out.append({c: _json_value(d[c]) for c in columns})
        return json.dumps(out, indent=2) + "\n"
    raise ValidationError(f"format must be 'csv' or 'json', got {fmt!r}")


def _json_value(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return None if math.isnan(x) else float(x)
    return x


def emit_table(rows, path, fmt: str | None = None, columns=None) -> str:
    """Write rows to ``path``; the format defaults to the file extension."""
    path = os.fspath(path)
    if fmt is None:
        fmt = os.path.splitext(path)[1].lstrip(".").lower()
    text = format_table(rows, fmt, columns)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def _parse_cell(name, text, row_type):
    kind = {f.name: f.type for f in fields(row_type)}[name]
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def parse_table(text: str, fmt: str = "csv", row_type=SweepRow) -> list:
    """Inverse of :func:`format_table`."""
    names = [f.name for f in fields(row_type)]
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None:
            return []
        if tuple(header) != tuple(names):
            raise ValidationError(f"unexpected CSV header {header}")
        return [row_type(**{k: _parse_cell(k, v, row_type) for k, v in zip(header, rec)}) for rec in reader if rec]
    if fmt == "json":
        out = []
        for d in json.loads(text):
            if sorted(d) != sorted(names):
                raise ValidationError(f"unexpected JSON keys {sorted(d)}")
            vals = {k: (math.nan if d[k] is None else _parse_cell(k, str(d[k]), row_type)) for k in names}
            out.append(row_type(**vals))
        return out
    raise ValidationError(f"format must be 'csv' or 'json', got {fmt!r}")


def read_table(path, fmt: str | None = None, row_type=SweepRow) -> list:
    path = os.fspath(path)
    if fmt is None:
        fmt = os.path.splitext(path)[1].lstrip(".").lower()
    with open(path, encoding="utf-8") as fh:
        return parse_table(fh.read(), fmt, row_type)


def with_schemes(sweep: SweepConfig, schemes) -> SweepConfig:
    return replace(sweep, schemes=tuple(parse_scheme(s) for s in schemes))


# ---------------------------------------------------------------------------
# solver timing


BENCH_COLUMNS = (
    "param_name",
    "param_value",
    "algorithm",
    "repetitions",
    "median_time_s",
    "mean_time_s",
    "ratio_to_first",
)


@dataclass
class BenchRow:
    param_name: str
    param_value: float
    algorithm: str
    repetitions: int
    median_time_s: float
    mean_time_s: float
    ratio_to_first: float


def run_bench(
    cfg: ScenarioConfig,
    param: str,
    values,
    algorithms=("greedy", "penalty"),
    repetitions: int = 20,
    base_seed: int = 0,
    options: SolverOptions = SolverOptions(),
    record_timing: bool = True,
) -> list:
    """Wall-clock time of solver calls, one fresh instance per repetition.

    For an ``N`` sweep only the solver call is timed.  For an ``M`` sweep the
    continuous phase design and the computation of ``b`` are included, since
    that step is what grows with ``M``.  ``ratio_to_first`` divides each
    median by the median at the first value of the same algorithm.
    """
    if param not in ("N", "M"):
        raise ValidationError(f"bench sweeps N or M, got {param!r}")
    if repetitions < 1:
        raise ValidationError("repetitions must be >= 1")
    schemes = [Scheme(a, "irs") for a in algorithms]
    times = {(i, s.algorithm): [] for i in range(len(values)) for s in schemes}
    for i, value in enumerate(values):
        c = cfg.with_sys(**{param: int(value)})
        for rep in range(repetitions):
            metrics = run_trial_schemes(c, schemes, stable_mix(base_seed, i, rep), float(value), options)
            for s, m in zip(schemes, metrics):
                if m.failed:
                    continue
                t = m.solver_wall_time + (m.phase_wall_time if param == "M" else 0.0)
                times[(i, s.algorithm)].append(t if record_timing else 0.0)
    rows = []
    for s in schemes:
        first = None
        for i, value in enumerate(values):
            t = np.array(times[(i, s.algorithm)])
            med = float(np.median(t)) if t.size else math.nan
            if first is None:
                first = med
            ratio = med / first if first and first > 0 else math.nan
            rows.append(
                BenchRow(
                    param_name=param,
                    param_value=float(value),
                    algorithm=s.algorithm,
                    repetitions=int(t.size),
                    median_time_s=med,
                    mean_time_s=float(np.mean(t)) if t.size else math.nan,
                    ratio_to_first=ratio,
                )
            )
    return rows
