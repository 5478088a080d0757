"""
Run driver: method dispatch, parameter sweeps and artifacts on disk.

Every command writes its CSV files and a ``manifest.json`` into the output
directory. Sweep points (and, for single determinant runs, chunks of the
time grid) are spread over a thread pool; results are gathered in input
order so the files do not depend on the thread count.
"""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse.linalg import ArpackError

from app.config import settings
from app.exceptions import (ConfigError, DegenerateEstimateError, DispatchError, InsufficientDataError,
                            NumericalFailureError)
from app.models import Boundary, ChainSpec, CouplingSpec, Method, RunConfig, RunManifest
from app.services import latticecompiler
from app.services.echo import (DETERMINANT_EXPONENT, DeterminantEcho, EchoSeries, echo_central_spin)
from app.services.ed_oracle import default_sector_rule, dense_hamiltonian, echo_ed, echo_trotter, ground_state
from app.services.entanglement import alpha_vs_concurrence
from app.services.freefermion import diagonalize
from app.services.model import build_quadratic_form, resolve_sites
from app.services.perturbation import (alpha_perturbative, alpha_variance, fit_alpha, fit_critical_scaling,
                                       fit_envelope, fit_log_divergence, fit_plateau, minimum_before_revival,
                                       oscillation_frequency, plateau_perturbative, strong_coupling_regime)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepPoint:
    index: int
    param: Optional[str]
    value: Optional[float]
    chain: ChainSpec
    coupling: CouplingSpec

    @property
    def label(self) -> str:
        if self.param is None:
            return "point"
        return f"{self.index:03d}_{self.param}_{self.value:g}"


def check_dispatch(method: Method, chain: ChainSpec) -> None:
    """
    Raises:
        DispatchError: If the method cannot treat the chain, naming the alternative
    """
    if method == Method.DETERMINANT and not chain.is_free_fermion:
        raise DispatchError(f"method=determinant needs delta=0 (got {chain.delta}); use method=ed")
    if method == Method.CENTRAL_SPIN:
        if not chain.is_free_fermion:
            raise DispatchError(f"method=central_spin needs delta=0 (got {chain.delta}); use method=ed")
        if chain.boundary != Boundary.PERIODIC or chain.N % 2:
            raise DispatchError("method=central_spin needs a periodic chain with even N; use method=determinant")
    if method in (Method.ED, Method.TROTTER) and chain.N > settings.ED_MAX_SITES:
        hint = "use method=determinant" if chain.is_free_fermion else f"reduce N to {settings.ED_MAX_SITES}"
        raise DispatchError(f"method={method.value} is limited to N <= {settings.ED_MAX_SITES}; {hint}")


def expand_points(config: RunConfig) -> List[SweepPoint]:
    """One point per sweep value (a single point without sweep)."""
    if config.sweep is None:
        return [SweepPoint(0, None, None, config.model, config.coupling)]
    param = config.sweep.param
    points = []
    for index, value in enumerate(config.sweep.values):
        chain, coupling = config.model, config.coupling
        if param == "lambda":
            chain = chain.with_updates(lambda_=value)
        elif param in ("gamma", "delta"):
            chain = chain.with_updates(**{param: value})
        elif param == "N":
            chain = chain.with_updates(N=int(value))
        elif param == "epsilon":
            coupling = coupling.with_updates(epsilon=value)
        elif param == "m":
            coupling = coupling.with_updates(m=int(value))
        if coupling.m > chain.N:
            raise ConfigError(f"m={coupling.m} exceeds N={chain.N}", pointer=f"/sweep/values/{index}")
        points.append(SweepPoint(index, param, float(value), chain, coupling))
    return points


def time_grid(config: RunConfig) -> np.ndarray:
    return np.linspace(0.0, config.time.t_max, config.time.steps)


def _chunks(times: np.ndarray, parts: int) -> List[np.ndarray]:
    return [c for c in np.array_split(times, parts) if c.size]


def compute_echo(config: RunConfig, point: SweepPoint, times: np.ndarray,
                 executor: Optional[ThreadPoolExecutor] = None, threads: int = 1) -> EchoSeries:
    method = config.method
    check_dispatch(method, point.chain)
    if method == Method.DETERMINANT:
        engine = DeterminantEcho(point.chain, point.coupling, parity_exact=config.parity_exact)
        if executor is None or threads == 1:
            return engine.series(times)
        values = np.concatenate(list(executor.map(engine.evaluate, _chunks(times, threads))))
        return EchoSeries(times=times, values=values, method=method, chain=point.chain, coupling=point.coupling,
                          meta={"determinant_exponent": engine.exponent})
    if method == Method.CENTRAL_SPIN:
        return echo_central_spin(point.chain, point.coupling.epsilon, times)
    if method == Method.ED:
        return echo_ed(point.chain, point.coupling, times, config.sector_rule)
    return echo_trotter(point.chain, point.coupling, times, dt=config.trotter_dt, sector_rule=config.sector_rule)


def write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    """Numeric CSV with CSV_SIGNIFICANT_DIGITS digits; missing values are written as nan."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    np.savetxt(path, data, fmt=f"%.{settings.CSV_SIGNIFICANT_DIGITS}g", delimiter=",",
               header=",".join(header), comments="")
    return path


def _value(point: SweepPoint) -> float:
    return point.value if point.value is not None else float("nan")


# Command handlers ------------------------------------------------------------
# Each handler returns (per-point records, summary) and writes its CSV files.

Handler = Callable[[RunConfig, Path, ThreadPoolExecutor, int], Tuple[List[Dict[str, Any]], Dict[str, Any]]]


def _echo(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    times = time_grid(config)
    points = expand_points(config)
    if len(points) == 1:
        series_list = [compute_echo(config, points[0], times, executor, threads)]
    else:
        series_list = list(executor.map(lambda p: compute_echo(config, p, times), points))
    records = []
    for point, series in zip(points, series_list):
        path = series.to_csv(out / f"echo_{point.label}.csv")
        if not series.bounds_ok():
            logger.warning(f"L outside [0, 1] at {point.label}")
        records.append({"index": point.index, "param": point.param, "value": point.value, "file": path.name,
                        "min_L": float(series.values.min())})
    return records, {}


def _sweep(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    if config.sweep is None:
        raise ConfigError("the sweep command needs a sweep block", pointer="/sweep")
    return _echo(config, out, executor, threads)


def _alpha_for(config: RunConfig, point: SweepPoint, times: np.ndarray) -> Tuple[float, float]:
    """(closed-form or variance alpha, fitted alpha); nan where not available."""
    chain, coupling = point.chain, point.coupling
    sites = resolve_sites(chain, coupling)
    estimate = float("nan")
    if chain.is_free_fermion and len(sites) == 1:
        estimate = alpha_perturbative(diagonalize(build_quadratic_form(chain)), coupling.epsilon, sites).alpha
    elif chain.N <= settings.ED_MAX_SITES:
        rule = config.sector_rule or default_sector_rule(chain)
        estimate = alpha_variance(ground_state(dense_hamiltonian(chain), rule), sites, coupling.epsilon).alpha
    try:
        fitted = fit_alpha(compute_echo(config, point, times)).alpha
    except InsufficientDataError as e:
        logger.warning(f"no alpha fit at {point.label}: {e}")
        fitted = float("nan")
    return estimate, fitted


def _critical_exclusion(config: RunConfig) -> float:
    if config.analysis.exclude is not None:
        return config.analysis.exclude
    return settings.CRITICAL_EXCLUSION_SITES / config.model.N


def _alpha_scan(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    times = time_grid(config)
    points = expand_points(config)
    results = list(executor.map(lambda p: _alpha_for(config, p, times), points))
    rows = [(_value(p), a, f) for p, (a, f) in zip(points, results)]
    path = write_table(out / "alpha_scan.csv", ["param", "alpha", "alpha_fit"], rows)
    summary: Dict[str, Any] = {"file": path.name}
    if config.sweep is not None and config.sweep.param == "lambda":
        best = [(p.value, a if np.isfinite(a) else f) for p, (a, f) in zip(points, results)]
        try:
            fit = fit_log_divergence(best, config.analysis.lambda_c, config.coupling.epsilon,
                                     exclude=_critical_exclusion(config))
            summary["log_divergence"] = fit.model_dump()
        except InsufficientDataError as e:
            logger.info(f"log-divergence fit skipped: {e}")
    records = [{"index": p.index, "param": p.param, "value": p.value, "alpha": a, "alpha_fit": f}
               for p, (a, f) in zip(points, results)]
    return records, summary


def _plateau_for(config: RunConfig, point: SweepPoint, times: np.ndarray) -> Tuple[float, float, float]:
    fitted = fit_plateau(compute_echo(config, point, times), t_lo=config.analysis.t_lo)
    estimate = float("nan")
    sites = resolve_sites(point.chain, point.coupling)
    if point.chain.is_free_fermion and len(sites) == 1:
        try:
            estimate = plateau_perturbative(diagonalize(build_quadratic_form(point.chain)),
                                            point.coupling.epsilon, sites).value
        except DegenerateEstimateError as e:
            logger.warning(f"no perturbative plateau at {point.label}: {e}")
    return fitted.value, fitted.std, estimate


def _plateau_scan(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    times = time_grid(config)
    points = expand_points(config)
    results = list(executor.map(lambda p: _plateau_for(config, p, times), points))
    rows = [(_value(p),) + r for p, r in zip(points, results)]
    path = write_table(out / "plateau_scan.csv", ["param", "plateau", "std", "plateau_perturbative"], rows)
    records = [{"index": p.index, "param": p.param, "value": p.value, "plateau": r[0]}
               for p, r in zip(points, results)]
    return records, {"file": path.name}


def _critical_scaling(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    if config.sweep is None or config.sweep.param != "N":
        raise ConfigError("critical-scaling sweeps the chain length", pointer="/sweep/param")
    times = time_grid(config)
    points = expand_points(config)
    minima = list(executor.map(lambda p: minimum_before_revival(compute_echo(config, p, times)), points))
    rows = [(p.chain.N, m) for p, m in zip(points, minima)]
    path = write_table(out / "critical_scaling.csv", ["N", "L_min"], rows)
    summary: Dict[str, Any] = {"file": path.name}
    if len(rows) >= 4:
        summary["fit"] = fit_critical_scaling(rows).model_dump()
    records = [{"index": p.index, "param": "N", "value": p.value, "L_min": m} for p, m in zip(points, minima)]
    return records, summary


def _concurrence_scan(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    points = expand_points(config)
    param = config.sweep.param if config.sweep is not None else "lambda"
    if param not in ("lambda", "delta", "gamma"):
        raise ConfigError("concurrence-scan sweeps lambda, delta or gamma", pointer="/sweep/param")
    rows = list(executor.map(
        lambda p: alpha_vs_concurrence([p.chain], p.coupling, param=param, sector_rule=config.sector_rule)[0],
        points,
    ))
    path = write_table(out / "concurrence_scan.csv", ["param", "C1", "alpha"],
                       [(r.param, r.C1, r.alpha) for r in rows])
    records = [{"index": p.index, "param": param, "value": r.param, "C1": r.C1, "alpha": r.alpha}
               for p, r in zip(points, rows)]
    return records, {"file": path.name}


def _envelope_for(config: RunConfig, point: SweepPoint, times: np.ndarray):
    if not strong_coupling_regime(point.chain, point.coupling.epsilon):
        logger.warning(f"{point.label}: lambda={point.chain.lambda_}, epsilon={point.coupling.epsilon} "
                       f"is outside the strong-coupling regime")
    frequency = config.analysis.frequency or oscillation_frequency(point.chain, point.coupling.epsilon)
    return fit_envelope(compute_echo(config, point, times), frequency, config.analysis.exponent_N)


def _envelope_fit(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    times = time_grid(config)
    points = expand_points(config)
    fits = list(executor.map(lambda p: _envelope_for(config, p, times), points))
    path = write_table(out / "envelope_fit.csv", ["param", "S2", "quality", "points"],
                       [(_value(p), f.S2, f.quality, f.points) for p, f in zip(points, fits)])
    records = [{"index": p.index, "param": p.param, "value": p.value, **f.model_dump()} for p, f in zip(points, fits)]
    return records, {"file": path.name}


def _compile(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    options = config.compiler
    sequence = latticecompiler.compile(config.model, config.coupling, options.t, options.n_steps, options.level)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schedule.txt").write_text(latticecompiler.export_text(sequence))
    (out / "schedule.json").write_text(latticecompiler.export_json(sequence))
    summary = {"gates": len(sequence.gates), "gates_per_step": sequence.gates_per_step,
               "counts": latticecompiler.gate_counts(sequence.gates)}
    return [{"index": 0, "file": "schedule.txt"}], summary


def _verify(config: RunConfig, out: Path, executor: ThreadPoolExecutor, threads: int):
    options = config.compiler
    report = latticecompiler.verify(config.model, config.coupling, options.t, options.n_list, options.level)
    path = write_table(out / "convergence.csv", ["n", "distance"], list(zip(report.n_list, report.distances)))
    return [{"index": 0, "file": path.name}], report.model_dump(mode="json")


HANDLERS: Dict[str, Handler] = {
    "echo": _echo,
    "sweep": _sweep,
    "alpha-scan": _alpha_scan,
    "plateau-scan": _plateau_scan,
    "critical-scaling": _critical_scaling,
    "concurrence-scan": _concurrence_scan,
    "envelope-fit": _envelope_fit,
    "compile": _compile,
    "verify": _verify,
}


def run(config: RunConfig, command: str = "echo", out: Optional[str] = None,
        threads: Optional[int] = None) -> RunManifest:
    """
    Execute ``command`` for ``config`` and write CSV files plus manifest.json.

    Raises:
        ConfigError: If the command is unknown or does not fit the config
        DispatchError: If model and method cannot be combined
        NumericalFailureError: If a diagonalization or propagation fails
    """
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}; available: {', '.join(HANDLERS)}")
    out_dir = Path(out or config.output)
    workers = threads or config.threads or settings.THREADS
    if command not in ("compile", "verify", "concurrence-scan"):
        for point in expand_points(config):
            check_dispatch(config.method, point.chain)

    logger.info(f"Running {command} (method={config.method.value}, threads={workers}) into {out_dir}")
    start = time.perf_counter()
    with ThreadPoolExecutor(max_workers=workers) as executor:
        try:
            records, summary = HANDLERS[command](config, out_dir, executor, workers)
        except (np.linalg.LinAlgError, ArpackError, FloatingPointError) as e:
            raise NumericalFailureError(f"{command} failed: {e}") from e
    elapsed = time.perf_counter() - start

    manifest = RunManifest(command=command, method=config.method.value,
                           config=config.model_dump(mode="json", by_alias=True), points=records,
                           determinant_exponent=DETERMINANT_EXPONENT, wall_time=elapsed, summary=summary)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest.model_dump(mode="json"), indent=2))
    logger.info(f"Finished {command} in {elapsed:.2f}s, {len(records)} point(s)")
    return manifest
