"""
Second-order estimates of the short-time decay and the saturation value, and
the fits that extract the same quantities from echo series.
"""
import logging
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from app.config import settings
from app.exceptions import (DegenerateEstimateError, InsufficientDataError, NumericalFailureError,
                            UnsupportedEstimateError)
from app.models import (AlphaEstimate, ChainSpec, CriticalScalingFit, EnvelopeFit, LogDivergenceFit,
                        PlateauEstimate)
from app.services.echo import EchoSeries
from app.services.ed_oracle import DenseState, spin_z
from app.services.freefermion import BogoliubovBasis

logger = logging.getLogger(__name__)


def _single_site(sites: Sequence[int], N: int) -> int:
    sites = tuple(sites)
    if len(sites) != 1:
        raise UnsupportedEstimateError(
            f"closed-form estimate covers a single link, got {len(sites)}; use alpha_variance or fit_alpha"
        )
    if not 1 <= sites[0] <= N:
        raise UnsupportedEstimateError(f"site {sites[0]} out of range [1, {N}]")
    return sites[0] - 1


def alpha_perturbative(basis_g: BogoliubovBasis, epsilon: float, sites: Sequence[int] = (1,)) -> AlphaEstimate:
    """
    alpha = 4 eps^2 sum_{i != j} [(g_is h_js)^2 - g_is g_js h_is h_js] for a
    single linked site s, mode indices i, j.
    """
    s = _single_site(sites, basis_g.N)
    a, b = basis_g.g[:, s], basis_g.h[:, s]
    pairs = np.outer(a, b)
    terms = pairs ** 2 - pairs * pairs.T
    np.fill_diagonal(terms, 0.0)
    alpha = 4.0 * epsilon ** 2 * float(terms.sum())
    return AlphaEstimate(alpha=max(alpha, 0.0), source="perturbative")


def plateau_perturbative(basis_g: BogoliubovBasis, epsilon: float, sites: Sequence[int] = (1,)) -> PlateauEstimate:
    """
    L_inf = (1 - 2 eps^2 sum_{i != j} [g_is h_js / (E_i + E_j)]^2)^4.

    Raises:
        DegenerateEstimateError: If some E_i + E_j (i != j) vanishes
    """
    s = _single_site(sites, basis_g.N)
    E = basis_g.energies
    off = ~np.eye(basis_g.N, dtype=bool)
    denominators = (E[:, None] + E[None, :])[off]
    if np.any(denominators < 1e-10):
        raise DegenerateEstimateError("zero modes make E_i + E_j vanish; the plateau estimate diverges")
    numerators = np.outer(basis_g.g[:, s], basis_g.h[:, s])[off]
    bracket = 1.0 - 2.0 * epsilon ** 2 * float(np.sum((numerators / denominators) ** 2))
    if bracket < 0:
        logger.warning(f"perturbative plateau bracket {bracket:.3e} < 0 at epsilon={epsilon}; clamped to 0")
        bracket = 0.0
    return PlateauEstimate(value=min(bracket ** 4, 1.0), source="perturbative")


def alpha_variance(state: DenseState, sites: Iterable[int], epsilon: float) -> AlphaEstimate:
    """alpha = eps^2 Var(sum_{j in sites} sigma^z_j) in ``state``, valid for any Delta and m."""
    sites = tuple(sites)
    if not sites or any(s < 1 or s > state.N for s in sites):
        raise UnsupportedEstimateError(f"sites {sites} out of range [1, {state.N}]")
    z = spin_z(state.N)[[s - 1 for s in sites]].sum(axis=0).astype(float)
    p = np.abs(state.amplitudes) ** 2
    mean = float(p @ z)
    variance = max(float(p @ z ** 2) - mean ** 2, 0.0)
    return AlphaEstimate(alpha=epsilon ** 2 * variance, source="variance")


def _initial_window(series: EchoSeries, window: Tuple[float, float]) -> np.ndarray:
    """
    Mask of the early points whose decay 1 - L lies in ``window``.

    The window closes where 1 - L first exceeds its upper edge, at the first
    local minimum of L, or once -ln L / t^2 drifts from its earliest value by
    more than ALPHA_RATIO_TOL.
    """
    lo, hi = window
    t, L = series.times, series.values
    decay = 1.0 - L
    stop = decay.shape[0]
    beyond = np.flatnonzero(decay > hi)
    if beyond.size:
        stop = beyond[0]
    turning = np.flatnonzero((np.diff(L) > 0) & (decay[:-1] >= lo))
    if turning.size:
        stop = min(stop, turning[0] + 1)
    mask = (decay >= lo) & (decay <= hi) & (t > 0) & (L > 0)
    mask[stop:] = False
    idx = np.flatnonzero(mask)
    if idx.size:
        ratio = -np.log(L[idx]) / t[idx] ** 2
        drift = np.flatnonzero(np.abs(ratio - ratio[0]) > settings.ALPHA_RATIO_TOL * ratio[0])
        if drift.size:
            mask[idx[drift[0]]:] = False
    return mask


def fit_alpha(series: EchoSeries, window: Optional[Tuple[float, float]] = None) -> AlphaEstimate:
    """
    Fit -ln L = alpha t^2 through the origin on the initial decay.

    Only the quadratic onset is used: points before 1 - L first exceeds the
    upper edge of ``window``, before L first turns up, and while -ln L / t^2
    stays within ALPHA_RATIO_TOL of its earliest value. The relative RMS
    residual is reported and flagged above FIT_RESIDUAL_FLAG.

    Raises:
        InsufficientDataError: If fewer than 3 points fall in the window
    """
    window = window or settings.alpha_window
    mask = _initial_window(series, window)
    if mask.sum() < 3:
        raise InsufficientDataError(
            f"only {int(mask.sum())} points with 1 - L in [{window[0]:g}, {window[1]:g}]; refine the time grid"
        )
    x = series.times[mask] ** 2
    y = -np.log(series.values[mask])
    alpha = float(x @ y / (x @ x))
    residual = float(np.sqrt(np.mean((y - alpha * x) ** 2)) / np.max(np.abs(y)))
    flagged = residual > settings.FIT_RESIDUAL_FLAG
    if flagged:
        logger.warning(f"alpha fit residual {residual:.2e} above {settings.FIT_RESIDUAL_FLAG:g}")
    t = series.times[mask]
    return AlphaEstimate(alpha=max(alpha, 0.0), source="fit", fit_window=(float(t[0]), float(t[-1])),
                         residual=residual, flagged=flagged)


def revival_time(chain: ChainSpec) -> float:
    return chain.N / (2.0 * chain.J)


def fit_plateau(series: EchoSeries, t_lo: Optional[float] = None) -> PlateauEstimate:
    """Mean of L over [t_max / 2, PLATEAU_REVIVAL_FRACTION * N / 2J]."""
    t_max = float(series.times[-1])
    lo = t_max / 2.0 if t_lo is None else t_lo
    hi = min(t_max, settings.PLATEAU_REVIVAL_FRACTION * revival_time(series.chain))
    mask = (series.times >= lo) & (series.times <= hi)
    if not mask.any():
        raise InsufficientDataError(
            f"plateau window [{lo:g}, {hi:g}] is empty; the revival at t={revival_time(series.chain):g} "
            f"comes before t_max/2"
        )
    values = series.values[mask]
    return PlateauEstimate(value=float(np.clip(values.mean(), 0.0, 1.0)), window=(lo, hi),
                           std=float(values.std()), source="fit")


def minimum_before_revival(series: EchoSeries) -> float:
    """Smallest L on t <= PLATEAU_REVIVAL_FRACTION * N / 2J."""
    hi = settings.PLATEAU_REVIVAL_FRACTION * revival_time(series.chain)
    mask = series.times <= hi
    if not mask.any():
        raise InsufficientDataError(f"no samples before t={hi:g}")
    if series.times[-1] < hi:
        logger.warning(f"series ends at t={series.times[-1]:g}, before the revival window closes at t={hi:g}")
    return float(series.values[mask].min())


def fit_critical_scaling(minima: Sequence[Tuple[int, float]]) -> CriticalScalingFit:
    """Least-squares fit of L_min(N) = L0 / (1 + beta ln N)."""
    if len(minima) < 4:
        raise InsufficientDataError(f"critical scaling needs at least 4 sizes, got {len(minima)}")
    data = np.array(sorted(minima), dtype=float)
    sizes, values = data[:, 0], data[:, 1]
    monotone = bool(np.all(np.diff(values) < 0))
    if not monotone:
        logger.warning("minima do not decrease monotonically with N")
    try:
        popt, _ = curve_fit(lambda n, L0, beta: L0 / (1.0 + beta * np.log(n)), sizes, values,
                            p0=(values[0], 1e-3), maxfev=10000)
    except (RuntimeError, ValueError) as e:
        raise NumericalFailureError(f"critical scaling fit did not converge: {e}") from e
    return CriticalScalingFit(L0=float(popt[0]), beta=float(popt[1]), monotone=monotone)


def fit_log_divergence(alphas: Sequence[Tuple[float, float]], lambda_c: float, epsilon: float,
                       exclude: float = 0.0) -> LogDivergenceFit:
    """
    Fit d(alpha/eps^2)/d lambda = c1 ln|lambda - lambda_c| + c2.

    Derivatives are central differences; stencils that straddle lambda_c are
    dropped, as are centers with |lambda - lambda_c| <= ``exclude``. A finite
    bath rounds the divergence off within a few 1/N of lambda_c, so callers
    pass an exclusion of that order.
    """
    if epsilon == 0:
        raise InsufficientDataError("epsilon must be nonzero to normalize alpha")
    data = np.array(sorted(alphas), dtype=float)
    lam, y = data[:, 0], data[:, 1] / epsilon ** 2
    x, d = [], []
    for i in range(1, lam.shape[0] - 1):
        if (lam[i - 1] - lambda_c) * (lam[i + 1] - lambda_c) <= 0 or abs(lam[i] - lambda_c) <= exclude:
            continue
        x.append(np.log(abs(lam[i] - lambda_c)))
        d.append((y[i + 1] - y[i - 1]) / (lam[i + 1] - lam[i - 1]))
    if len(x) < 4:
        raise InsufficientDataError(f"log-divergence fit needs at least 4 derivative points, got {len(x)}")
    c1, c2 = np.polyfit(np.array(x), np.array(d), 1)
    return LogDivergenceFit(c1=float(c1), c2=float(c2), points=len(x))


def _revival_maxima(series: EchoSeries, epsilon: float) -> Tuple[np.ndarray, np.ndarray]:
    """Largest L within pi / (2 eps) of each t_n = n pi / eps, kept only where it is an interior maximum."""
    t, L = series.times, series.values
    half = np.pi / (2.0 * epsilon)
    found = []
    for n in range(1, int(t[-1] / (2.0 * half)) + 1):
        lo = np.searchsorted(t, 2.0 * n * half - half, side="left")
        hi = np.searchsorted(t, 2.0 * n * half + half, side="right")
        if hi - lo < 3:
            continue
        i = lo + int(np.argmax(L[lo:hi]))
        if lo < i < hi - 1 and L[i] > 0:
            found.append(i)
    found = np.array(found, dtype=int)
    return t[found], L[found]


def fit_envelope(series: EchoSeries, epsilon: float, exponent_N: Optional[int] = None) -> EnvelopeFit:
    """
    Strong-coupling fit of L(t) ~ |cos(eps t)|^(N_osc/2) exp(-S2 t^2).

    ``epsilon`` is the oscillation frequency; callers working from a bath
    pass oscillation_frequency(chain, epsilon). The envelope is sampled at the
    revival maxima near t_n = n pi / eps (a window without an interior
    maximum is a trough and is skipped). With ``exponent_N`` set the factor
    |cos(eps t)|^(exponent_N/2) is divided out at each maximum, otherwise the
    maxima are taken as they are. -ln of the samples is fit as S2 t^2 through
    the origin, up to the first sample below ENVELOPE_FLOOR.

    Raises:
        InsufficientDataError: If fewer than 2 revival maxima are usable
    """
    if epsilon <= 0:
        raise InsufficientDataError(f"oscillation frequency must be positive, got {epsilon}")
    times, residue = _revival_maxima(series, epsilon)
    if exponent_N is not None:
        c = np.abs(np.cos(epsilon * times))
        usable = c > 0.5
        times, residue = times[usable], residue[usable] / c[usable] ** (exponent_N / 2.0)
    below = np.flatnonzero(residue < settings.ENVELOPE_FLOOR)
    keep = below[0] if below.size else residue.shape[0]
    if keep < 2:
        raise InsufficientDataError(f"envelope fit kept {keep} revival maxima; extend t_max past 2 pi / eps")
    x = times[:keep] ** 2
    y = -np.log(residue[:keep])
    S2 = float(x @ y / (x @ x))
    total = float(np.sum((y - y.mean()) ** 2))
    quality = 1.0 - float(np.sum((y - S2 * x) ** 2)) / total if total > 0 else 1.0
    return EnvelopeFit(S2=max(S2, 0.0), epsilon_used=epsilon, quality=quality, points=int(keep))


def oscillation_frequency(chain: ChainSpec, epsilon: float) -> float:
    """Quasi-particle energy 2 (epsilon + J lambda) of the linked spins once the coupling dominates."""
    return 2.0 * (epsilon + chain.J * chain.lambda_)


def strong_coupling_regime(chain: ChainSpec, epsilon: float) -> bool:
    """Paramagnetic bath driven far past the critical field by the qubit."""
    return chain.lambda_ < 1.0 and chain.lambda_ + epsilon / chain.J >= 10.0
