"""Empirical PDFs, equal-error-rate evaluation, significance testing, and
Generalized Pareto fitting/sampling.

Classification convention (fixed): a measurement below the threshold is
conjectured N (no rule installed), at or above it Y.  During the sweep,
FNR(t) = |{N > t}|/|N| and FMR(t) = |{Y <= t}|/|Y|; the EER is the value at
the crossing, linearly interpolated between adjacent sweep points when the
sign of FMR - FNR changes between them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as student_t


class EmptySamplesError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


class FitFailedError(RuntimeError):
    pass


# -- histograms -------------------------------------------------------------


@dataclass
class Histogram:
    bin_width_ms: float
    origin_ms: float
    counts: dict[int, int]
    total: int

    def bin_left_ms(self, index: int) -> float:
        return self.origin_ms + index * self.bin_width_ms

    def to_rows(self) -> list[tuple[float, int, float]]:
        """(bin_left_ms, count, relative_frequency) for occupied bins."""
        return [
            (self.bin_left_ms(i), c, c / self.total)
            for i, c in sorted(self.counts.items())
        ]


def build_histogram(values_ms, bin_width_ms: float, origin_ms: float = 0.0) -> Histogram:
    if bin_width_ms <= 0:
        raise ValueError("bin width must be positive")
    values = np.asarray(list(values_ms), dtype=float)
    if values.size == 0:
        raise EmptySamplesError("no samples to bin")
    indices = np.floor((values - origin_ms) / bin_width_ms).astype(int)
    counts: dict[int, int] = {}
    for idx in indices:
        counts[int(idx)] = counts.get(int(idx), 0) + 1
    return Histogram(bin_width_ms, origin_ms, counts, int(values.size))


# -- equal error rate --------------------------------------------------------


@dataclass
class EERResult:
    eer: float
    threshold_ms: float
    curve: list[tuple[float, float, float]]  # (threshold, FMR, FNR)


def compute_eer(samples_n, samples_y) -> EERResult:
    """Threshold sweep over the union of sample values.

    Identical populations cross at exactly 0.5, disjoint ones at 0.  The
    crossing is found where FMR - FNR changes sign and both rates are
    interpolated linearly to that point.
    """
    n = np.sort(np.asarray(list(samples_n), dtype=float))
    y = np.sort(np.asarray(list(samples_y), dtype=float))
    if n.size == 0 or y.size == 0:
        raise EmptySamplesError("both populations must be non-empty")
    thresholds = np.unique(np.concatenate([n, y]))
    fnr = 1.0 - np.searchsorted(n, thresholds, side="right") / n.size
    fmr = np.searchsorted(y, thresholds, side="right") / y.size
    # Guard point below every value: all N rejected correctly, all Y missed.
    thresholds = np.concatenate([[thresholds[0] - 1.0], thresholds])
    fnr = np.concatenate([[1.0], fnr])
    fmr = np.concatenate([[0.0], fmr])
    diff = fmr - fnr
    curve = list(zip(thresholds.tolist(), fmr.tolist(), fnr.tolist()))

    exact = np.nonzero(diff == 0.0)[0]
    if exact.size:
        i = int(exact[0])
        return EERResult(eer=float(fnr[i]), threshold_ms=float(thresholds[i]), curve=curve)
    i = int(np.argmax(diff > 0))
    if i == 0:
        # FMR exceeds FNR from the guard point on; report the first point.
        return EERResult(
            eer=float((fnr[0] + fmr[0]) / 2), threshold_ms=float(thresholds[0]), curve=curve
        )
    s = -diff[i - 1] / (diff[i] - diff[i - 1])
    eer = float(fnr[i - 1] + s * (fnr[i] - fnr[i - 1]))
    threshold = float(thresholds[i - 1] + s * (thresholds[i] - thresholds[i - 1]))
    return EERResult(eer=eer, threshold_ms=threshold, curve=curve)


def classify(value_ms: float, threshold_ms: float) -> str:
    """Below the threshold conjecture N, otherwise Y."""
    return "N" if value_ms < threshold_ms else "Y"


# -- Welch's t-test -----------------------------------------------------------


@dataclass
class WelchResult:
    t_statistic: float
    significant_at_1pct: bool
    df: float
    p_value: float


def welch_t_test(samples_n, samples_y, alpha: float = 0.01) -> WelchResult:
    """Two-sample unequal-variance t-test with Welch-Satterthwaite df."""
    a = np.asarray(list(samples_n), dtype=float)
    b = np.asarray(list(samples_y), dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateVarianceError("need at least two samples per population")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 or vb == 0.0:
        raise DegenerateVarianceError("population variance is zero")
    sa = va / a.size
    sb = vb / b.size
    t_stat = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = 2.0 * float(student_t.sf(abs(t_stat), df))
    return WelchResult(
        t_statistic=float(t_stat), significant_at_1pct=p < alpha, df=float(df), p_value=p
    )


# -- Generalized Pareto -------------------------------------------------------

_XI_ZERO = 1e-9


@dataclass(frozen=True)
class GPDParams:
    """shape xi, scale sigma, location mu; delays carry these in ms."""

    shape: float
    scale: float
    location: float

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    def support_upper(self) -> float:
        """mu - sigma/xi for xi < 0, else +inf."""
        if self.shape < 0:
            return self.location - self.scale / self.shape
        return math.inf

    def mean(self) -> float:
        """mu + sigma/(1 - xi), finite for xi < 1."""
        if self.shape >= 1:
            return math.inf
        return self.location + self.scale / (1.0 - self.shape)


def gpd_pdf(x, params: GPDParams):
    """Density (1/sigma)(1 + xi (x-mu)/sigma)^(-1/xi - 1) on the support, 0 off it."""
    xi, sigma, mu = params.shape, params.scale, params.location
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    if abs(xi) < _XI_ZERO:
        out = np.where(z >= 0, np.exp(-z) / sigma, 0.0)
    else:
        base = 1.0 + xi * z
        inside = (z >= 0) & (base > 0)
        out = np.zeros_like(z)
        out[inside] = (1.0 / sigma) * base[inside] ** (-1.0 / xi - 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_cdf(x, params: GPDParams):
    xi, sigma, mu = params.shape, params.scale, params.location
    x = np.asarray(x, dtype=float)
    z = (x - mu) / sigma
    if abs(xi) < _XI_ZERO:
        out = np.where(z >= 0, 1.0 - np.exp(-np.maximum(z, 0.0)), 0.0)
    else:
        base = np.maximum(1.0 + xi * z, 0.0)
        out = np.where(z >= 0, 1.0 - base ** (-1.0 / xi), 0.0)
        if xi < 0:
            out = np.where(z >= -1.0 / xi, 1.0, out)
    return float(out) if out.ndim == 0 else out


def gpd_quantile(u, params: GPDParams):
    """Inverse CDF: mu + sigma ((1-u)^(-xi) - 1)/xi, limit mu - sigma ln(1-u)."""
    xi, sigma, mu = params.shape, params.scale, params.location
    u = np.asarray(u, dtype=float)
    if np.any((u < 0) | (u >= 1)):
        raise ValueError("u must lie in [0, 1)")
    if abs(xi) < _XI_ZERO:
        out = mu - sigma * np.log1p(-u)
    else:
        out = mu + sigma * ((1.0 - u) ** (-xi) - 1.0) / xi
    return float(out) if out.ndim == 0 else out


def gpd_sample(params: GPDParams, rng: np.random.Generator, size: int | None = None):
    u = rng.random() if size is None else rng.random(size)
    return gpd_quantile(u, params)


def _gpd_negloglik(xi: float, sigma: float, y: np.ndarray) -> float:
    """Negative log-likelihood of exceedances y > 0; inf outside the support."""
    if sigma <= 0:
        return math.inf
    if abs(xi) < _XI_ZERO:
        return y.size * math.log(sigma) + float(y.sum()) / sigma
    z = xi * y / sigma
    if np.any(z <= -1.0):
        return math.inf
    return y.size * math.log(sigma) + (1.0 / xi + 1.0) * float(np.log1p(z).sum())


LOCATION_EPS_MS = 1e-6  # one nanosecond


def fit_gpd(samples, min_samples: int = 50) -> tuple[GPDParams, float]:
    """Fit by maximum likelihood over a coarse grid with local refinement.

    The location is pinned one time-quantum below the smallest sample, and
    (xi, sigma) maximize the exceedance likelihood.  Returns the parameters
    and the Kolmogorov-Smirnov D statistic of the fit (lower is better).
    """
    x = np.sort(np.asarray(list(samples), dtype=float))
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples")
    if x[-1] == x[0]:
        raise FitFailedError("constant samples leave the likelihood degenerate")
    mu = float(x[0]) - LOCATION_EPS_MS
    y = x - mu

    # Method-of-moments start: mean = sigma/(1-xi), var = sigma^2/((1-xi)^2 (1-2 xi)).
    m = float(y.mean())
    v = float(y.var())
    xi0 = 0.5 * (1.0 - m * m / v) if v > 0 else 0.0
    xi0 = min(max(xi0, -0.95), 0.95)
    sigma0 = max(m * (1.0 - xi0), 1e-12)

    y_sum = float(y.sum())
    n_obs = y.size

    def grid_search(xi_lo, xi_hi, sig_lo, sig_hi, n_xi, n_sig):
        best = (math.inf, xi0, sigma0)
        sigmas = np.geomspace(sig_lo, sig_hi, n_sig)
        log_sigmas = np.log(sigmas)
        for xi in np.linspace(xi_lo, xi_hi, n_xi):
            xi = float(xi)
            if abs(xi) < _XI_ZERO:
                nll_vec = n_obs * log_sigmas + y_sum / sigmas
            else:
                z = np.multiply.outer(xi / sigmas, y)  # (n_sig, n)
                valid = z.min(axis=1) > -1.0
                with np.errstate(invalid="ignore", divide="ignore"):
                    sums = np.log1p(z).sum(axis=1)
                nll_vec = n_obs * log_sigmas + (1.0 / xi + 1.0) * sums
                nll_vec = np.where(valid, nll_vec, np.inf)
            j = int(np.argmin(nll_vec))
            if nll_vec[j] < best[0]:
                best = (float(nll_vec[j]), xi, float(sigmas[j]))
        return best

    nll, xi_hat, sig_hat = grid_search(
        max(-0.99, xi0 - 0.6), min(0.99, xi0 + 0.6), sigma0 / 4, sigma0 * 4, 41, 41
    )
    span_xi, span_sig = 0.06, 1.25
    for _ in range(2):
        nll, xi_hat, sig_hat = grid_search(
            max(-0.999, xi_hat - span_xi),
            min(0.999, xi_hat + span_xi),
            sig_hat / span_sig,
            sig_hat * span_sig,
            25,
            25,
        )
        span_xi /= 8
        span_sig = 1.03
    if not math.isfinite(nll):
        raise FitFailedError("no parameter pair with finite likelihood")

    params = GPDParams(shape=xi_hat, scale=sig_hat, location=mu)
    cdf = gpd_cdf(x, params)
    n = x.size
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    ks = float(np.max(np.maximum(ecdf_hi - cdf, cdf - ecdf_lo)))
    return params, ks
