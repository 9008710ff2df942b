"""Statistical primitives: OLS with inference, one-way ANOVA, Tukey HSD.

Distribution functions are assembled here from scipy.special kernels
(incomplete beta, ndtr); the studentized-range CDF is evaluated by direct
Gauss-Legendre quadrature of its double-integral definition with absolute
tolerance better than 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import betainc, gammaln, ndtr

from .errors import DomainError, SampleSizeError, SingularDesignError

# Rank cutoff for the scaled design matrix; demographic fractions nearly
# summing to one are expected, true collinearity must still be rejected.
MAX_CONDITION_NUMBER = 1e12


@dataclass(frozen=True)
class RegressionDiagnostics:
    """OLS fit summary: per-covariate slopes, their uncertainty, and fit metadata."""

    coefficients: np.ndarray
    intercept: float
    standard_errors: np.ndarray
    p_values: np.ndarray
    n: int
    k: int
    sigma2: float

    def __post_init__(self):
        if not (self.coefficients.shape == self.standard_errors.shape == self.p_values.shape == (self.k,)):
            raise DomainError("regression diagnostics arrays must all have length k")


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float


@dataclass(frozen=True)
class TukeyPair:
    """One pairwise comparison; mean_diff = mean(group1) - mean(group2)."""

    group1: str
    group2: str
    mean_diff: float
    p_adj: float
    significant_01: bool
    significant_10: bool


# ---------------------------------------------------------------------------
# Distribution functions
# ---------------------------------------------------------------------------

def student_t_cdf(x: float, df: float) -> float:
    """CDF of Student's t with df degrees of freedom."""
    if df <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if x == 0.0:
        return 0.5
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + x * x))
    return 1.0 - tail if x > 0 else tail


def student_t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t, computed without cancellation."""
    if df <= 0:
        raise DomainError(f"degrees of freedom must be positive, got {df}")
    if not math.isfinite(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_cdf(x: float, dfn: float, dfd: float) -> float:
    """CDF of the F distribution with (dfn, dfd) degrees of freedom."""
    if dfn <= 0 or dfd <= 0:
        raise DomainError(f"degrees of freedom must be positive, got ({dfn}, {dfd})")
    if x <= 0.0:
        return 0.0
    return float(betainc(dfn / 2.0, dfd / 2.0, dfn * x / (dfn * x + dfd)))


def f_sf(x: float, dfn: float, dfd: float) -> float:
    """Upper tail of the F distribution (exact complement, no cancellation)."""
    if dfn <= 0 or dfd <= 0:
        raise DomainError(f"degrees of freedom must be positive, got ({dfn}, {dfd})")
    if x <= 0.0:
        return 1.0
    if not math.isfinite(x):
        return 0.0
    return float(betainc(dfd / 2.0, dfn / 2.0, dfd / (dfd + dfn * x)))


@lru_cache(maxsize=8)
def _leggauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _panel_nodes(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights over consecutive panels."""
    base_x, base_w = _leggauss(order)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(half * base_x + 0.5 * (hi + lo))
        weights.append(half * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _normal_range_cdf(w: np.ndarray, k: int) -> np.ndarray:
    """CDF of the range of k iid standard normals, at each w >= 0.

    F_R(w) = k * integral phi(z) * [Phi(z) - Phi(z - w)]^(k-1) dz.
    """
    z, wz = _panel_nodes(np.array([-9.0, -3.0, 0.0, 3.0, 9.0]), 48)
    phi_z = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    # (n_w, n_z) inner-CDF differences
    inner = ndtr(z[None, :]) - ndtr(z[None, :] - w[:, None])
    inner = np.clip(inner, 0.0, 1.0)
    vals = k * ((inner ** (k - 1)) * (phi_z * wz)[None, :]).sum(axis=1)
    return np.clip(vals, 0.0, 1.0)


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    """CDF of the studentized range with k groups and df error degrees of freedom.

    Integrates the range CDF against the density of s = chi_df / sqrt(df)
    using composite Gauss-Legendre panels; absolute error is well below 1e-6
    for the k and df used by Tukey tests on grouped panels.
    """
    if k < 2:
        raise DomainError(f"studentized range needs k >= 2 groups, got {k}")
    if df < 1:
        raise DomainError(f"studentized range needs df >= 1, got {df}")
    if q <= 0.0:
        return 0.0
    if not math.isfinite(q):
        return 1.0
    # s bulk is near 1 with spread ~ 1/sqrt(df); widen for small df.
    s_hi = 1.0 + 10.0 / math.sqrt(df) + 12.0 / df
    edges = np.array([0.0, 0.35, 0.7, 1.0, 1.3, 1.75, 2.5, s_hi])
    edges = np.unique(np.clip(edges, 0.0, s_hi))
    s, ws = _panel_nodes(edges, 48)
    log_dens = (
        0.5 * df * math.log(df)
        + (df - 1.0) * np.log(s)
        - 0.5 * df * s * s
        - (0.5 * df - 1.0) * math.log(2.0)
        - gammaln(0.5 * df)
    )
    dens = np.exp(log_dens)
    val = float((ws * dens * _normal_range_cdf(q * s, k)).sum())
    return min(max(val, 0.0), 1.0)


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return 1.0 - studentized_range_cdf(q, k, df)


def dist_cdf(kind: str, params: dict, x: float) -> float:
    """Dispatch CDF evaluation by distribution kind.

    kind is one of 'student_t' (params: df), 'f' (params: dfn, dfd) or
    'studentized_range' (params: k, df).
    """
    if kind == "student_t":
        return student_t_cdf(x, params["df"])
    if kind == "f":
        return f_cdf(x, params["dfn"], params["dfd"])
    if kind == "studentized_range":
        return studentized_range_cdf(x, params["k"], params["df"])
    raise DomainError(f"unknown distribution kind: {kind!r}")


# ---------------------------------------------------------------------------
# OLS with inference
# ---------------------------------------------------------------------------

def ols_fit(X: np.ndarray, y: np.ndarray) -> RegressionDiagnostics:
    """Least-squares fit of y on X plus an internally appended intercept.

    Standard errors come from sigma2 * (X'X)^-1 with sigma2 = RSS / (n-k-1);
    p-values are two-sided Student-t tests of each slope against zero.

    Raises SingularDesignError when the column-scaled design has condition
    number above MAX_CONDITION_NUMBER, and SampleSizeError when n <= k + 1.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DomainError(f"X must be (n, k) and y (n,), got {X.shape} and {y.shape}")
    n, k = X.shape
    if n <= k + 1:
        raise SampleSizeError(f"need n > k + 1 observations, got n={n} with k={k} covariates")

    Xa = np.hstack([X, np.ones((n, 1))])
    col_scale = np.sqrt((Xa * Xa).mean(axis=0))
    if np.any(col_scale == 0.0):
        raise SingularDesignError("design matrix contains an all-zero column")
    Xs = Xa / col_scale

    U, s, Vt = np.linalg.svd(Xs, full_matrices=False)
    if s[-1] == 0.0 or s[0] / s[-1] > MAX_CONDITION_NUMBER:
        cond = math.inf if s[-1] == 0.0 else s[0] / s[-1]
        raise SingularDesignError(f"design matrix condition number {cond:.3e} exceeds {MAX_CONDITION_NUMBER:.0e}")

    beta_scaled = Vt.T @ ((U.T @ y) / s)
    beta_all = beta_scaled / col_scale

    resid = y - Xa @ beta_all
    rss = float(resid @ resid)
    dof = n - k - 1
    sigma2 = rss / dof

    # (Xa'Xa)^-1 diagonal via the SVD of the scaled design.
    inv_scaled_diag = (Vt.T ** 2 / (s ** 2)[None, :]).sum(axis=1)
    inv_diag = inv_scaled_diag / (col_scale ** 2)

    y_scale = max(1.0, float(np.max(np.abs(y))))
    if math.sqrt(sigma2) < 1e-12 * y_scale:
        # Exact (or numerically exact) fit: slopes are either clearly nonzero
        # or zero; report degenerate p-values instead of 0/0 t statistics.
        se = np.zeros(k)
        x_rms = col_scale[:k]
        nonzero = np.abs(beta_all[:k]) * x_rms > 1e-8 * y_scale
        p_values = np.where(nonzero, 0.0, 1.0)
    else:
        se = np.sqrt(sigma2 * inv_diag[:k])
        t_stats = beta_all[:k] / se
        p_values = np.array([student_t_two_sided_p(float(t), dof) for t in t_stats])

    return RegressionDiagnostics(
        coefficients=beta_all[:k].copy(),
        intercept=float(beta_all[k]),
        standard_errors=se,
        p_values=p_values,
        n=n,
        k=k,
        sigma2=sigma2,
    )


# ---------------------------------------------------------------------------
# ANOVA and Tukey HSD
# ---------------------------------------------------------------------------

def _validate_groups(groups: dict) -> dict[str, np.ndarray]:
    if len(groups) < 2:
        raise SampleSizeError(f"need at least 2 groups, got {len(groups)}")
    out = {}
    for label, values in groups.items():
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.shape[0] < 2:
            raise SampleSizeError(f"group {label!r} needs at least 2 samples, got {arr.shape}")
        out[str(label)] = arr
    return out


def one_way_anova(groups: dict) -> AnovaResult:
    """One-way ANOVA over label -> sample mapping; unequal sizes allowed."""
    groups = _validate_groups(groups)
    all_values = np.concatenate(list(groups.values()))
    grand_mean = all_values.mean()
    n_total = all_values.shape[0]
    n_groups = len(groups)

    ss_between = sum(g.shape[0] * (g.mean() - grand_mean) ** 2 for g in groups.values())
    ss_within = sum(float(((g - g.mean()) ** 2).sum()) for g in groups.values())
    df_between = n_groups - 1
    df_within = n_total - n_groups

    if ss_between <= 0.0:
        return AnovaResult(f_stat=0.0, df_between=df_between, df_within=df_within, p_value=1.0)
    if ss_within == 0.0:
        return AnovaResult(f_stat=math.inf, df_between=df_between, df_within=df_within, p_value=0.0)

    f_stat = (ss_between / df_between) / (ss_within / df_within)
    return AnovaResult(
        f_stat=float(f_stat),
        df_between=df_between,
        df_within=df_within,
        p_value=f_sf(float(f_stat), df_between, df_within),
    )


def tukey_hsd(groups: dict, alpha_levels: tuple[float, float] = (0.01, 0.1)) -> list[TukeyPair]:
    """All pairwise Tukey HSD comparisons with the Tukey-Kramer unequal-n correction.

    Pairs are emitted in lexicographic label order (group1 < group2) so the
    output is invariant to the ordering of the input mapping.
    """
    groups = _validate_groups(groups)
    labels = sorted(groups)
    n_groups = len(labels)
    n_total = sum(g.shape[0] for g in groups.values())
    df_within = n_total - n_groups
    mse = sum(float(((g - g.mean()) ** 2).sum()) for g in groups.values()) / df_within

    alpha_low, alpha_high = sorted(alpha_levels)
    pairs = []
    for i in range(n_groups):
        for j in range(i + 1, n_groups):
            a, b = labels[i], labels[j]
            ga, gb = groups[a], groups[b]
            diff = float(ga.mean() - gb.mean())
            se = math.sqrt(0.5 * mse * (1.0 / ga.shape[0] + 1.0 / gb.shape[0]))
            if se == 0.0:
                p_adj = 1.0 if diff == 0.0 else 0.0
            else:
                q_obs = abs(diff) / se
                p_adj = studentized_range_sf(q_obs, n_groups, df_within)
            pairs.append(TukeyPair(
                group1=a,
                group2=b,
                mean_diff=diff,
                p_adj=p_adj,
                significant_01=p_adj < alpha_low,
                significant_10=p_adj < alpha_high,
            ))
    return pairs
