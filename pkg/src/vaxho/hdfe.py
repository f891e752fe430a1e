"""High-dimensional fixed-effects regression by alternating projections.

Absorbs two dummy dimensions (importer-industry-year and exporter-year by
default) by iteratively subtracting group means instead of materializing
tens of thousands of indicator columns, then runs OLS with White
heteroskedasticity-robust covariance on the demeaned data.

By the Frisch-Waugh-Lovell theorem the coefficients (and the HC0 sandwich)
match the explicit-dummy regression; the absorbed-dummy count used in
degrees of freedom is the total group count minus the number of connected
components of the bipartite group graph, which is the rank the dummy block
actually contributes.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DataQualityError, RankError
from .panel import BROAD_SECTIONS

logger = logging.getLogger(__name__)

DEMEAN_TOL = 1e-8
DEMEAN_MAX_ITER = 500
RANK_TOL = 1e-10
DEFAULT_FE_DIMS = (("d", "i", "t"), ("o", "t"))
MIN_GROUP_OBS = 100


@dataclass(frozen=True)
class FEGroups:
    """Dense integer group ids per fixed-effect dimension."""

    ids: tuple[np.ndarray, ...]
    sizes: tuple[int, ...]

    @property
    def n_obs(self) -> int:
        return len(self.ids[0]) if self.ids else 0


@dataclass(frozen=True)
class RegressionSpec:
    """Everything needed to run one fixed-effects regression.

    ``regressors`` may contain interaction terms written ``"a*b"``; the
    product is formed from the raw columns before demeaning.  ``years`` and
    ``sections`` restrict the sample when given.
    """

    name: str
    dependent: str = "log_vax"
    regressors: tuple[str, ...] = ("log_lk_comp", "log_lk_comp*log_LK_comp")
    fe_dims: tuple[tuple[str, ...], ...] = DEFAULT_FE_DIMS
    years: tuple[int, ...] | None = None
    sections: tuple[str, ...] | None = None
    vcov: str = "HC1"
    demean_tol: float = DEMEAN_TOL
    max_iter: int = DEMEAN_MAX_ITER
    min_obs: int = MIN_GROUP_OBS

    def __post_init__(self):
        if self.vcov not in ("HC0", "HC1"):
            raise DataQualityError(f"unknown vcov flavor {self.vcov!r}")
        if self.demean_tol <= 0 or self.max_iter < 1:
            raise DataQualityError("demean_tol must be positive, max_iter >= 1")

    @property
    def base_columns(self) -> tuple[str, ...]:
        cols = []
        for term in (self.dependent,) + self.regressors:
            for part in term.split("*"):
                if part not in cols:
                    cols.append(part)
        return tuple(cols)


@dataclass(frozen=True)
class RegressionFit:
    """Result of one fixed-effects regression."""

    name: str
    terms: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    vcov: np.ndarray
    n_obs: int
    k: int
    g_absorbed: int
    r2_full: float
    r2_adj_full: float
    r2_within: float
    iterations: int
    converged: bool

    @property
    def tstats(self) -> np.ndarray:
        return self.coef / self.se


def spec_quartet(vcov: str = "HC1") -> tuple[RegressionSpec, ...]:
    """The four headline specifications: factor ratios by compensation and
    by physical units, each without and with the skill terms."""
    specs = []
    for label, lk, LK in (
        ("comp", "log_lk_comp", "log_LK_comp"),
        ("phys", "log_lk_phys", "log_LK_phys"),
    ):
        base = (lk, f"{lk}*{LK}")
        skill = base + ("log_skill_int", "log_skill_int*log_skill_end")
        specs.append(RegressionSpec(name=label, regressors=base, vcov=vcov))
        specs.append(RegressionSpec(name=f"{label}_skill", regressors=skill, vcov=vcov))
    return tuple(specs)


# ---------------------------------------------------------------------------
# Grouping
# ---------------------------------------------------------------------------

def _dense_codes(df: pd.DataFrame, cols: tuple[str, ...]) -> tuple[np.ndarray, int]:
    combined = None
    for col in cols:
        codes, uniques = pd.factorize(df[col], sort=False)
        codes = codes.astype(np.int64)
        combined = codes if combined is None else combined * len(uniques) + codes
    ids, uniques = pd.factorize(combined, sort=False)
    return ids.astype(np.int64), len(uniques)


def build_fe_groups(df: pd.DataFrame, dims: tuple[tuple[str, ...], ...] = DEFAULT_FE_DIMS) -> FEGroups:
    """Dense group ids per dimension, ordered by first appearance."""
    ids, sizes = [], []
    for cols in dims:
        code, size = _dense_codes(df, cols)
        ids.append(code)
        sizes.append(size)
    return FEGroups(ids=tuple(ids), sizes=tuple(sizes))


def absorbed_count(groups: FEGroups) -> int:
    """Rank contributed by the absorbed dummies.

    For two dimensions this is G1 + G2 minus the number of connected
    components of the bipartite graph linking co-occurring groups; for one
    dimension it is simply the group count.
    """
    if len(groups.sizes) == 1:
        return groups.sizes[0]
    if len(groups.sizes) != 2:
        raise DataQualityError("absorbed_count supports one or two FE dimensions")
    g1, g2 = groups.sizes
    pairs = np.unique(groups.ids[0] * g2 + groups.ids[1])
    adj = coo_matrix(
        (np.ones(pairs.size), (pairs // g2, pairs % g2 + g1)),
        shape=(g1 + g2, g1 + g2),
    )
    ncomp, _ = connected_components(adj, directed=False)
    return g1 + g2 - ncomp


# ---------------------------------------------------------------------------
# Demeaning and OLS
# ---------------------------------------------------------------------------

def within_demean(
    M: np.ndarray,
    groups: FEGroups,
    tol: float = DEMEAN_TOL,
    max_iter: int = DEMEAN_MAX_ITER,
) -> tuple[np.ndarray, int, bool]:
    """Alternating projection of the columns of M off all group means.

    Sweeps every dimension once per iteration and stops when the largest
    absolute entry change over a full sweep is at most ``tol``.  Returns
    (demeaned matrix, iterations used, converged flag); hitting max_iter
    logs a warning instead of raising.
    """
    X = np.array(M, dtype=float, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    counts = [np.bincount(ids, minlength=size).astype(float)
              for ids, size in zip(groups.ids, groups.sizes)]
    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        before = X.copy()
        for ids, size, cnt in zip(groups.ids, groups.sizes, counts):
            for j in range(X.shape[1]):
                means = np.bincount(ids, weights=X[:, j], minlength=size) / cnt
                X[:, j] -= means[ids]
        if np.abs(X - before).max(initial=0.0) <= tol:
            converged = True
            break
    if not converged:
        logger.warning("demeaning hit max_iter=%d without converging to %.1e", max_iter, tol)
    return X, iterations, converged


def ols(y: np.ndarray, X: np.ndarray, names: tuple[str, ...] | None = None):
    """Least squares with an explicit rank check.

    Raises RankError naming the most collinear column when the smallest
    singular value falls below RANK_TOL times the largest.
    """
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise RankError("design matrix is identically zero after demeaning",
                        column=names[0])
    if s[-1] < RANK_TOL * s[0]:
        j = int(np.argmax(np.abs(Vt[-1])))
        raise RankError(
            f"rank-deficient design: column {names[j]!r} is collinear "
            f"(singular value ratio {s[-1] / s[0]:.3e})",
            column=names[j],
        )
    beta = Vt.T @ ((U.T @ y) / s)
    resid = y - X @ beta
    return beta, resid


def robust_vcov(
    X: np.ndarray,
    resid: np.ndarray,
    n: int,
    k: int,
    g_absorbed: int,
    flavor: str = "HC1",
) -> np.ndarray:
    """White sandwich covariance on the demeaned design.

    HC0 is the plain sandwich; HC1 scales it by n / (n - k - g_absorbed),
    counting the absorbed dummies in the degrees of freedom.
    """
    df = n - k - g_absorbed
    if flavor == "HC1" and df <= 0:
        raise DataQualityError(
            f"non-positive degrees of freedom: n={n}, k={k}, absorbed={g_absorbed}"
        )
    bread = np.linalg.inv(X.T @ X)
    Xe = X * resid[:, None]
    V = bread @ (Xe.T @ Xe) @ bread
    if flavor == "HC1":
        V = V * (n / df)
    return (V + V.T) / 2.0


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

def _build_design(df: pd.DataFrame, spec: RegressionSpec):
    """Apply sample filters and materialize y and the regressor matrix."""
    sample = df
    if spec.years is not None:
        sample = sample[sample["t"].isin(spec.years)]
    if spec.sections is not None:
        sample = sample[sample["broad_industry"].isin(spec.sections)]
    needed = list(spec.base_columns)
    mask = np.ones(len(sample), dtype=bool)
    for col in needed:
        if col not in sample.columns:
            raise DataQualityError(f"column {col!r} missing from the panel")
        mask &= sample[col].notna().to_numpy()
    sample = sample.loc[mask]
    y = sample[spec.dependent].to_numpy(dtype=float)
    cols = []
    for term in spec.regressors:
        parts = term.split("*")
        v = sample[parts[0]].to_numpy(dtype=float).copy()
        for part in parts[1:]:
            v = v * sample[part].to_numpy(dtype=float)
        cols.append(v)
    X = np.column_stack(cols) if cols else np.empty((len(sample), 0))
    return sample, y, X


def estimate(df: pd.DataFrame, spec: RegressionSpec) -> RegressionFit:
    """Run one fixed-effects regression on the panel.

    Groups are built on the filtered sample, y and the regressors are
    demeaned jointly, and both the full-sample and within R-squared are
    reported, the former counting absorbed dummies in fitted values and
    degrees of freedom.
    """
    sample, y, X = _build_design(df, spec)
    n, k = X.shape
    if n == 0:
        raise DataQualityError(f"spec {spec.name!r}: empty sample after filters")
    if n <= k:
        raise DataQualityError(f"spec {spec.name!r}: {n} rows for {k} regressors")

    groups = build_fe_groups(sample, spec.fe_dims)
    g_absorbed = absorbed_count(groups)

    M = np.column_stack([y, X])
    Mdm, iterations, converged = within_demean(M, groups, spec.demean_tol, spec.max_iter)
    ydm, Xdm = Mdm[:, 0], Mdm[:, 1:]

    # A column absorbed by the fixed effects shrinks to roughly the demeaning
    # tolerance; the SVD ratio check below cannot see that reliably, so flag
    # it here by comparing within variation to the raw scale.
    raw_rms = np.sqrt((X ** 2).mean(axis=0)) if k else np.empty(0)
    dm_rms = np.sqrt((Xdm ** 2).mean(axis=0)) if k else np.empty(0)
    dead = np.flatnonzero(dm_rms <= 10.0 * spec.demean_tol * np.maximum(raw_rms, 1.0))
    if dead.size:
        name = spec.regressors[int(dead[0])]
        raise RankError(
            f"regressor {name!r} has no within-group variation left after "
            f"absorbing the fixed effects", column=name,
        )

    beta, resid = ols(ydm, Xdm, names=spec.regressors)
    V = robust_vcov(Xdm, resid, n, k, g_absorbed, spec.vcov)
    se = np.sqrt(np.diag(V))

    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    sst_within = float((ydm ** 2).sum())
    r2_full = 1.0 - ssr / sst if sst > 0 else float("nan")
    r2_within = 1.0 - ssr / sst_within if sst_within > 0 else float("nan")
    df_resid = n - k - g_absorbed
    if df_resid > 0 and sst > 0:
        r2_adj = 1.0 - (1.0 - r2_full) * (n - 1) / df_resid
    else:
        r2_adj = float("nan")

    logger.info(
        "spec %s: n=%d, k=%d, absorbed=%d, r2_full=%.4f (%d demeaning sweeps)",
        spec.name, n, k, g_absorbed, r2_full, iterations,
    )
    return RegressionFit(
        name=spec.name, terms=spec.regressors, coef=beta, se=se, vcov=V,
        n_obs=n, k=k, g_absorbed=g_absorbed, r2_full=r2_full,
        r2_adj_full=r2_adj, r2_within=r2_within,
        iterations=iterations, converged=converged,
    )


def estimate_by_group(
    df: pd.DataFrame,
    spec: RegressionSpec,
    grouping: str,
    threads: int = 1,
) -> list[RegressionFit]:
    """Independent fits per broad industry section or per year.

    Groups whose filtered sample is below ``spec.min_obs`` are skipped with
    a warning.  Single-year fits degenerate naturally: the year component of
    each FE dimension is constant there.  The fits are independent, so they
    may run on a thread pool; results keep the group order either way.
    """
    if grouping == "broad_industry":
        observed = set(df["broad_industry"])
        values = [s for s in BROAD_SECTIONS if s in observed]
        subspec = lambda v: replace(spec, sections=(v,), name=f"{spec.name}:{v}")
    elif grouping == "year":
        values = sorted(df["t"].unique().tolist())
        subspec = lambda v: replace(spec, years=(int(v),), name=f"{spec.name}:{v}")
    else:
        raise DataQualityError(f"unknown grouping {grouping!r}")

    def run(value):
        sp = subspec(value)
        sample, _, _ = _build_design(df, sp)
        if len(sample) < spec.min_obs:
            logger.warning(
                "skipping %s: %d rows below min_obs=%d", sp.name, len(sample), spec.min_obs
            )
            return None
        try:
            return estimate(df, sp)
        except RankError as err:
            # a single-industry section leaves industry-level regressors with
            # no variation inside the exporter-year cells; such groups cannot
            # be estimated and should not abort the rest of the sweep
            logger.warning("skipping %s: %s", sp.name, err)
            return None

    if threads <= 1 or len(values) <= 1:
        results = [run(v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, values))
    return [fit for fit in results if fit is not None]
