"""Inter-country input-output tables and the value-added export decomposition.

An inter-country table records, for one year, the intermediate flows between
all (country, industry) pairs, the final demand each destination country
places on each producing industry, and gross output per industry.  From it
this module derives technical coefficients, value-added shares, and the
matrix of value-added exports by origin industry and destination country.

Rows and columns follow a country-major order: all S industries of the first
country, then all S industries of the second, and so on (N = C * S).

The CSV interchange layout is long-format with header
``origin_country,origin_industry,kind,dest_country,dest_key,value`` where
``kind`` is one of:

* ``Z`` - intermediate flow; ``dest_country``/``dest_key`` name the buying
  (country, industry).
* ``F`` - final demand; ``dest_key`` is a demand-category label, summed per
  destination country on load.
* ``X`` - gross output of the (origin_country, origin_industry) row;
  ``dest_key`` is empty.

Cells absent from the file are zero.  Files are UTF-8 with ``.`` decimals and
no thousands separators.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import (
    DataQualityError,
    ParseError,
    SingularSystemError,
    StructuralError,
    ToleranceError,
)

logger = logging.getLogger(__name__)

# Data-quality slack (real tables carry rounding noise) is deliberately
# looser than the numerical-correctness bars.
BALANCE_TOL = 1e-3    # relative row-balance slack of supplied tables
COEFF_TOL = 1e-6      # slack on column sums of A / negativity of v
OUTPUT_FLOOR = 1e-9   # gross output at or below this marks a dead industry
SOLVE_TOL = 1e-10     # residual bar for the factorized solve
PIVOT_FLOOR = 1e-12   # smallest admissible LU pivot
IDENTITY_TOL = 1e-9   # relative bar on value-added vs final-demand column sums

WIOT_HEADER = ["origin_country", "origin_industry", "kind", "dest_country", "dest_key", "value"]
VAX_HEADER = ["year", "origin_country", "origin_industry", "dest_country", "vax"]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IOTable:
    """One year's inter-country input-output table.

    Attributes
    ----------
    year : calendar year of the table
    countries : ordered country codes (length C)
    industries : ordered industry codes (length S)
    Z : (N, N) intermediate-flow matrix, N = C * S, current-price units
    F : (N, C) final demand by destination country (categories pre-summed)
    x : (N,) gross output vector
    """

    year: int
    countries: tuple[str, ...]
    industries: tuple[str, ...]
    Z: np.ndarray
    F: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        n = len(self.countries) * len(self.industries)
        if self.Z.shape != (n, n):
            raise StructuralError(
                f"Z has shape {self.Z.shape}, expected ({n}, {n}) "
                f"for {len(self.countries)} countries x {len(self.industries)} industries"
            )
        if self.F.shape != (n, len(self.countries)):
            raise StructuralError(
                f"F has shape {self.F.shape}, expected ({n}, {len(self.countries)})"
            )
        if self.x.shape != (n,):
            raise StructuralError(f"x has shape {self.x.shape}, expected ({n},)")
        for name, arr in (("Z", self.Z), ("F", self.F), ("x", self.x)):
            if not np.all(np.isfinite(arr)):
                raise StructuralError(f"{name} contains non-finite entries")

    @property
    def n(self) -> int:
        return len(self.countries) * len(self.industries)

    @property
    def row_labels(self) -> list[tuple[str, str]]:
        """(country, industry) label per row, country-major."""
        return [(c, s) for c in self.countries for s in self.industries]

    def row_index(self, country: str, industry: str) -> int:
        return self.countries.index(country) * len(self.industries) + self.industries.index(industry)

    def row_balance_residuals(self) -> np.ndarray:
        """Relative residual |x_i - (sum_j Z_ij + sum_d F_id)| / max(1, |x_i|).

        Tables are expected to balance within BALANCE_TOL; violations are
        reported by accounting_report, never silently repaired.
        """
        used = self.Z.sum(axis=1) + self.F.sum(axis=1)
        return np.abs(self.x - used) / np.maximum(1.0, np.abs(self.x))


@dataclass(frozen=True)
class TechSystem:
    """Technical coefficients and value-added shares derived from an IOTable.

    Industries pruned as degenerate have all-zero rows and columns in ``A``
    and zero in ``v``; ``keep_mask`` marks the retained ones and
    ``prune_report`` explains every drop.
    """

    A: np.ndarray
    v: np.ndarray
    keep_mask: np.ndarray
    prune_report: tuple[tuple[str, str, str], ...]

    @property
    def n_retained(self) -> int:
        return int(self.keep_mask.sum())


@dataclass(frozen=True)
class VAXMatrix:
    """Value-added exports for one year.

    ``values[i, d]`` is the value added originating in row i (an origin
    country-industry) that is finally absorbed in destination country d.
    The column of the origin's own country holds domestic absorption and is
    kept so that column sums reproduce final demand exactly.
    """

    year: int
    countries: tuple[str, ...]
    industries: tuple[str, ...]
    values: np.ndarray

    @property
    def row_labels(self) -> list[tuple[str, str]]:
        return [(c, s) for c in self.countries for s in self.industries]


@dataclass(frozen=True)
class AccountingReport:
    """Diagnostics tying a VAXMatrix back to its source table."""

    year: int
    identity_resid: np.ndarray      # per destination, relative to F column sum
    balance_resid: np.ndarray       # per row, relative
    n_pruned: int
    prune_report: tuple[tuple[str, str, str], ...]
    v_min: float
    v_max: float
    flags: tuple[str, ...]
    identity_tol: float
    balance_tol: float

    @property
    def ok(self) -> bool:
        return not self.flags

    def format(self) -> str:
        lines = [
            f"accounting report, year {self.year}",
            f"  gdp identity   max column residual {self.identity_resid.max():.3e} (tol {self.identity_tol:.0e})",
            f"  row balance    max residual {self.balance_resid.max():.3e} (tol {self.balance_tol:.0e})",
            f"  pruned         {self.n_pruned} industries",
            f"  value added    share range [{self.v_min:.6f}, {self.v_max:.6f}] over retained",
        ]
        for country, industry, reason in self.prune_report:
            lines.append(f"    pruned {country}/{industry}: {reason}")
        if self.flags:
            lines.append(f"  FLAGS ({len(self.flags)}):")
            lines.extend(f"    {f}" for f in self.flags)
        else:
            lines.append("  no flags")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _read_wiot_frame(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(df.columns) != WIOT_HEADER:
        raise StructuralError(
            f"{path}: header {list(df.columns)} does not match {WIOT_HEADER}"
        )
    value = pd.to_numeric(df["value"], errors="coerce")
    bad = np.flatnonzero(value.isna().to_numpy())
    if bad.size:
        i = int(bad[0])
        raise ParseError(
            f"{path}: non-numeric value {df['value'].iat[i]!r} at line {i + 2}, column 'value'"
        )
    df["value"] = value.astype(float)
    bad_kind = ~df["kind"].isin(["Z", "F", "X"])
    if bad_kind.any():
        i = int(np.flatnonzero(bad_kind.to_numpy())[0])
        raise StructuralError(
            f"{path}: unknown kind {df['kind'].iat[i]!r} at line {i + 2}"
        )
    return df


def load_wiot(path, year: int, balance_tol: float = BALANCE_TOL) -> IOTable:
    """Load one year's table from the documented long CSV layout.

    Final-demand categories are summed per destination country.  The row
    balance check runs and is logged; violations do not fail the load.
    """
    df = _read_wiot_frame(path)

    xrows = df[df["kind"] == "X"]
    if len(xrows) == 0:
        raise StructuralError(f"{path}: no X (gross output) rows")
    countries = tuple(dict.fromkeys(xrows["origin_country"]))
    industries = tuple(dict.fromkeys(xrows["origin_industry"]))
    c, s = len(countries), len(industries)
    n = c * s
    row_of = {(cc, ss): i * s + j for i, cc in enumerate(countries) for j, ss in enumerate(industries)}

    pairs = list(zip(xrows["origin_country"], xrows["origin_industry"]))
    seen = set()
    for p in pairs:
        if p in seen:
            raise StructuralError(f"{path}: duplicate gross-output row for {p[0]}/{p[1]}")
        seen.add(p)
    missing = set(row_of) - seen
    if missing:
        mc, ms = sorted(missing)[0]
        raise StructuralError(
            f"{path}: missing gross-output row for {mc}/{ms} ({len(missing)} missing in total)"
        )

    x = np.zeros(n)
    x[[row_of[p] for p in pairs]] = xrows["value"].to_numpy()

    def origin_rows(sub, what):
        try:
            return np.array([row_of[p] for p in zip(sub["origin_country"], sub["origin_industry"])], dtype=np.int64)
        except KeyError:
            for line, p in zip(sub.index, zip(sub["origin_country"], sub["origin_industry"])):
                if p not in row_of:
                    raise StructuralError(
                        f"{path}: unknown origin label {p[0]}/{p[1]} in {what} row at line {line + 2}"
                    ) from None
            raise

    Z = np.zeros((n, n))
    zrows = df[df["kind"] == "Z"]
    if len(zrows):
        ri = origin_rows(zrows, "Z")
        try:
            ci = np.array([row_of[p] for p in zip(zrows["dest_country"], zrows["dest_key"])], dtype=np.int64)
        except KeyError:
            for line, p in zip(zrows.index, zip(zrows["dest_country"], zrows["dest_key"])):
                if p not in row_of:
                    raise StructuralError(
                        f"{path}: unknown destination label {p[0]}/{p[1]} in Z row at line {line + 2}"
                    ) from None
            raise
        flat = ri * n + ci
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any():
            row, col = divmod(int(uniq[counts > 1][0]), n)
            raise StructuralError(
                f"{path}: duplicate Z cell for origin "
                f"{countries[row // s]}/{industries[row % s]} -> "
                f"{countries[col // s]}/{industries[col % s]}"
            )
        Z[ri, ci] = zrows["value"].to_numpy()

    F = np.zeros((n, c))
    frows = df[df["kind"] == "F"]
    if len(frows):
        ri = origin_rows(frows, "F")
        dc = frows["dest_country"].to_numpy()
        unknown = ~np.isin(dc, countries)
        if unknown.any():
            line = frows.index[unknown][0]
            raise StructuralError(
                f"{path}: unknown destination country {dc[unknown][0]!r} in F row at line {line + 2}"
            )
        di = np.array([countries.index(d) for d in dc], dtype=np.int64)
        cat, _ = pd.factorize(frows["dest_key"], sort=False)
        flat = (ri * c + di) * (cat.max() + 1) + cat
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any():
            raise StructuralError(f"{path}: duplicate F cell (same origin, destination, category)")
        np.add.at(F, (ri, di), frows["value"].to_numpy())

    table = IOTable(year=year, countries=countries, industries=industries, Z=Z, F=F, x=x)
    resid = table.row_balance_residuals()
    n_bad = int((resid > balance_tol).sum())
    if n_bad:
        logger.warning(
            "%s: %d of %d rows violate row balance (worst %.3e, tol %.0e)",
            path, n_bad, n, resid.max(), balance_tol,
        )
    else:
        logger.info("%s: row balance ok (worst %.3e)", path, resid.max())
    return table


def write_wiot(table: IOTable, path) -> None:
    """Write a table in the long CSV layout, omitting zero Z/F cells."""
    labels = table.row_labels
    recs = []
    ri, ci = np.nonzero(table.Z)
    for i, j in zip(ri, ci):
        oc, oi = labels[i]
        dc, dk = labels[j]
        recs.append((oc, oi, "Z", dc, dk, table.Z[i, j]))
    ri, ci = np.nonzero(table.F)
    for i, d in zip(ri, ci):
        oc, oi = labels[i]
        recs.append((oc, oi, "F", table.countries[d], "FD", table.F[i, d]))
    for i, (oc, oi) in enumerate(labels):
        recs.append((oc, oi, "X", "", "", table.x[i]))
    out = pd.DataFrame(recs, columns=WIOT_HEADER)
    out.to_csv(path, index=False)


def write_vax(vx: VAXMatrix, path) -> None:
    """Serialize a VAXMatrix as the long CSV (every cell, fixed row order)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(VAX_HEADER) + "\n")
        for i, (oc, oi) in enumerate(vx.row_labels):
            row = vx.values[i]
            for d, dc in enumerate(vx.countries):
                fh.write(f"{vx.year},{oc},{oi},{dc},{row[d]:.12g}\n")


def read_vax(path) -> VAXMatrix:
    """Read a VAXMatrix from the long CSV produced by write_vax."""
    df = pd.read_csv(path, dtype={"origin_country": str, "origin_industry": str, "dest_country": str})
    if list(df.columns) != VAX_HEADER:
        raise StructuralError(f"{path}: header {list(df.columns)} does not match {VAX_HEADER}")
    years = df["year"].unique()
    if len(years) != 1:
        raise StructuralError(f"{path}: expected a single year, found {sorted(years)}")
    countries = tuple(dict.fromkeys(df["origin_country"]))
    industries = tuple(dict.fromkeys(df["origin_industry"]))
    c, s = len(countries), len(industries)
    n = c * s
    if len(df) != n * c:
        raise StructuralError(
            f"{path}: {len(df)} rows, expected {n * c} for {c} countries x {s} industries"
        )
    ri = df["origin_country"].map({cc: i for i, cc in enumerate(countries)}).to_numpy() * s \
        + df["origin_industry"].map({ss: j for j, ss in enumerate(industries)}).to_numpy()
    ci = df["dest_country"].map({cc: i for i, cc in enumerate(countries)})
    if ci.isna().any():
        raise StructuralError(f"{path}: destination country not among origin countries")
    values = np.zeros((n, c))
    values[ri, ci.to_numpy(dtype=np.int64)] = df["vax"].to_numpy(dtype=float)
    return VAXMatrix(year=int(years[0]), countries=countries, industries=industries, values=values)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------

def build_tech_system(
    table: IOTable,
    output_floor: float = OUTPUT_FLOOR,
    coeff_tol: float = COEFF_TOL,
) -> TechSystem:
    """Derive technical coefficients and value-added shares.

    A_ij = Z_ij / x_j for retained columns.  An industry is pruned when its
    gross output is at or below ``output_floor`` (the division is undefined)
    or when its Z row, Z column, and F row are all zero (it is disconnected
    and would make I - A singular).  Pruned industries get zero rows and
    columns in A and zero value-added share; the report lists each drop.
    """
    n = table.n
    labels = table.row_labels
    dead_output = table.x <= output_floor
    all_zero = (
        (np.abs(table.Z).sum(axis=1) == 0)
        & (np.abs(table.Z).sum(axis=0) == 0)
        & (np.abs(table.F).sum(axis=1) == 0)
    )
    keep = ~(dead_output | all_zero)

    prune = []
    for i in np.flatnonzero(~keep):
        if dead_output[i]:
            reason = f"gross output {table.x[i]:.3g} <= output floor {output_floor:.0e}"
        else:
            reason = "all-zero intermediate row/column and final demand"
        prune.append((labels[i][0], labels[i][1], reason))

    A = np.zeros((n, n))
    kidx = np.flatnonzero(keep)
    if kidx.size:
        A[np.ix_(kidx, kidx)] = table.Z[np.ix_(kidx, kidx)] / table.x[kidx][None, :]

    neg = A < 0
    if neg.any():
        worst = A.min()
        if worst < -coeff_tol:
            i, j = np.unravel_index(np.argmin(A), A.shape)
            raise DataQualityError(
                f"negative technical coefficient {worst:.3e} at "
                f"{labels[i][0]}/{labels[i][1]} -> {labels[j][0]}/{labels[j][1]}"
            )
        logger.warning("clamped %d tiny negative coefficients (worst %.3e)", int(neg.sum()), worst)
        A[neg] = 0.0

    v = np.zeros(n)
    if kidx.size:
        colsum = A[:, kidx].sum(axis=0)
        over = colsum > 1.0 + coeff_tol
        if over.any():
            j = kidx[np.flatnonzero(over)[0]]
            raise DataQualityError(
                f"column sum of A is {colsum[np.flatnonzero(over)[0]]:.9f} > 1 + {coeff_tol:.0e} "
                f"for {labels[j][0]}/{labels[j][1]} (value added would be negative)"
            )
        vk = 1.0 - colsum
        small_neg = vk < 0
        if small_neg.any():
            logger.warning(
                "clamped %d slightly negative value-added shares (worst %.3e)",
                int(small_neg.sum()), vk.min(),
            )
            vk[small_neg] = 0.0
        v[kidx] = vk

    return TechSystem(A=A, v=v, keep_mask=keep, prune_report=tuple(prune))


def leontief_solve(
    sys: TechSystem,
    B: np.ndarray,
    solve_tol: float = SOLVE_TOL,
    pivot_floor: float = PIVOT_FLOOR,
) -> np.ndarray:
    """Solve (I - A) M = B on the retained subsystem.

    Uses one LU factorization against all right-hand-side columns; the
    explicit inverse is never formed.  Rows of M for pruned industries are
    zero.  The residual check ``max|(I-A)M - B| <= solve_tol * max|B|`` is
    enforced on the retained block.
    """
    onedim = B.ndim == 1
    B2 = B[:, None] if onedim else B
    if B2.shape[0] != sys.A.shape[0]:
        raise StructuralError(
            f"right-hand side has {B2.shape[0]} rows, system has {sys.A.shape[0]}"
        )
    M = np.zeros_like(B2, dtype=float)
    kidx = np.flatnonzero(sys.keep_mask)
    if kidx.size:
        IA = np.eye(kidx.size) - sys.A[np.ix_(kidx, kidx)]
        with warnings.catch_warnings():
            # singularity is diagnosed by the explicit pivot check below
            warnings.simplefilter("ignore", LinAlgWarning)
            lu, piv = lu_factor(IA, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if pivots.min() < pivot_floor:
            k = int(np.argmin(pivots))
            raise SingularSystemError(
                f"retained system numerically singular: pivot {pivots[k]:.3e} < "
                f"{pivot_floor:.0e} at retained column {int(kidx[k])}",
                pivot_index=int(kidx[k]),
            )
        Bk = B2[kidx]
        Mk = lu_solve((lu, piv), Bk, check_finite=False)
        resid = np.abs(IA @ Mk - Bk).max(initial=0.0)
        bound = solve_tol * np.abs(Bk).max(initial=0.0)
        if resid > bound:
            raise ToleranceError(
                f"solve residual {resid:.3e} exceeds {solve_tol:.0e} * max|B| = {bound:.3e}"
            )
        M[kidx] = Mk
    return M[:, 0] if onedim else M


def compute_vax(
    sys: TechSystem,
    table: IOTable,
    check: bool = True,
    identity_tol: float = IDENTITY_TOL,
    solve_tol: float = SOLVE_TOL,
) -> VAXMatrix:
    """Value-added exports: diag(v) applied to the Leontief solve of F.

    Because the row vector of value-added shares equals 1'(I - A) on the
    retained subsystem, column sums of the result reproduce the retained
    final-demand column sums exactly; with ``check`` the identity is
    enforced at ``identity_tol`` (relative).
    """
    M = leontief_solve(sys, table.F, solve_tol=solve_tol)
    values = sys.v[:, None] * M
    if check:
        resid = _identity_residuals(sys, table, values)
        if resid.max(initial=0.0) > identity_tol:
            d = int(np.argmax(resid))
            raise ToleranceError(
                f"GDP identity breach in destination {table.countries[d]}: "
                f"relative residual {resid[d]:.3e} > {identity_tol:.0e}"
            )
    return VAXMatrix(year=table.year, countries=table.countries,
                     industries=table.industries, values=values)


def _identity_residuals(sys: TechSystem, table: IOTable, values: np.ndarray) -> np.ndarray:
    """Per-destination |colsum(VX) - colsum(F over retained rows)|, relative."""
    f_ret = table.F[sys.keep_mask].sum(axis=0)
    got = values.sum(axis=0)
    return np.abs(got - f_ret) / np.maximum(np.abs(f_ret), 1.0)


def accounting_report(
    table: IOTable,
    vx: VAXMatrix,
    identity_tol: float = IDENTITY_TOL,
    balance_tol: float = BALANCE_TOL,
    output_floor: float = OUTPUT_FLOOR,
    coeff_tol: float = COEFF_TOL,
) -> AccountingReport:
    """Quality gate around the decomposition; reports, never raises."""
    sys = build_tech_system(table, output_floor=output_floor, coeff_tol=coeff_tol)
    identity = _identity_residuals(sys, table, vx.values)
    balance = table.row_balance_residuals()

    flags = []
    for d in np.flatnonzero(identity > identity_tol):
        flags.append(
            f"gdp identity breach, destination {table.countries[d]}: {identity[d]:.3e}"
        )
    n_unbal = int((balance > balance_tol).sum())
    if n_unbal:
        flags.append(f"row balance breach in {n_unbal} rows (worst {balance.max():.3e})")
    dropped_f = table.F[~sys.keep_mask]
    if dropped_f.size and np.abs(dropped_f).sum() > 0:
        flags.append(
            f"pruned industries carry final demand totalling {dropped_f.sum():.6g} "
            "(excluded from the identity)"
        )
    nonzero_pruned = np.abs(vx.values[~sys.keep_mask]).max(initial=0.0)
    if nonzero_pruned > 0:
        flags.append(f"pruned industry rows of VX not zero (max {nonzero_pruned:.3e})")

    vk = sys.v[sys.keep_mask]
    return AccountingReport(
        year=table.year,
        identity_resid=identity,
        balance_resid=balance,
        n_pruned=int((~sys.keep_mask).sum()),
        prune_report=sys.prune_report,
        v_min=float(vk.min()) if vk.size else float("nan"),
        v_max=float(vk.max()) if vk.size else float("nan"),
        flags=tuple(flags),
        identity_tol=identity_tol,
        balance_tol=balance_tol,
    )
