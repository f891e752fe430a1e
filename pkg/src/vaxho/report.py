"""Fit serialization and text tables.

Emits one CSV per fit (term, coef, se, t), a summary CSV across fits, and
plain-text tables with one column per fit and significance stars at
p < 0.1 / 0.05 / 0.01 from two-sided normal p-values (samples are large
enough that the normal reference is the natural choice; exact-t refinement
would only matter at tiny n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.stats import norm

FIT_HEADER = ["term", "coef", "se", "t"]
SUMMARY_HEADER = ["spec", "n", "k", "G_absorbed", "r2_full", "r2_adj_full", "r2_within", "converged"]


def stars(t: float) -> str:
    """Significance stars for a t-statistic: * p<0.1, ** p<0.05, *** p<0.01."""
    p = 2.0 * norm.sf(abs(t))
    if p < 0.01:
        return "***"
    if p < 0.05:
        return "**"
    if p < 0.1:
        return "*"
    return ""


def write_fit_csv(fit, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(FIT_HEADER) + "\n")
        for term, c, s in zip(fit.terms, fit.coef, fit.se):
            t = c / s if s > 0 else float("nan")
            fh.write(f"{term},{c:.12g},{s:.12g},{t:.12g}\n")


def write_summary_csv(fits, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for f in fits:
            fh.write(
                f"{f.name},{f.n_obs},{f.k},{f.g_absorbed},"
                f"{f.r2_full:.12g},{f.r2_adj_full:.12g},{f.r2_within:.12g},"
                f"{str(bool(f.converged)).lower()}\n"
            )


@dataclass(frozen=True)
class StoredFit:
    """A fit reloaded from its CSVs, sufficient for table formatting."""

    name: str
    terms: tuple[str, ...]
    coef: np.ndarray
    se: np.ndarray
    n_obs: int
    g_absorbed: int
    r2_full: float
    r2_adj_full: float
    converged: bool


def read_fits(summary_path, fit_path_of) -> list[StoredFit]:
    """Rebuild fits from summary.csv plus per-fit CSVs.

    ``fit_path_of`` maps a spec name to its fit CSV path.
    """
    summary = pd.read_csv(summary_path, dtype={"spec": str})
    fits = []
    for row in summary.itertuples(index=False):
        fdf = pd.read_csv(fit_path_of(row.spec), dtype={"term": str})
        fits.append(StoredFit(
            name=row.spec,
            terms=tuple(fdf["term"]),
            coef=fdf["coef"].to_numpy(dtype=float),
            se=fdf["se"].to_numpy(dtype=float),
            n_obs=int(row.n),
            g_absorbed=int(row.G_absorbed),
            r2_full=float(row.r2_full),
            r2_adj_full=float(row.r2_adj_full),
            converged=bool(row.converged),
        ))
    return fits


def format_table(fits, title: str) -> str:
    """One column per fit: coefficient rows with stars, standard errors in
    parentheses beneath, then observation counts and both R-squared lines.
    """
    terms: list[str] = []
    for f in fits:
        for t in f.terms:
            if t not in terms:
                terms.append(t)

    label_w = max([len(t) for t in terms] + [len("Adjusted R-squared")]) + 2
    col_w = max([len(f.name) for f in fits] + [12]) + 2

    def cell(text: str) -> str:
        return text.rjust(col_w)

    lines = [title, "=" * (label_w + col_w * len(fits))]
    lines.append(" " * label_w + "".join(cell(f.name) for f in fits))
    lines.append("-" * (label_w + col_w * len(fits)))
    for term in terms:
        coefs, ses = [], []
        for f in fits:
            if term in f.terms:
                j = f.terms.index(term)
                t = f.coef[j] / f.se[j] if f.se[j] > 0 else float("nan")
                coefs.append(cell(f"{f.coef[j]:.3f}{stars(t)}"))
                ses.append(cell(f"({f.se[j]:.3f})"))
            else:
                coefs.append(cell(""))
                ses.append(cell(""))
        lines.append(term.ljust(label_w) + "".join(coefs))
        lines.append(" " * label_w + "".join(ses))
    lines.append("-" * (label_w + col_w * len(fits)))
    lines.append("Observations".ljust(label_w) + "".join(cell(f"{f.n_obs:,}") for f in fits))
    lines.append("R-squared".ljust(label_w) + "".join(cell(f"{f.r2_full:.3f}") for f in fits))
    lines.append("Adjusted R-squared".ljust(label_w)
                 + "".join(cell(f"{f.r2_adj_full:.3f}") for f in fits))
    lines.append("Absorbed dummies".ljust(label_w)
                 + "".join(cell(f"{f.g_absorbed:,}") for f in fits))
    notes = "Note: heteroskedasticity-robust standard errors in parentheses; * p<0.1, ** p<0.05, *** p<0.01."
    lines.append("=" * (label_w + col_w * len(fits)))
    lines.append(notes)
    return "\n".join(lines) + "\n"
