"""Long-format trade panel construction.

Turns per-year value-added export matrices into one bilateral panel
(origin country o, destination country d, industry i, year t) and joins
factor-use ratios computed from socioeconomic accounts:

* industry level, compensation definition: labor compensation over capital
  compensation;
* industry level, physical definition: hours worked over nominal capital
  stock;
* country level: the same two ratios from sums over all valid industries of
  the country-year;
* skill ratios: high-skill hours over combined medium- and low-skill hours,
  after pushing hours through an industry concordance.

Rows are never silently deleted.  Every filter rule attaches a flag and all
log fields are present only where the underlying ratio is strictly positive
and finite; the dataset ledger accounts for every raw row exactly.

CSV layouts (UTF-8, "." decimals):

* SEA input: ``country,industry,year,lab_comp,cap_comp,va,hours,cap_stock,
  h_hs,h_ms,h_ls``.  ``cap_comp`` may be empty where ``va`` is given, in
  which case capital compensation is ``va - lab_comp``.  The three skill
  columns are optional as a block.
* Concordance: ``source_industry,target_industry,weight`` with weights
  summing to 1 per source industry.
* Panel output: fixed header ``o,d,i,t,vax,log_vax,log_lk_comp,log_LK_comp,
  log_lk_phys,log_LK_phys,log_skill_int,log_skill_end,broad_industry,flags``
  with 12 significant digits and ";"-joined flags.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataQualityError, ParseError, StructuralError
from .iotable import VAXMatrix, read_vax

logger = logging.getLogger(__name__)

SEA_HEADER = [
    "country", "industry", "year", "lab_comp", "cap_comp", "va",
    "hours", "cap_stock", "h_hs", "h_ms", "h_ls",
]
PANEL_HEADER = [
    "o", "d", "i", "t", "vax", "log_vax",
    "log_lk_comp", "log_LK_comp", "log_lk_phys", "log_LK_phys",
    "log_skill_int", "log_skill_end", "broad_industry", "flags",
]

# Flag vocabulary.  A row with none of these participates in every sample;
# each estimation sample requires only the flags touching its own columns.
FLAG_NONPOS_VAX = "nonpos_vax"
FLAG_NO_SEA = "no_sea"
FLAG_NO_LK_COMP = "no_lk_comp"
FLAG_NO_LK_COMP_COUNTRY = "no_LK_comp"
FLAG_NO_LK_PHYS = "no_lk_phys"
FLAG_NO_LK_PHYS_COUNTRY = "no_LK_phys"
FLAG_NO_SKILL_INT = "no_skill_int"
FLAG_NO_SKILL_END = "no_skill_end"

# Priority order used for the disjoint ledger partition (a dropped row is
# charged to its first matching flag).
FLAG_PRIORITY = [
    FLAG_NO_SEA, FLAG_NONPOS_VAX,
    FLAG_NO_LK_COMP, FLAG_NO_LK_COMP_COUNTRY,
    FLAG_NO_LK_PHYS, FLAG_NO_LK_PHYS_COUNTRY,
    FLAG_NO_SKILL_INT, FLAG_NO_SKILL_END,
]

BROAD_SECTIONS = ("A", "B", "C", "D+E", "F", "G", "H", "I", "J", "K", "L", "M", "other")

CONCORDANCE_WEIGHT_TOL = 1e-6


@dataclass(frozen=True)
class SEARecord:
    """Socioeconomic accounts for one (country, industry, year).

    Compensation in money units, hours in engaged-person hours, capital
    stock nominal.  The skill-hours triple is optional as a block.
    """

    country: str
    industry: str
    year: int
    lab_comp: float
    cap_comp: float
    hours: float
    cap_stock: float
    h_hs: float | None = None
    h_ms: float | None = None
    h_ls: float | None = None

    def __post_init__(self):
        vals = [self.lab_comp, self.cap_comp, self.hours, self.cap_stock]
        if not all(np.isfinite(v) for v in vals):
            raise StructuralError(
                f"non-finite SEA value for {self.country}/{self.industry}/{self.year}"
            )
        skill = [self.h_hs, self.h_ms, self.h_ls]
        present = [v is not None for v in skill]
        if any(present) and not all(present):
            raise DataQualityError(
                f"partial skill-hours block for {self.country}/{self.industry}/{self.year}: "
                "either all of h_hs,h_ms,h_ls or none"
            )
        if all(present) and not all(np.isfinite(v) for v in skill):
            raise StructuralError(
                f"non-finite skill hours for {self.country}/{self.industry}/{self.year}"
            )

    @property
    def has_skill(self) -> bool:
        return self.h_hs is not None


@dataclass(frozen=True)
class PanelDataset:
    """The assembled panel plus its filter ledger.

    ``df`` carries one row per (o, d, i, t) with the PANEL_HEADER columns
    (flags as a ";"-joined string, absent values as NaN).  The ledger maps
    ``raw`` and ``clean`` to row counts, ``primary:<flag>`` to a disjoint
    partition of the flagged rows (so raw = clean + sum of primaries), and
    ``flagged:<flag>`` to non-exclusive per-flag totals.
    """

    df: pd.DataFrame
    years: tuple[int, ...]
    ledger: dict

    def __post_init__(self):
        raw = self.ledger.get("raw", 0)
        primaries = sum(v for k, v in self.ledger.items() if k.startswith("primary:"))
        if raw != self.ledger.get("clean", 0) + primaries:
            raise StructuralError(
                f"filter ledger does not conserve rows: raw={raw}, "
                f"clean={self.ledger.get('clean', 0)}, primaries={primaries}"
            )


# ---------------------------------------------------------------------------
# SEA input
# ---------------------------------------------------------------------------

def load_sea(path) -> list[SEARecord]:
    """Read SEA records, deriving capital compensation from value added
    where it is not given separately."""
    df = pd.read_csv(path, dtype={"country": str, "industry": str})
    if list(df.columns) != SEA_HEADER:
        raise StructuralError(f"{path}: header {list(df.columns)} does not match {SEA_HEADER}")
    keys = list(zip(df["country"], df["industry"], df["year"]))
    if len(set(keys)) != len(keys):
        dup = pd.Series(keys)[pd.Series(keys).duplicated()].iloc[0]
        raise StructuralError(f"{path}: duplicate SEA key {dup}")

    records = []
    for pos, row in enumerate(df.itertuples(index=False)):
        cap = row.cap_comp
        if pd.isna(cap):
            if pd.isna(row.va):
                raise ParseError(
                    f"{path}: line {pos + 2}: cap_comp and va both missing for "
                    f"{row.country}/{row.industry}/{row.year}"
                )
            cap = row.va - row.lab_comp
        skill = [row.h_hs, row.h_ms, row.h_ls]
        skill = [None if pd.isna(v) else float(v) for v in skill]
        records.append(SEARecord(
            country=row.country, industry=row.industry, year=int(row.year),
            lab_comp=float(row.lab_comp), cap_comp=float(cap),
            hours=float(row.hours), cap_stock=float(row.cap_stock),
            h_hs=skill[0], h_ms=skill[1], h_ls=skill[2],
        ))
    return records


def write_sea(records: list[SEARecord], path) -> None:
    """Write SEA records in the documented layout (va = lab + cap)."""
    rows = []
    for r in records:
        rows.append((
            r.country, r.industry, r.year, r.lab_comp, r.cap_comp,
            r.lab_comp + r.cap_comp, r.hours, r.cap_stock,
            r.h_hs, r.h_ms, r.h_ls,
        ))
    df = pd.DataFrame(rows, columns=SEA_HEADER)
    df.to_csv(path, index=False, float_format="%.12g")


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------

def _pos(a: float, b: float) -> bool:
    return a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b)


def intensities_and_endowments(records: list[SEARecord], year: int):
    """Per-industry and per-country factor-use ratio tables for one year.

    Returns (industry frame indexed by (country, industry) with columns
    lk_comp/lk_phys, country frame indexed by country with LK_comp/LK_phys).
    An industry with non-positive inputs gets NaN in its own ratio and is
    excluded from the country aggregate for that definition; a country-year
    with no valid industries gets NaN endowments.
    """
    recs = [r for r in records if r.year == year]
    rows, agg = [], {}
    for r in recs:
        ok_comp = _pos(r.lab_comp, r.cap_comp)
        ok_phys = _pos(r.hours, r.cap_stock)
        rows.append((
            r.country, r.industry,
            r.lab_comp / r.cap_comp if ok_comp else np.nan,
            r.hours / r.cap_stock if ok_phys else np.nan,
        ))
        a = agg.setdefault(r.country, np.zeros(4))
        if ok_comp:
            a[0] += r.lab_comp
            a[1] += r.cap_comp
        if ok_phys:
            a[2] += r.hours
            a[3] += r.cap_stock
    ind = pd.DataFrame(rows, columns=["country", "industry", "lk_comp", "lk_phys"])
    ind = ind.set_index(["country", "industry"])
    crow = []
    for c, a in agg.items():
        crow.append((
            c,
            a[0] / a[1] if a[1] > 0 else np.nan,
            a[2] / a[3] if a[3] > 0 else np.nan,
        ))
    cty = pd.DataFrame(crow, columns=["country", "LK_comp", "LK_phys"]).set_index("country")
    return ind, cty


def load_concordance(path) -> dict[str, list[tuple[str, float]]]:
    """Read a source-to-target industry mapping with allocation weights."""
    df = pd.read_csv(path, dtype={"source_industry": str, "target_industry": str})
    expected = ["source_industry", "target_industry", "weight"]
    if list(df.columns) != expected:
        raise StructuralError(f"{path}: header {list(df.columns)} does not match {expected}")
    mapping: dict[str, list[tuple[str, float]]] = {}
    for row in df.itertuples(index=False):
        mapping.setdefault(row.source_industry, []).append((row.target_industry, float(row.weight)))
    for src, targets in mapping.items():
        total = sum(w for _, w in targets)
        if abs(total - 1.0) > CONCORDANCE_WEIGHT_TOL:
            raise StructuralError(
                f"{path}: weights for source industry {src!r} sum to {total}, expected 1"
            )
    return mapping


def identity_concordance(industries) -> dict[str, list[tuple[str, float]]]:
    """Pass-through mapping for data already on the target classification."""
    return {i: [(i, 1.0)] for i in industries}


def skill_ratios(records: list[SEARecord], concordance, year: int):
    """Skill-intensity tables for one year, after concordance allocation.

    Hours by skill class are pushed from the source classification onto the
    target classification with the concordance weights; the ratio is
    high-skill hours over medium- plus low-skill hours.  Sources without the
    skill block contribute nothing; targets with no allocated hours are NaN.
    """
    recs = [r for r in records if r.year == year]
    alloc: dict[tuple[str, str], np.ndarray] = {}
    totals: dict[str, np.ndarray] = {}
    for r in recs:
        if not r.has_skill:
            continue
        if r.industry not in concordance:
            raise StructuralError(
                f"industry {r.industry!r} has skill hours but no concordance entry"
            )
        src = np.array([r.h_hs, r.h_ms, r.h_ls])
        for target, w in concordance[r.industry]:
            key = (r.country, target)
            alloc[key] = alloc.get(key, 0.0) + w * src
        tot = totals.setdefault(r.country, np.zeros(3))
        tot += src

    rows = []
    for (c, i), h in alloc.items():
        lo = h[1] + h[2]
        rows.append((c, i, h[0] / lo if h[0] > 0 and lo > 0 else np.nan))
    ind = pd.DataFrame(rows, columns=["country", "industry", "skill_int"])
    ind = ind.set_index(["country", "industry"])
    crow = []
    for c, h in totals.items():
        lo = h[1] + h[2]
        crow.append((c, h[0] / lo if h[0] > 0 and lo > 0 else np.nan))
    cty = pd.DataFrame(crow, columns=["country", "skill_end"]).set_index("country")
    return ind, cty


# ---------------------------------------------------------------------------
# Broad industry sections
# ---------------------------------------------------------------------------

def assign_broad_industry(code: str) -> str:
    """Map an industry code to its broad section label.

    The leading letter selects the section; D and E merge into "D+E" and
    everything past M collapses into "other".
    """
    if not code or not code[0].isalpha() or not code[0].isupper():
        raise StructuralError(f"industry code {code!r} has no recognizable section letter")
    letter = code[0]
    if letter in ("D", "E"):
        return "D+E"
    if "A" <= letter <= "M":
        return letter
    if "N" <= letter <= "U":
        return "other"
    raise StructuralError(f"industry code {code!r} is outside sections A..U")


# ---------------------------------------------------------------------------
# Panel assembly
# ---------------------------------------------------------------------------

def long_format(vx: VAXMatrix) -> pd.DataFrame:
    """One row per (origin industry, foreign destination) of a VAXMatrix.

    The domestic column is dropped; origin rows that are identically zero
    (pruned industries) are skipped; zero or negative cells elsewhere are
    kept with the non-positive flag so every sample count stays
    reconstructible.
    """
    c = len(vx.countries)
    s = len(vx.industries)
    live = np.flatnonzero(np.abs(vx.values).sum(axis=1) > 0)
    o_idx = live // s
    i_idx = live % s
    countries = np.asarray(vx.countries)
    industries = np.asarray(vx.industries)

    # cross every live origin row with every destination, then cut d == o
    dest = np.arange(c)
    rows = np.repeat(np.arange(live.size), c)
    dcol = np.tile(dest, live.size)
    keep = dcol != o_idx[rows]
    rows, dcol = rows[keep], dcol[keep]

    vals = vx.values[live[rows], dcol]
    df = pd.DataFrame({
        "o": countries[o_idx[rows]],
        "d": countries[dcol],
        "i": industries[i_idx[rows]],
        "t": vx.year,
        "vax": vals,
    })
    df["log_vax"] = np.where(vals > 0, np.log(np.maximum(vals, 1e-300)), np.nan)
    df["nonpos"] = vals <= 0
    return df


def join_sea(fragments: pd.DataFrame, records: list[SEARecord], concordance, year: int) -> pd.DataFrame:
    """Attach origin-side ratios (and their logs) to one year's fragments."""
    ind, cty = intensities_and_endowments(records, year)
    sind, scty = skill_ratios(records, concordance, year)

    df = fragments.copy()
    key = pd.MultiIndex.from_arrays([df["o"], df["i"]])
    have_sea = key.isin(ind.index)

    def log_of(series):
        v = series.to_numpy(dtype=float)
        return np.where(np.isfinite(v) & (v > 0), np.log(np.where(v > 0, v, 1.0)), np.nan)

    ind_all = ind.reindex(key)
    cty_all = cty.reindex(df["o"])
    sind_all = sind.reindex(key)
    scty_all = scty.reindex(df["o"])

    df["log_lk_comp"] = log_of(ind_all["lk_comp"])
    df["log_lk_phys"] = log_of(ind_all["lk_phys"])
    df["log_LK_comp"] = log_of(cty_all["LK_comp"])
    df["log_LK_phys"] = log_of(cty_all["LK_phys"])
    df["log_skill_int"] = log_of(sind_all["skill_int"])
    df["log_skill_end"] = log_of(scty_all["skill_end"])
    df["has_sea"] = np.asarray(have_sea)
    return df


def _flag_string(df: pd.DataFrame) -> pd.Series:
    """Build the ";"-joined flag column from the marker columns."""
    checks = [
        (FLAG_NO_SEA, ~df["has_sea"].to_numpy()),
        (FLAG_NONPOS_VAX, df["nonpos"].to_numpy()),
        (FLAG_NO_LK_COMP, df["has_sea"].to_numpy() & df["log_lk_comp"].isna().to_numpy()),
        (FLAG_NO_LK_COMP_COUNTRY, df["has_sea"].to_numpy() & df["log_LK_comp"].isna().to_numpy()),
        (FLAG_NO_LK_PHYS, df["has_sea"].to_numpy() & df["log_lk_phys"].isna().to_numpy()),
        (FLAG_NO_LK_PHYS_COUNTRY, df["has_sea"].to_numpy() & df["log_LK_phys"].isna().to_numpy()),
        (FLAG_NO_SKILL_INT, df["log_skill_int"].isna().to_numpy()),
        (FLAG_NO_SKILL_END, df["log_skill_end"].isna().to_numpy()),
    ]
    parts = np.full(len(df), "", dtype=object)
    for name, mask in checks:
        hit = np.asarray(mask, dtype=bool)
        parts[hit] = np.where(parts[hit] == "", name, parts[hit] + ";" + name)
    return pd.Series(parts, index=df.index)


def build_panel(vax_paths, sea_path, concordance_path=None) -> PanelDataset:
    """Assemble the bilateral panel from per-year VX files and one SEA file.

    Years are processed in sorted order so identical inputs give identical
    output.  With no concordance file the SEA industries map to themselves.
    """
    records = load_sea(sea_path)
    if concordance_path is not None:
        concordance = load_concordance(concordance_path)
    else:
        concordance = identity_concordance(sorted({r.industry for r in records}))

    pieces = []
    for path in sorted(vax_paths):
        vx = read_vax(path)
        frags = long_format(vx)
        pieces.append(join_sea(frags, records, concordance, vx.year))
    if not pieces:
        raise StructuralError("no VX files supplied")
    return assemble_panel(pieces)


def assemble_panel(pieces: list[pd.DataFrame]) -> PanelDataset:
    """Merge joined per-year frames, finish flags/ledger, and sort rows."""
    df = pd.concat(pieces, ignore_index=True)
    dup = df.duplicated(subset=["o", "d", "i", "t"])
    if dup.any():
        r = df[dup].iloc[0]
        raise StructuralError(
            f"duplicate panel key (o={r['o']}, d={r['d']}, i={r['i']}, t={r['t']})"
        )
    df["broad_industry"] = df["i"].map(assign_broad_industry)
    df["flags"] = _flag_string(df)
    df = df.sort_values(["t", "o", "d", "i"], kind="mergesort").reset_index(drop=True)

    ledger = {"raw": int(len(df))}
    flagged = df["flags"] != ""
    ledger["clean"] = int((~flagged).sum())
    flag_lists = df.loc[flagged, "flags"].str.split(";")
    primary_taken = np.zeros(int(flagged.sum()), dtype=bool)
    for name in FLAG_PRIORITY:
        has = flag_lists.apply(lambda fl: name in fl).to_numpy(dtype=bool)
        ledger[f"flagged:{name}"] = int(has.sum())
        prim = has & ~primary_taken
        ledger[f"primary:{name}"] = int(prim.sum())
        primary_taken |= has
    df = df.drop(columns=["nonpos", "has_sea"])
    df = df[PANEL_HEADER]
    years = tuple(sorted(df["t"].unique().tolist()))
    ds = PanelDataset(df=df, years=years, ledger=ledger)
    logger.info(
        "panel: %d raw rows, %d clean, %d flagged",
        ledger["raw"], ledger["clean"], ledger["raw"] - ledger["clean"],
    )
    return ds


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

_FLOAT_COLS = [
    "vax", "log_vax", "log_lk_comp", "log_LK_comp",
    "log_lk_phys", "log_LK_phys", "log_skill_int", "log_skill_end",
]


def write_panel(ds: PanelDataset, path) -> None:
    """Write the panel CSV (12 significant digits, NaN as empty)."""
    out = ds.df.copy()
    for col in _FLOAT_COLS:
        v = out[col].to_numpy(dtype=float)
        out[col] = np.where(np.isfinite(v), [f"{x:.12g}" for x in v], "")
    out.to_csv(path, index=False)


def read_panel(path) -> PanelDataset:
    """Read a panel CSV back; the ledger is rebuilt from the flag column."""
    df = pd.read_csv(
        path,
        dtype={"o": str, "d": str, "i": str, "broad_industry": str, "flags": str},
        keep_default_na=False,
    )
    if list(df.columns) != PANEL_HEADER:
        raise StructuralError(f"{path}: header {list(df.columns)} does not match {PANEL_HEADER}")
    for col in _FLOAT_COLS:
        df[col] = pd.to_numeric(df[col].replace("", np.nan))
    df["t"] = df["t"].astype(int)

    ledger = {"raw": int(len(df))}
    flagged = df["flags"] != ""
    ledger["clean"] = int((~flagged).sum())
    flag_lists = df.loc[flagged, "flags"].str.split(";")
    primary_taken = np.zeros(int(flagged.sum()), dtype=bool)
    for name in FLAG_PRIORITY:
        has = flag_lists.apply(lambda fl: name in fl).to_numpy(dtype=bool)
        ledger[f"flagged:{name}"] = int(has.sum())
        prim = has & ~primary_taken
        ledger[f"primary:{name}"] = int(prim.sum())
        primary_taken |= has
    years = tuple(sorted(df["t"].unique().tolist()))
    return PanelDataset(df=df, years=years, ledger=ledger)
