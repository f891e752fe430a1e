"""Synthetic economies with planted structure, plus brute-force oracles.

The generator builds multi-country worlds where the quantity of interest is
known by construction: bilateral value-added exports follow

    log VX[o,i,d,t] = mu + a[d,i,t] + s[o,t]
                      + beta1 * z[o,i,t] + kappa_i * z[o,i,t] * Z[o,t] + eps

with z the log industry labor/capital compensation ratio and Z its country
aggregate, both computed from the generated socioeconomic accounts with the
same arithmetic the panel stage uses.  The emitted input-output tables are
exactly row-balanced and reproduce the planted VX through the decomposition
pipeline, so an estimated interaction coefficient has kappa as its true
value.

Factor ratios need cross-country variation within an industry, otherwise
the industry-level ratio is a function of (i, t) alone and the
importer-industry-year dummies absorb it; ``share_jitter`` controls that
variation while keeping the industry intensity ranking stable.

The two oracles (power-series Leontief, dense dummy OLS) are deliberately
naive reimplementations used only by tests to cross-check the fast paths.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import solve as dense_solve
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import OracleError, StructuralError
from .iotable import IOTable, write_wiot
from .panel import SEARecord, write_sea

# Industry codes of the 56-sector classification the broad-section mapping
# expects; synthetic worlds take the first S of these.
WIOD_INDUSTRIES = (
    "A01", "A02", "A03", "B", "C10-C12", "C13-C15", "C16", "C17", "C18",
    "C19", "C20", "C21", "C22", "C23", "C24", "C25", "C26", "C27", "C28",
    "C29", "C30", "C31_C32", "C33", "D35", "E36", "E37-E39", "F", "G45",
    "G46", "G47", "H49", "H50", "H51", "H52", "H53", "I", "J58", "J59_J60",
    "J61", "J62_J63", "K64", "K65", "K66", "L68", "M69_M70", "M71", "M72",
    "M73", "M74_M75", "N", "O84", "P85", "Q", "R_S", "T", "U",
)

MAX_COLUMN_SUM = 0.9
ORACLE_MAX_N = 64
ORACLE_MAX_OBS = 2000
RANK_TOL = 1e-10


def _country_codes(n: int) -> tuple[str, ...]:
    return tuple(chr(65 + a) + chr(65 + b) for a in range(26) for b in range(26))[:n]


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _logit(x):
    return np.log(x / (1.0 - x))


@dataclass(frozen=True)
class WorldParams:
    """Knobs of the synthetic world.

    ``labor_shares`` are per-industry Cobb-Douglas exponents in (0, 1)
    (default: evenly spread over [0.25, 0.75]); ``endow_ratios`` are
    per-country aggregate labor/capital levels (default: log-evenly spread
    over [0.5, 2]).  ``kappa`` is the planted interaction coefficient,
    scalar or one value per industry.  Column sums of the technical
    coefficient matrix land in ``use_range`` exactly, so they stay at or
    below 0.9 whenever the range does.
    """

    n_countries: int = 6
    n_industries: int = 8
    years: tuple[int, ...] = (2000, 2001, 2002)
    labor_shares: tuple[float, ...] | None = None
    endow_ratios: tuple[float, ...] | None = None
    kappa: float | tuple[float, ...] = 0.0
    beta1: float = -0.3
    share_jitter: float = 0.1
    noise_sigma: float = 0.2
    fe_sigma: float = 0.4
    endow_drift: float = 0.05
    price_spread: float = 0.05
    va_scale: float = 20.0
    demand_scale: float = 8.0
    use_range: tuple[float, float] = (0.30, 0.55)
    density: float = 0.5
    import_density: float = 0.08
    diag_share: float = 0.65
    import_share: float = 0.10
    skill_shares: tuple[float, ...] | None = None
    seed: int = 12345

    def __post_init__(self):
        if self.n_countries < 2:
            raise StructuralError("need at least 2 countries")
        if not 1 <= self.n_industries <= len(WIOD_INDUSTRIES):
            raise StructuralError(
                f"n_industries must be in [1, {len(WIOD_INDUSTRIES)}]"
            )
        if len(self.years) == 0:
            raise StructuralError("need at least one year")
        for name in ("labor_shares", "skill_shares"):
            shares = getattr(self, name)
            if shares is not None:
                if len(shares) != self.n_industries:
                    raise StructuralError(f"{name} must have one entry per industry")
                if not all(0 < s < 1 for s in shares):
                    raise StructuralError(f"{name} must lie strictly inside (0, 1)")
        if self.endow_ratios is not None:
            if len(self.endow_ratios) != self.n_countries:
                raise StructuralError("endow_ratios must have one entry per country")
            if not all(r > 0 for r in self.endow_ratios):
                raise StructuralError("endow_ratios must be positive")
        lo, hi = self.use_range
        if not (0 <= lo <= hi <= MAX_COLUMN_SUM):
            raise StructuralError(
                f"use_range must satisfy 0 <= lo <= hi <= {MAX_COLUMN_SUM}"
            )
        fracs = (self.diag_share, self.import_share)
        if not all(0 <= f <= 1 for f in fracs) or sum(fracs) > 1:
            raise StructuralError("diag_share and import_share must fit inside [0, 1]")
        k = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        if k.shape not in ((1,), (self.n_industries,)):
            raise StructuralError("kappa must be scalar or one value per industry")
        if self.noise_sigma < 0 or self.share_jitter < 0:
            raise StructuralError("noise_sigma and share_jitter must be nonnegative")

    @property
    def kappa_vector(self) -> np.ndarray:
        k = np.atleast_1d(np.asarray(self.kappa, dtype=float))
        return np.full(self.n_industries, k[0]) if k.size == 1 else k


def _random_coefficients(rng, p: WorldParams, C: int, S: int):
    """Technical coefficient matrix with exact column sums in use_range."""
    n = C * S
    u = rng.uniform(p.use_range[0], p.use_range[1], n)
    country = np.repeat(np.arange(C), S)
    same = country[:, None] == country[None, :]
    eye = np.eye(n, dtype=bool)

    raw = rng.uniform(0.2, 1.0, (n, n))
    dom = raw * (same & ~eye & (rng.random((n, n)) < p.density))
    imp = raw * (~same & (rng.random((n, n)) < p.import_density))

    A = np.zeros((n, n))
    diag_mass = p.diag_share * u
    dom_frac = 1.0 - p.diag_share - p.import_share
    for block, frac in ((dom, dom_frac), (imp, p.import_share)):
        colsum = block.sum(axis=0)
        live = colsum > 0
        A[:, live] += block[:, live] / colsum[live] * (frac * u[live])
        # a column with no candidate suppliers sends the mass to its diagonal
        diag_mass = diag_mass + np.where(live, 0.0, frac * u)
    A[np.arange(n), np.arange(n)] += diag_mass
    if A.sum(axis=0).max() > MAX_COLUMN_SUM + 1e-12:
        raise StructuralError("generated column sums exceed the 0.9 bound")
    return A, u


def generate_world(p: WorldParams):
    """Build (one IOTable per year, SEA records) with the planted signal.

    Deterministic per seed.  Final demand entries implied by the plant are
    clipped at zero in the rare case they come out negative, and the table
    is then recomputed honestly so all accounting identities still hold
    exactly; clip counts are available via ``generation_diagnostics``.
    """
    tables, sea, diags = _generate(p)
    return tables, sea


def generation_diagnostics(p: WorldParams) -> dict:
    """Per-year count of final-demand cells clipped at zero."""
    _, _, diags = _generate(p)
    return diags


def _generate(p: WorldParams):
    rng = np.random.default_rng(p.seed)
    C, S = p.n_countries, p.n_industries
    countries = _country_codes(C)
    industries = WIOD_INDUSTRIES[:S]
    n = C * S

    theta = np.asarray(p.labor_shares if p.labor_shares is not None
                       else np.linspace(0.25, 0.75, S))
    rho = np.asarray(p.endow_ratios if p.endow_ratios is not None
                     else np.geomspace(0.5, 2.0, C))
    skill = np.asarray(p.skill_shares if p.skill_shares is not None
                       else np.linspace(0.15, 0.6, S))
    kappa = p.kappa_vector
    mu = np.log(p.demand_scale)

    jit = rng.normal(0.0, p.share_jitter, (C, S))
    sk_jit = rng.normal(0.0, p.share_jitter, (C, S))
    sk_tilt = np.linspace(-0.5, 0.5, C)
    wage = np.exp(rng.normal(0.0, p.price_spread, C))
    rent = np.exp(rng.normal(0.0, p.price_spread, C))

    tables, sea, clip_counts = [], [], {}
    for year in p.years:
        rho_t = rho * np.exp(rng.normal(0.0, p.endow_drift, C))
        th = _sigmoid(_logit(theta)[None, :] + jit + rng.normal(0.0, 0.02, (C, S)))
        scale = np.exp(rng.normal(np.log(p.va_scale), 0.3, (C, S)))
        lab = th * scale * np.sqrt(rho_t)[:, None]
        cap = (1.0 - th) * scale / np.sqrt(rho_t)[:, None]
        hours = lab / wage[:, None]
        stock = cap / rent[:, None]
        sk = _sigmoid(_logit(skill)[None, :] + sk_jit + sk_tilt[:, None]
                      + rng.normal(0.0, 0.02, (C, S)))
        h_hs = sk * hours
        h_ms = 0.6 * (1.0 - sk) * hours
        h_ls = 0.4 * (1.0 - sk) * hours

        for ci, c in enumerate(countries):
            for si, ind in enumerate(industries):
                sea.append(SEARecord(
                    country=c, industry=ind, year=year,
                    lab_comp=float(lab[ci, si]), cap_comp=float(cap[ci, si]),
                    hours=float(hours[ci, si]), cap_stock=float(stock[ci, si]),
                    h_hs=float(h_hs[ci, si]), h_ms=float(h_ms[ci, si]),
                    h_ls=float(h_ls[ci, si]),
                ))

        # the same ratios the panel stage recomputes from the SEA
        z = np.log(lab / cap)                            # (C, S)
        Z = np.log(lab.sum(axis=1) / cap.sum(axis=1))    # (C,)

        # most of the importer-side effect sits at the (d, t) level: it
        # scales whole final-demand columns and so cannot push implied
        # final-demand cells negative, unlike industry-level dispersion
        a_dit = (rng.normal(0.0, 0.8 * p.fe_sigma, C)[:, None]
                 + rng.normal(0.0, 0.6 * p.fe_sigma, (C, S)))
        s_ot = rng.normal(0.0, p.fe_sigma, C)
        eps = rng.normal(0.0, p.noise_sigma, (C, S, C))
        logvx = (
            mu
            + a_dit.T[None, :, :]
            + s_ot[:, None, None]
            + p.beta1 * z[:, :, None]
            + (kappa[None, :] * z * Z[:, None])[:, :, None]
            + eps
        )
        vx_star = np.exp(logvx).reshape(n, C)

        A, u = _random_coefficients(rng, p, C, S)
        v = 1.0 - u
        G = vx_star / v[:, None]
        ia = np.eye(n) - A
        F = ia @ G
        neg = F < 0
        clip_counts[year] = int(neg.sum())
        if neg.any():
            F[neg] = 0.0
            G = dense_solve(ia, F)
        x = G.sum(axis=1)
        Zf = A * x[None, :]
        tables.append(IOTable(year=year, countries=countries,
                              industries=industries, Z=Zf, F=F, x=x))
    return tables, sea, clip_counts


def emit_bundle(p: WorldParams, outdir) -> list:
    """Write a complete runnable input set: per-year tables, SEA,
    pass-through concordance, a pipeline config, and a checksum manifest.

    Returns the written paths (checksums file last).
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    tables, sea = generate_world(p)

    paths = []
    for table in tables:
        path = out / f"wiot_{table.year}.csv"
        write_wiot(table, path)
        paths.append(path)
    sea_path = out / "sea.csv"
    write_sea(sea, sea_path)
    paths.append(sea_path)

    conc_path = out / "concordance.csv"
    industries = WIOD_INDUSTRIES[:p.n_industries]
    with open(conc_path, "w", encoding="utf-8") as fh:
        fh.write("source_industry,target_industry,weight\n")
        for ind in industries:
            fh.write(f"{ind},{ind},1\n")
    paths.append(conc_path)

    cfg_path = out / "pipeline.cfg"
    years = sorted(p.years)
    with open(cfg_path, "w", encoding="utf-8") as fh:
        fh.write("# synthetic world, runnable end to end\n")
        if list(range(years[0], years[-1] + 1)) == years:
            fh.write(f"years = {years[0]}-{years[-1]}\n")
        else:
            fh.write("years = " + ",".join(str(y) for y in years) + "\n")
        fh.write("wiot_pattern = wiot_{year}.csv\n")
        fh.write("sea = sea.csv\n")
        fh.write("concordance = concordance.csv\n")
        fh.write("out_dir = out\n")
        fh.write("threads = 1\n")
        fh.write(f"seed = {p.seed}\n")
        fh.write("vcov = HC1\n")
        fh.write("tables = quartet,sections,years\n")
    paths.append(cfg_path)

    manifest = out / "checksums.txt"
    with open(manifest, "w", encoding="utf-8") as fh:
        for path in sorted(paths, key=lambda q: q.name):
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            fh.write(f"{digest}  {path.name}\n")
    paths.append(manifest)
    return paths


# ---------------------------------------------------------------------------
# Oracles (test-scale only)
# ---------------------------------------------------------------------------

def power_series_leontief(A: np.ndarray, B: np.ndarray, k_max: int = 200) -> np.ndarray:
    """Truncated series sum_{k=0}^{k_max} A^k B.

    Requires max column sum of A strictly below 1 and N <= 64; raises if the
    per-term column-sum norm stops shrinking (divergence).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise OracleError("A must be square")
    if A.shape[0] > ORACLE_MAX_N:
        raise OracleError(f"oracle limited to N <= {ORACLE_MAX_N}")
    colsum = np.abs(A).sum(axis=0).max(initial=0.0)
    if colsum >= 1.0:
        raise OracleError(f"max column sum {colsum:.6f} >= 1, series may diverge")
    onedim = B.ndim == 1
    term = (B[:, None] if onedim else B).astype(float).copy()
    total = term.copy()
    prev = np.abs(term).sum(axis=0).max(initial=0.0)
    for _ in range(k_max):
        term = A @ term
        norm = np.abs(term).sum(axis=0).max(initial=0.0)
        if norm > prev + 1e-30:
            raise OracleError("power series diverging: term norms increasing")
        prev = norm
        total += term
    return total[:, 0] if onedim else total


def _component_labels(ids1: np.ndarray, ids2: np.ndarray, g1: int, g2: int):
    """Connected components of the bipartite group graph."""
    pairs = np.unique(ids1.astype(np.int64) * g2 + ids2.astype(np.int64))
    r = pairs // g2
    c = pairs % g2 + g1
    adj = coo_matrix((np.ones(pairs.size), (r, c)), shape=(g1 + g2, g1 + g2))
    ncomp, labels = connected_components(adj, directed=False)
    return ncomp, labels


def dummy_ols_oracle(y: np.ndarray, X: np.ndarray, ids1: np.ndarray, ids2: np.ndarray):
    """Explicit-dummy least squares with HC0 errors, for cross-checking.

    Builds the full indicator matrix for both group dimensions, dropping one
    second-dimension reference column per connected component, and solves the
    dense system.  Returns (coefficients, HC0 standard errors, residuals),
    the first two restricted to the X columns.  Rank loss beyond the
    expected inter-dimension collinearity is an oracle error.
    """
    y = np.asarray(y, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] != y.size:
        X = X.T
    numel = y.size
    if numel > ORACLE_MAX_OBS:
        raise OracleError(f"oracle limited to n <= {ORACLE_MAX_OBS}")
    ids1 = np.asarray(ids1, dtype=np.int64)
    ids2 = np.asarray(ids2, dtype=np.int64)
    g1 = int(ids1.max()) + 1
    g2 = int(ids2.max()) + 1
    k = X.shape[1]

    ncomp, labels = _component_labels(ids1, ids2, g1, g2)
    drop = []
    seen = set()
    for j in range(g2):
        comp = labels[g1 + j]
        if comp not in seen:
            seen.add(comp)
            drop.append(j)
    keep2 = [j for j in range(g2) if j not in set(drop)]

    D1 = np.zeros((numel, g1))
    D1[np.arange(numel), ids1] = 1.0
    D2 = np.zeros((numel, len(keep2)))
    for col, j in enumerate(keep2):
        D2[ids2 == j, col] = 1.0
    W = np.hstack([X, D1, D2])

    s = np.linalg.svd(W, compute_uv=False)
    rank = int((s > RANK_TOL * s[0]).sum()) if s.size and s[0] > 0 else 0
    if rank < W.shape[1]:
        raise OracleError(
            f"design rank {rank} below expected {W.shape[1]}: "
            "a regressor is collinear with the dummies"
        )

    beta, *_ = np.linalg.lstsq(W, y, rcond=None)
    resid = y - W @ beta
    bread = np.linalg.inv(W.T @ W)
    We = W * resid[:, None]
    vcov = bread @ (We.T @ We) @ bread
    se = np.sqrt(np.diag(vcov)[:k])
    return beta[:k], se, resid
