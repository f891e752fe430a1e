"""Pipeline configuration from a flat key = value file.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Relative paths resolve against the directory containing the config file.
Recognized keys:

    years         required; "2000-2014", a comma list, or a single year
    wiot_pattern  required; per-year table path containing "{year}"
    sea           required; SEA CSV path
    concordance   optional; skill concordance CSV path
    out_dir       output directory (default "out")
    threads       worker count (default 1)
    seed          RNG seed for anything stochastic downstream (default 0)
    vcov          HC0 or HC1 (default HC1)
    tables        subset of quartet,sections,years (default all)
    min_obs       per-group observation floor for sweeps (default 100)
    balance_tol, identity_tol, solve_tol, coeff_tol, output_floor,
    demean_tol    numeric tolerance overrides
    max_iter      demeaning iteration cap
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from . import hdfe, iotable
from .errors import ConfigError

KNOWN_KEYS = {
    "years", "wiot_pattern", "sea", "concordance", "out_dir", "threads",
    "seed", "vcov", "tables", "min_obs", "balance_tol", "identity_tol",
    "solve_tol", "coeff_tol", "output_floor", "demean_tol", "max_iter",
}
KNOWN_TABLES = ("quartet", "sections", "years")


def parse_kv_file(path) -> dict[str, str]:
    """Parse the flat key = value format, rejecting duplicates and junk."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}: line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in out:
            raise ConfigError(f"{path}: line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_years(text: str) -> tuple[int, ...]:
    text = text.strip()
    try:
        if "-" in text and "," not in text:
            lo, hi = text.split("-")
            years = tuple(range(int(lo), int(hi) + 1))
        else:
            years = tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"cannot parse years {text!r}") from exc
    if not years:
        raise ConfigError("year range is empty")
    if len(set(years)) != len(years):
        raise ConfigError(f"repeated year in {text!r}")
    return years


@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline settings with paths resolved to absolute."""

    years: tuple[int, ...]
    wiot_pattern: str
    sea: Path
    out_dir: Path
    concordance: Path | None = None
    threads: int = 1
    seed: int = 0
    vcov: str = "HC1"
    tables: tuple[str, ...] = KNOWN_TABLES
    min_obs: int = 100
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.years:
            raise ConfigError("year range is empty")
        if "{year}" not in self.wiot_pattern:
            raise ConfigError("wiot_pattern must contain {year}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.vcov not in ("HC0", "HC1"):
            raise ConfigError(f"vcov must be HC0 or HC1, got {self.vcov!r}")
        bad = set(self.tables) - set(KNOWN_TABLES)
        if bad:
            raise ConfigError(f"unknown tables {sorted(bad)}; choose from {KNOWN_TABLES}")

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        kv = parse_kv_file(path)
        unknown = set(kv) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
        for req in ("years", "wiot_pattern", "sea"):
            if req not in kv:
                raise ConfigError(f"{path}: missing required key {req!r}")
        base = path.parent

        def resolve(p: str) -> Path:
            q = Path(p)
            return q if q.is_absolute() else base / q

        def get_int(key: str, default: int) -> int:
            try:
                return int(kv.get(key, default))
            except ValueError as exc:
                raise ConfigError(f"{path}: {key} must be an integer") from exc

        tolerances = {}
        for key, default in (
            ("balance_tol", iotable.BALANCE_TOL),
            ("identity_tol", iotable.IDENTITY_TOL),
            ("solve_tol", iotable.SOLVE_TOL),
            ("coeff_tol", iotable.COEFF_TOL),
            ("output_floor", iotable.OUTPUT_FLOOR),
            ("demean_tol", hdfe.DEMEAN_TOL),
        ):
            if key in kv:
                try:
                    tolerances[key] = float(kv[key])
                except ValueError as exc:
                    raise ConfigError(f"{path}: {key} must be numeric") from exc
            else:
                tolerances[key] = default
        tolerances["max_iter"] = get_int("max_iter", hdfe.DEMEAN_MAX_ITER)

        tables = tuple(t.strip() for t in kv.get("tables", ",".join(KNOWN_TABLES)).split(",") if t.strip())
        return cls(
            years=parse_years(kv["years"]),
            wiot_pattern=str(resolve(kv["wiot_pattern"])),
            sea=resolve(kv["sea"]),
            concordance=resolve(kv["concordance"]) if "concordance" in kv else None,
            out_dir=resolve(kv.get("out_dir", "out")),
            threads=get_int("threads", 1),
            seed=get_int("seed", 0),
            vcov=kv.get("vcov", "HC1"),
            tables=tables,
            min_obs=get_int("min_obs", 100),
            tolerances=tolerances,
        )

    def wiot_path(self, year: int) -> Path:
        return Path(self.wiot_pattern.format(year=year))

    def check_inputs(self) -> None:
        """Raise ConfigError listing every missing input file."""
        missing = [str(p) for p in
                   [self.wiot_path(y) for y in self.years] + [self.sea]
                   if not Path(p).is_file()]
        if self.concordance is not None and not self.concordance.is_file():
            missing.append(str(self.concordance))
        if missing:
            raise ConfigError("missing input files: " + ", ".join(missing))
