"""Value-added export decomposition and factor-intensity panel regressions.

The pipeline turns inter-country input-output tables into bilateral
value-added export flows, joins factor-use ratios from socioeconomic
accounts, and estimates how comparative advantage lines up with factor
endowments under high-dimensional fixed effects.
"""

from .errors import (
    ConfigError,
    DataQualityError,
    OracleError,
    ParseError,
    RankError,
    SingularSystemError,
    StructuralError,
    ToleranceError,
    VaxhoError,
)
from .iotable import (
    IOTable,
    TechSystem,
    VAXMatrix,
    accounting_report,
    build_tech_system,
    compute_vax,
    leontief_solve,
    load_wiot,
    read_vax,
    write_vax,
    write_wiot,
)
from .panel import (
    PanelDataset,
    SEARecord,
    assemble_panel,
    assign_broad_industry,
    build_panel,
    identity_concordance,
    intensities_and_endowments,
    join_sea,
    load_concordance,
    load_sea,
    long_format,
    read_panel,
    skill_ratios,
    write_panel,
    write_sea,
)
from .hdfe import (
    DEFAULT_FE_DIMS,
    FEGroups,
    RegressionFit,
    RegressionSpec,
    build_fe_groups,
    estimate,
    estimate_by_group,
    ols,
    robust_vcov,
    spec_quartet,
    within_demean,
)
from .synth import (
    WorldParams,
    dummy_ols_oracle,
    emit_bundle,
    generate_world,
    power_series_leontief,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataQualityError", "OracleError", "ParseError",
    "RankError", "SingularSystemError", "StructuralError", "ToleranceError",
    "VaxhoError",
    "IOTable", "TechSystem", "VAXMatrix", "accounting_report",
    "build_tech_system", "compute_vax", "leontief_solve", "load_wiot",
    "read_vax", "write_vax", "write_wiot",
    "PanelDataset", "SEARecord", "assemble_panel", "assign_broad_industry",
    "build_panel", "identity_concordance", "intensities_and_endowments",
    "join_sea", "load_concordance", "load_sea", "long_format", "read_panel",
    "skill_ratios", "write_panel", "write_sea",
    "DEFAULT_FE_DIMS", "FEGroups", "RegressionFit", "RegressionSpec",
    "build_fe_groups", "estimate", "estimate_by_group", "ols", "robust_vcov",
    "spec_quartet", "within_demean",
    "WorldParams", "dummy_ols_oracle", "emit_bundle", "generate_world",
    "power_series_leontief",
    "__version__",
]
