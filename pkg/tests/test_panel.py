"""Tests for panel assembly, ratios, concordance, and flag accounting."""

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from vaxho.errors import DataQualityError, ParseError, StructuralError
from vaxho.iotable import VAXMatrix, build_tech_system, compute_vax, write_vax
from vaxho.panel import (
    FLAG_NO_LK_COMP,
    FLAG_NO_SEA,
    FLAG_NONPOS_VAX,
    PANEL_HEADER,
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
from vaxho.synth import WIOD_INDUSTRIES, WorldParams, generate_world


def rec(country, industry, year=2000, lab=2.0, cap=1.0, hours=10.0, stock=5.0,
        skill=None):
    hs, ms, ls = skill if skill else (None, None, None)
    return SEARecord(country=country, industry=industry, year=year,
                     lab_comp=lab, cap_comp=cap, hours=hours, cap_stock=stock,
                     h_hs=hs, h_ms=ms, h_ls=ls)


def two_by_one_vax(values=None):
    v = np.array([[3.0, 1.0], [2.0, 4.0]]) if values is None else np.asarray(values)
    return VAXMatrix(year=2000, countries=("P", "Q"), industries=("M",), values=v)


# ---------------------------------------------------------------------------
# SEA records
# ---------------------------------------------------------------------------

class TestSEA:
    def test_partial_skill_block_rejected(self):
        with pytest.raises(DataQualityError, match="partial skill"):
            SEARecord(country="P", industry="m", year=2000, lab_comp=1.0,
                      cap_comp=1.0, hours=1.0, cap_stock=1.0, h_hs=1.0)

    def test_load_derives_capital_from_value_added(self, tmp_path):
        path = tmp_path / "sea.csv"
        path.write_text(
            "country,industry,year,lab_comp,cap_comp,va,hours,cap_stock,h_hs,h_ms,h_ls\n"
            "P,m,2000,2.0,,5.0,10,4,,,\n"
        )
        (r,) = load_sea(path)
        assert r.cap_comp == 3.0
        assert not r.has_skill

    def test_load_rejects_duplicate_key(self, tmp_path):
        path = tmp_path / "sea.csv"
        path.write_text(
            "country,industry,year,lab_comp,cap_comp,va,hours,cap_stock,h_hs,h_ms,h_ls\n"
            "P,m,2000,2.0,1.0,,10,4,,,\nP,m,2000,2.0,1.0,,10,4,,,\n"
        )
        with pytest.raises(StructuralError, match="duplicate SEA key"):
            load_sea(path)

    def test_load_needs_cap_or_va(self, tmp_path):
        path = tmp_path / "sea.csv"
        path.write_text(
            "country,industry,year,lab_comp,cap_comp,va,hours,cap_stock,h_hs,h_ms,h_ls\n"
            "P,m,2000,2.0,,,10,4,,,\n"
        )
        with pytest.raises(ParseError, match="cap_comp and va"):
            load_sea(path)

    def test_write_read_round_trip(self, tmp_path):
        records = [rec("P", "M", skill=(1.0, 2.0, 3.0)), rec("P", "n", lab=4.0, cap=2.5)]
        path = tmp_path / "sea.csv"
        write_sea(records, path)
        back = load_sea(path)
        assert back == records


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------

class TestIntensities:
    def test_single_industry_country_ratio_equals_industry(self):
        ind, cty = intensities_and_endowments([rec("P", "M", lab=2, cap=1)], 2000)
        assert ind.loc[("P", "M"), "lk_comp"] == cty.loc["P", "LK_comp"] == 2.0

    def test_hand_aggregate(self):
        # (2,1) and (1,3): country ratio (2+1)/(1+3) = 3/4
        records = [rec("P", "M", lab=2, cap=1), rec("P", "n", lab=1, cap=3)]
        _, cty = intensities_and_endowments(records, 2000)
        assert_allclose(cty.loc["P", "LK_comp"], 0.75)

    def test_invalid_industry_excluded_from_aggregate(self):
        records = [rec("P", "M", lab=2, cap=1), rec("P", "n", lab=1, cap=-3)]
        ind, cty = intensities_and_endowments(records, 2000)
        assert np.isnan(ind.loc[("P", "n"), "lk_comp"])
        assert_allclose(cty.loc["P", "LK_comp"], 2.0)
        # the physical side of the bad record is still fine
        assert np.isfinite(ind.loc[("P", "n"), "lk_phys"])

    def test_no_valid_industries_gives_nan_endowment(self):
        records = [rec("P", "M", lab=-1, cap=-1)]
        _, cty = intensities_and_endowments(records, 2000)
        assert np.isnan(cty.loc["P", "LK_comp"])

    def test_aggregate_between_min_and_max(self):
        rng = np.random.default_rng(99)
        for _ in range(30):
            records = [
                rec("P", f"i{j}", lab=rng.uniform(0.5, 5), cap=rng.uniform(0.5, 5))
                for j in range(int(rng.integers(2, 8)))
            ]
            ind, cty = intensities_and_endowments(records, 2000)
            ratios = ind["lk_comp"].to_numpy()
            agg = cty.loc["P", "LK_comp"]
            assert ratios.min() - 1e-12 <= agg <= ratios.max() + 1e-12


class TestSkillRatios:
    def test_identity_concordance_half(self):
        records = [rec("P", "M", skill=(1.0, 1.0, 1.0))]
        ind, cty = skill_ratios(records, identity_concordance(["M"]), 2000)
        assert_allclose(ind.loc[("P", "M"), "skill_int"], 0.5)
        assert_allclose(cty.loc["P", "skill_end"], 0.5)

    def test_two_sources_one_target(self):
        records = [
            rec("P", "old1", skill=(4.0, 2.0, 2.0)),
            rec("P", "old2", skill=(1.0, 3.0, 1.0)),
        ]
        conc = {"old1": [("new", 0.5), ("other", 0.5)], "old2": [("new", 1.0)]}
        ind, _ = skill_ratios(records, conc, 2000)
        # new gets 0.5*(4,2,2) + 1.0*(1,3,1) = (3,4,2)
        assert_allclose(ind.loc[("P", "new"), "skill_int"], 3.0 / 6.0)

    def test_hours_conserved_by_random_concordance(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            sources = [f"s{j}" for j in range(int(rng.integers(2, 6)))]
            targets = [f"t{j}" for j in range(3)]
            conc = {}
            for s in sources:
                w = rng.dirichlet(np.ones(len(targets)))
                conc[s] = list(zip(targets, w))
            records = [rec("P", s, skill=tuple(rng.uniform(1, 5, 3))) for s in sources]
            ind, _ = skill_ratios(records, conc, 2000)
            before = np.sum([[r.h_hs, r.h_ms, r.h_ls] for r in records], axis=0)
            # reconstruct per-class totals from the internal allocation
            alloc_total = np.zeros(3)
            for s in sources:
                src = next(r for r in records if r.industry == s)
                for tgt, w in conc[s]:
                    alloc_total += w * np.array([src.h_hs, src.h_ms, src.h_ls])
            assert np.abs(alloc_total - before).max() / before.max() < 1e-9

    def test_bad_weights_rejected(self, tmp_path):
        path = tmp_path / "conc.csv"
        path.write_text("source_industry,target_industry,weight\nold,new,0.7\n")
        with pytest.raises(StructuralError, match="sum to 0.7"):
            load_concordance(path)

    def test_missing_skill_block_gives_nan(self):
        records = [rec("P", "M")]
        ind, cty = skill_ratios(records, identity_concordance(["M"]), 2000)
        assert len(ind) == 0 and len(cty) == 0


class TestBroadIndustry:
    def test_known_mappings(self):
        assert assign_broad_industry("A01") == "A"
        assert assign_broad_industry("C10-C12") == "C"
        assert assign_broad_industry("D35") == "D+E"
        assert assign_broad_industry("E36") == "D+E"
        assert assign_broad_industry("K64") == "K"
        assert assign_broad_industry("R_S") == "other"
        assert assign_broad_industry("T") == "other"

    def test_all_codes_map(self):
        allowed = {"A", "B", "C", "D+E", "F", "G", "H", "I", "J", "K", "L", "M", "other"}
        assert {assign_broad_industry(c) for c in WIOD_INDUSTRIES} <= allowed

    def test_unknown_code_rejected(self):
        for bad in ("", "9X", "x01", "Z99"):
            with pytest.raises(StructuralError):
                assign_broad_industry(bad)


# ---------------------------------------------------------------------------
# Long format and joins
# ---------------------------------------------------------------------------

class TestLongFormat:
    def test_two_country_fragments(self):
        df = long_format(two_by_one_vax())
        assert len(df) == 2
        assert set(zip(df["o"], df["d"])) == {("P", "Q"), ("Q", "P")}
        assert_allclose(sorted(df["vax"]), [1.0, 2.0])

    def test_zero_cell_flagged_not_dropped(self):
        df = long_format(two_by_one_vax([[3.0, 0.0], [2.0, 4.0]]))
        row = df[(df["o"] == "P") & (df["d"] == "Q")].iloc[0]
        assert row["nonpos"] and np.isnan(row["log_vax"])

    def test_all_zero_row_skipped(self):
        df = long_format(two_by_one_vax([[0.0, 0.0], [2.0, 4.0]]))
        assert set(df["o"]) == {"Q"}

    def test_fragment_count_scales(self):
        p = WorldParams(n_countries=4, n_industries=3, years=(2000,), seed=3)
        tables, _ = generate_world(p)
        vx = compute_vax(build_tech_system(tables[0]), tables[0])
        assert len(long_format(vx)) == 4 * 3 * 3


class TestJoinAndAssemble:
    def panel_pieces(self, records=None):
        vx = two_by_one_vax()
        if records is None:
            records = [rec("P", "M", skill=(1.0, 1.0, 1.0)),
                       rec("Q", "M", lab=1.0, cap=4.0, skill=(1.0, 1.0, 1.0))]
        frags = long_format(vx)
        conc = identity_concordance(["M"])
        return [join_sea(frags, records, conc, 2000)]

    def test_ratios_attached(self):
        ds = assemble_panel(self.panel_pieces())
        row = ds.df[ds.df["o"] == "P"].iloc[0]
        assert_allclose(row["log_lk_comp"], np.log(2.0))
        assert_allclose(row["log_LK_comp"], np.log(2.0))
        assert row["flags"] == ""

    def test_missing_sea_flagged(self):
        ds = assemble_panel(self.panel_pieces(records=[rec("P", "M")]))
        q = ds.df[ds.df["o"] == "Q"].iloc[0]
        assert FLAG_NO_SEA in q["flags"]
        assert np.isnan(q["log_lk_comp"])

    def test_zero_capital_kills_comp_keeps_phys(self):
        records = [rec("P", "M", cap=0.0), rec("Q", "M")]
        ds = assemble_panel(self.panel_pieces(records=records))
        p = ds.df[ds.df["o"] == "P"].iloc[0]
        assert FLAG_NO_LK_COMP in p["flags"]
        assert np.isnan(p["log_lk_comp"]) and np.isfinite(p["log_lk_phys"])

    def test_ledger_conserves_rows(self):
        records = [rec("P", "M", cap=0.0)]
        ds = assemble_panel(self.panel_pieces(records=records))
        led = ds.ledger
        primaries = sum(v for k, v in led.items() if k.startswith("primary:"))
        assert led["raw"] == led["clean"] + primaries

    def test_duplicate_key_rejected(self):
        pieces = self.panel_pieces() * 2
        with pytest.raises(StructuralError, match="duplicate panel key"):
            assemble_panel(pieces)

    def test_nonpos_vax_flag(self):
        vx = two_by_one_vax([[3.0, -1.0], [2.0, 4.0]])
        records = [rec("P", "M"), rec("Q", "M")]
        piece = join_sea(long_format(vx), records, identity_concordance(["M"]), 2000)
        ds = assemble_panel([piece])
        bad = ds.df[(ds.df["o"] == "P") & (ds.df["d"] == "Q")].iloc[0]
        assert FLAG_NONPOS_VAX in bad["flags"]
        assert ds.ledger["flagged:" + FLAG_NONPOS_VAX] == 1


# ---------------------------------------------------------------------------
# Persistence and the file-level entry point
# ---------------------------------------------------------------------------

class TestPanelIO:
    def build_synth_panel(self, tmp_path):
        p = WorldParams(n_countries=3, n_industries=2, years=(2000, 2001), seed=5)
        tables, sea = generate_world(p)
        vax_paths = []
        for t in tables:
            vx = compute_vax(build_tech_system(t), t)
            path = tmp_path / f"vax_{t.year}.csv"
            write_vax(vx, path)
            vax_paths.append(path)
        sea_path = tmp_path / "sea.csv"
        write_sea(sea, sea_path)
        return build_panel(vax_paths, sea_path)

    def test_build_panel_row_count(self, tmp_path):
        ds = self.build_synth_panel(tmp_path)
        # 3 origins x 2 destinations x 2 industries x 2 years
        assert ds.ledger["raw"] == 3 * 2 * 2 * 2
        assert ds.years == (2000, 2001)

    def test_write_is_deterministic(self, tmp_path):
        ds = self.build_synth_panel(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_panel(ds, a)
        write_panel(ds, b)
        assert a.read_bytes() == b.read_bytes()

    def test_round_trip(self, tmp_path):
        ds = self.build_synth_panel(tmp_path)
        path = tmp_path / "panel.csv"
        write_panel(ds, path)
        back = read_panel(path)
        assert list(back.df.columns) == PANEL_HEADER
        assert back.ledger == ds.ledger
        assert_allclose(back.df["log_vax"].to_numpy(),
                        ds.df["log_vax"].to_numpy(), rtol=1e-11)
        assert (back.df["flags"] == ds.df["flags"]).all()

    def test_sorted_by_year_then_origin(self, tmp_path):
        ds = self.build_synth_panel(tmp_path)
        key = list(zip(ds.df["t"], ds.df["o"], ds.df["d"], ds.df["i"]))
        assert key == sorted(key)
