import math

import numpy as np
import pytest

from irsmec.errors import ValidationError
from irsmec.experiments import (
    BenchRow,
    GroupRow,
    Scheme,
    SweepConfig,
    SweepRow,
    TABLE_COLUMNS,
    device_energies,
    format_table,
    parse_scheme,
    parse_table,
    read_table,
    emit_table,
    run_bench,
    run_sweep,
    run_trial,
    run_trial_schemes,
    stable_mix,
    valid_scheme_names,
    with_schemes,
)
from irsmec.model import SystemParams
from irsmec.scenario import ScenarioConfig

# eps * S * C * (S * C / T)^2 per device, eight devices
ALL_LOCAL = 8 * 1e-28 * 8e6 * 100 * (8e6 * 100 / 1.0) ** 2


class TestSchemes:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("greedy_irs", Scheme("greedy", "irs")),
            ("penalty_no_irs", Scheme("penalty", "no_irs")),
            ("all_offload_no_irs", Scheme("all_offload", "no_irs")),
            ("all_local", Scheme("all_local", "irs")),
            ("greedy_discrete:3", Scheme("greedy", "discrete", 3)),
            ("enumerate_quantized(4)", Scheme("enumerate", "quantized", 4)),
            ("penalty_discrete", Scheme("penalty", "discrete", None)),
        ],
    )
    def test_parse(self, text, expected):
        assert parse_scheme(text) == expected

    @pytest.mark.parametrize("name", ["greedy_irs", "all_local", "greedy_discrete:3", "all_offload_quantized:8"])
    def test_round_trip(self, name):
        assert parse_scheme(name).name == name

    @pytest.mark.parametrize("text", ["bogus", "greedy", "greedy_irs:3", "all_local:2", "greedy_discrete:0", ""])
    def test_rejects(self, text):
        with pytest.raises(ValidationError):
            parse_scheme(text)

    def test_error_lists_valid_names(self):
        with pytest.raises(ValidationError) as exc:
            parse_scheme("bogus")
        for name in valid_scheme_names():
            assert name in str(exc.value)

    def test_levels_from_system(self):
        cfg = ScenarioConfig(sys=SystemParams(L=4))
        assert parse_scheme("greedy_discrete").levels(cfg) == 4
        with pytest.raises(ValidationError):
            parse_scheme("greedy_discrete").levels(ScenarioConfig())


class TestSeeds:
    def test_stable_values(self):
        assert stable_mix(0, 0, 0) == stable_mix(0, 0, 0)
        assert len({stable_mix(0, p, t) for p in range(5) for t in range(50)}) == 250

    def test_matches_seed_sequence(self):
        state = np.random.SeedSequence([3, 1, 4]).generate_state(1, np.uint64)[0]
        assert stable_mix(3, 1, 4) == int(state)

    def test_order_matters(self):
        assert stable_mix(0, 1, 2) != stable_mix(0, 2, 1)


class TestTrials:
    def test_all_local_energy(self):
        m = run_trial(ScenarioConfig(), "all_local", seed=5)
        assert m.total_energy == pytest.approx(ALL_LOCAL, rel=1e-12)
        assert ALL_LOCAL == pytest.approx(0.4096, rel=1e-12)
        assert m.offloaded == (False,) * 8
        assert m.per_group_energy["near_irs"] == pytest.approx(ALL_LOCAL / 2, rel=1e-12)

    def test_group_energy_sums(self):
        cfg = ScenarioConfig()
        for m in run_trial_schemes(cfg, ["greedy_irs", "penalty_irs", "all_offload_irs"], seed=11):
            total = m.per_group_energy["near_irs"] + m.per_group_energy["near_server"]
            assert total == pytest.approx(m.total_energy, rel=1e-9)

    def test_device_energies(self):
        cfg = ScenarioConfig()
        _, reports = run_trial_schemes(cfg, ["greedy_irs"], seed=2, keep_reports=True)
        report, _ = reports[0]
        assert device_energies(cfg, report.solution).sum() == pytest.approx(report.objective, rel=1e-9)

    def test_deterministic(self):
        cfg = ScenarioConfig()
        a = run_trial(cfg, "penalty_irs", seed=3)
        b = run_trial(cfg, "penalty_irs", seed=3)
        assert (a.total_energy, a.offloaded) == (b.total_energy, b.offloaded)

    @pytest.mark.parametrize("seed", range(5))
    def test_enumeration_dominates(self, seed):
        cfg = ScenarioConfig()
        ms = {m.scheme: m.total_energy for m in run_trial_schemes(
            cfg, ["enumerate_irs", "greedy_irs", "penalty_irs", "all_offload_irs", "all_local"], seed)}
        for name, e in ms.items():
            assert ms["enumerate_irs"] <= e * (1 + 1e-12), name

    @pytest.mark.parametrize("seed", range(5))
    def test_irs_helps_oracle(self, seed):
        cfg = ScenarioConfig()
        ms = {m.scheme: m.total_energy for m in run_trial_schemes(cfg, ["enumerate_irs", "enumerate_no_irs"], seed)}
        assert ms["enumerate_irs"] <= ms["enumerate_no_irs"] * (1 + 1e-12)

    def test_discrete_between(self):
        cfg = ScenarioConfig(sys=SystemParams(M=20))
        ms = {m.scheme: m.total_energy for m in run_trial_schemes(
            cfg, ["enumerate_irs", "enumerate_discrete:2", "enumerate_quantized:2"], seed=4)}
        assert ms["enumerate_irs"] <= ms["enumerate_discrete:2"] * (1 + 1e-12)
        assert ms["enumerate_discrete:2"] <= ms["enumerate_quantized:2"] * (1 + 1e-12)


def small_sweep(**kw):
    base = dict(
        scenario=ScenarioConfig(), swept_param="M", values=(10, 50), trials=3,
        schemes=("greedy_irs", "all_local"),
    )
    base.update(kw)
    return SweepConfig(**base)


class TestSweep:
    def test_shape(self):
        res = run_sweep(small_sweep())
        assert len(res.rows) == 4 and len(res.groups) == 4 and len(res.trials) == 12
        assert [(r.param_value, r.scheme) for r in res.rows] == [
            (10.0, "greedy_irs"), (10.0, "all_local"), (50.0, "greedy_irs"), (50.0, "all_local")]

    def test_all_local_rows(self):
        res = run_sweep(small_sweep())
        for r in res.rows:
            if r.scheme == "all_local":
                assert r.mean_energy_J == pytest.approx(ALL_LOCAL, rel=1e-12)
                assert r.std_energy_J == pytest.approx(0.0, abs=1e-15)
                assert r.offload_prob_all == 0.0

    def test_single_trial_std_zero(self):
        res = run_sweep(small_sweep(trials=1))
        assert all(r.std_energy_J == 0.0 for r in res.rows)

    def test_aggregates_match_trials(self):
        sweep = small_sweep(values=(30,), trials=4, schemes=("greedy_irs",))
        res = run_sweep(sweep)
        energies = [m.total_energy for m in res.trials]
        assert res.rows[0].mean_energy_J == pytest.approx(np.mean(energies), rel=1e-12)
        assert res.rows[0].std_energy_J == pytest.approx(np.std(energies), rel=1e-12)
        flags = np.array([m.offloaded for m in res.trials], dtype=float)
        assert res.rows[0].offload_prob_near_irs == pytest.approx(flags[:, 4:].mean())

    def test_trial_seeds(self):
        res = run_sweep(small_sweep(values=(10,), trials=2, schemes=("all_local",), base_seed=7))
        assert [m.seed for m in res.trials] == [stable_mix(7, 0, 0), stable_mix(7, 0, 1)]

    def test_sweep_over_N(self):
        res = run_sweep(small_sweep(swept_param="N", values=(4, 6), schemes=("all_local",)))
        assert [r.mean_energy_J for r in res.rows] == pytest.approx([ALL_LOCAL / 2, ALL_LOCAL * 6 / 8], rel=1e-12)

    def test_sweep_over_L(self):
        sweep = small_sweep(swept_param="L", values=(2, 4), schemes=("greedy_discrete",))
        res = run_sweep(sweep)
        assert [r.scheme for r in res.rows] == ["greedy_discrete", "greedy_discrete"]

    def test_untimed_is_reproducible(self):
        a = run_sweep(small_sweep(), record_timing=False)
        b = run_sweep(small_sweep(), parallel=2, record_timing=False)
        assert format_table(a.rows) == format_table(b.rows)
        assert format_table(a.groups) == format_table(b.groups)
        assert all(r.mean_solver_time_s == 0.0 for r in a.rows)

    def test_with_schemes(self):
        s = with_schemes(small_sweep(), ["penalty_irs"])
        assert s.schemes == (Scheme("penalty", "irs"),)

    @pytest.mark.parametrize(
        "kw", [dict(swept_param="K"), dict(values=()), dict(trials=0), dict(schemes=()), dict(schemes=("x",))]
    )
    def test_validation(self, kw):
        with pytest.raises(ValidationError):
            small_sweep(**kw)


def sample_rows():
    return [
        SweepRow("M", 10.0, "greedy_irs", 3, 0, 0.1 + 0.2, 1e-3, 0.0125, 0.5, 0.25, 0.75),
        SweepRow("M", 30.0, "all_local", 3, 1, math.nan, math.nan, math.nan, 0.0, 0.0, 0.0),
    ]


def same(a, b):
    return all(
        (x == y) or (isinstance(x, float) and math.isnan(x) and math.isnan(y))
        for x, y in zip(vars(a).values(), vars(b).values())
    )


class TestTables:
    def test_csv_header(self):
        assert format_table(sample_rows()).splitlines()[0] == ",".join(TABLE_COLUMNS)

    def test_csv_exact_floats(self):
        line = format_table(sample_rows()).splitlines()[1]
        assert "0.30000000000000004" in line and line.endswith("0.75")

    def test_nan_encoding(self):
        assert ",nan," in format_table(sample_rows(), "csv")
        assert "null" in format_table(sample_rows(), "json")

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_round_trip(self, fmt):
        rows = sample_rows()
        back = parse_table(format_table(rows, fmt), fmt)
        assert len(back) == 2 and all(same(a, b) for a, b in zip(rows, back))

    @pytest.mark.parametrize("fmt", ["csv", "json"])
    def test_group_round_trip(self, fmt):
        rows = [GroupRow("N", 8.0, "greedy_irs", 5, 0.01, 0.02)]
        assert parse_table(format_table(rows, fmt), fmt, GroupRow) == rows

    def test_empty(self):
        assert format_table([]) == ",".join(TABLE_COLUMNS) + "\n"
        assert parse_table(format_table([])) == []
        assert parse_table(format_table([], "json"), "json") == []

    def test_file_round_trip(self, tmp_path):
        rows = sample_rows()
        for ext in ("csv", "json"):
            path = emit_table(rows, tmp_path / f"t.{ext}")
            assert all(same(a, b) for a, b in zip(rows, read_table(path)))

    def test_bad_format(self):
        with pytest.raises(ValidationError):
            format_table(sample_rows(), "xml")

    def test_bad_header(self):
        with pytest.raises(ValidationError):
            parse_table("a,b\n1,2\n")


class TestBench:
    def test_shape_and_ratio(self):
        rows = run_bench(ScenarioConfig(), "N", [4, 8], repetitions=2)
        assert [(r.algorithm, r.param_value) for r in rows] == [
            ("greedy", 4.0), ("greedy", 8.0), ("penalty", 4.0), ("penalty", 8.0)]
        assert all(isinstance(r, BenchRow) and r.repetitions == 2 for r in rows)
        assert rows[0].ratio_to_first == 1.0
        assert rows[1].ratio_to_first == pytest.approx(rows[1].median_time_s / rows[0].median_time_s)

    def test_untimed(self):
        rows = run_bench(ScenarioConfig(), "M", [10], repetitions=1, record_timing=False)
        assert all(r.median_time_s == 0.0 and math.isnan(r.ratio_to_first) for r in rows)

    def test_bad_param(self):
        with pytest.raises(ValidationError):
            run_bench(ScenarioConfig(), "L", [2])
