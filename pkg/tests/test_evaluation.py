import numpy as np
import pytest

from mimo_ae.detectors import evm, gs_detect
from mimo_ae.errors import ConfigurationError
from mimo_ae.evaluation import (
    AeTrainingProfile,
    CSV_HEADER,
    Scenario,
    ScenarioKind,
    default_scenarios,
    emit_csv,
    emit_report,
    evaluate_checks,
    parse_csv,
    run_block,
    sweep,
    training_matrix,
)
from mimo_ae.signal_model import SystemConfig, build_coherence_block, substream

DESK = SystemConfig(m=64, k=8, master_seed=11)
TOY = SystemConfig(m=16, k=2, master_seed=11)
FAST_PROFILE = AeTrainingProfile(n_mixtures=60, max_epochs=50)


class TestRunBlock:
    def test_full_bw_noiseless_evm_below_one_percent(self):
        block = build_coherence_block(DESK, float("inf"), 0)
        result = run_block(block, Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED), DESK)
        assert 100 * np.sqrt(result.err_power / result.ref_power) < 1.0

    def test_array_reduced_ndiv1_equals_full(self):
        block = build_coherence_block(DESK, 5.0, 1)
        full = run_block(block, Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED), DESK)
        reduced = run_block(
            block, Scenario(kind=ScenarioKind.ARRAY_REDUCED, n_div=1), DESK
        )
        assert full.err_power == reduced.err_power

    def test_ae_ndiv1_close_to_full_at_toy_scale(self):
        err = ref = err_full = 0.0
        for block_id in range(3):
            block = build_coherence_block(TOY, 15.0, block_id)
            ae_res = run_block(
                block,
                Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=1),
                TOY,
                profile=FAST_PROFILE,
            )
            full_res = run_block(
                block, Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED), TOY
            )
            err += ae_res.err_power
            err_full += full_res.err_power
            ref += ae_res.ref_power
        evm_ae = 100 * np.sqrt(err / ref)
        evm_full = 100 * np.sqrt(err_full / ref)
        assert abs(evm_ae - evm_full) < 2.0

    def test_admm_single_cluster_rho_zero_equals_full(self):
        block = build_coherence_block(DESK, 10.0, 2)
        full = run_block(
            block,
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED),
            DESK,
        )
        admm = run_block(
            block,
            Scenario(
                kind=ScenarioKind.DECENTRALIZED_ADMM,
                clusters=1,
                rho=0.0,
                t_inner=1,
            ),
            DESK,
        )
        assert abs(np.sqrt(admm.err_power) - np.sqrt(full.err_power)) < 1e-10

    def test_ae_result_carries_ledger_and_recon(self):
        block = build_coherence_block(TOY, 10.0, 0)
        result = run_block(
            block,
            Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=4),
            TOY,
            profile=FAST_PROFILE,
        )
        assert result.ledger is not None
        assert result.ledger.latent_samples == (32 // 4) * TOY.n_re
        assert 0 <= result.recon_err_power
        assert result.recon_ref_power > 0

    def test_scenario_validation(self):
        with pytest.raises(ConfigurationError):
            Scenario(kind=ScenarioKind.AE_CENTRALIZED)
        with pytest.raises(ConfigurationError):
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED, n_div=4)
        with pytest.raises(ConfigurationError):
            Scenario(kind=ScenarioKind.DECENTRALIZED_ADMM)


class TestTrainingMatrix:
    def test_contains_original_columns(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((4, 12)) + 1j * rng.standard_normal((4, 12))
        x = training_matrix(y, 20, substream(1, "mix"))
        assert x.shape == (8, 32)
        np.testing.assert_array_equal(x[:4, :12], y.real)
        np.testing.assert_array_equal(x[4:, :12], y.imag)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        y = rng.standard_normal((4, 12)) + 1j * rng.standard_normal((4, 12))
        a = training_matrix(y, 20, substream(9, "mix"))
        b = training_matrix(y, 20, substream(9, "mix"))
        np.testing.assert_array_equal(a, b)

    def test_mixtures_stay_in_complex_span(self):
        rng = np.random.default_rng(2)
        h = rng.standard_normal((16, 3)) + 1j * rng.standard_normal((16, 3))
        s = rng.standard_normal((3, 12)) + 1j * rng.standard_normal((3, 12))
        y = h @ s
        x = training_matrix(y, 40, substream(3, "mix"))
        mixed = x[:16] + 1j * x[16:]
        residual = mixed - h @ np.linalg.lstsq(h, mixed, rcond=None)[0]
        assert np.max(np.abs(residual)) < 1e-10


class TestSweep:
    def test_record_count_and_order(self):
        scenarios = default_scenarios(n_div_list=(2, 8))
        records = sweep(TOY, scenarios, [0.0, 10.0], 2, FAST_PROFILE)
        assert len(records) == len(scenarios) * 2
        keys = [(r.scenario, r.n_div or 0, r.snr_db) for r in records]
        assert keys == sorted(keys)

    def test_deterministic_csv_bytes(self, tmp_path):
        scenarios = [
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED),
            Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=4),
        ]
        paths = []
        for i in range(2):
            records = sweep(TOY, scenarios, [0.0, 10.0], 3, FAST_PROFILE)
            path = tmp_path / f"run{i}.csv"
            emit_csv(records, str(path))
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_thread_count_does_not_change_bytes(self, tmp_path):
        scenarios = [
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED),
            Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=4),
        ]
        serial = sweep(TOY, scenarios, [0.0, 10.0], 4, FAST_PROFILE, threads=1)
        parallel = sweep(TOY, scenarios, [0.0, 10.0], 4, FAST_PROFILE, threads=2)
        p1, p2 = tmp_path / "serial.csv", tmp_path / "parallel.csv"
        emit_csv(serial, str(p1))
        emit_csv(parallel, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_full_bw_evm_non_increasing_in_snr(self):
        records = sweep(
            DESK,
            [Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED)],
            [-10.0, -5.0, 0.0, 5.0, 10.0],
            30,
        )
        evms = [r.evm_percent for r in records]
        assert all(a >= b for a, b in zip(evms, evms[1:]))

    def test_paired_blocks_match_direct_computation(self):
        records = sweep(
            TOY, [Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED)], [7.0], 3
        )
        err = ref = 0.0
        for block_id in range(3):
            block = build_coherence_block(TOY, 7.0, block_id)
            out = gs_detect(block.channel, block.rx.entries, 5)
            err += np.sum(np.abs(out.s_hat - block.tx.entries) ** 2)
            ref += np.sum(np.abs(block.tx.entries) ** 2)
        assert records[0].evm_percent == pytest.approx(
            100 * np.sqrt(err / ref), rel=1e-12
        )

    def test_rejects_empty_blocks(self):
        with pytest.raises(ConfigurationError):
            sweep(TOY, default_scenarios(), [0.0], 0)


class TestCsv:
    def _records(self):
        scenarios = [
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED),
            Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=8),
        ]
        return sweep(TOY, scenarios, [0.0, 12.5], 2, FAST_PROFILE)

    def test_header_exact(self, tmp_path):
        path = tmp_path / "out.csv"
        emit_csv(self._records(), str(path))
        first = path.read_text().splitlines()[0]
        assert first == "scenario,n_div,snr_db,evm_percent,n_blocks,seed,recon_mse,paper_factor,actual_overhead"
        assert first.split(",") == CSV_HEADER

    def test_empty_records_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv([], str(tmp_path / "no.csv"))

    def test_round_trip_six_significant_digits(self, tmp_path):
        path = tmp_path / "rt.csv"
        records = self._records()
        emit_csv(records, str(path))
        parsed = parse_csv(str(path))
        assert len(parsed) == len(records)
        for a, b in zip(records, parsed):
            assert a.scenario == b.scenario
            assert a.n_div == b.n_div
            assert a.snr_db == b.snr_db
            assert b.evm_percent == pytest.approx(a.evm_percent, rel=1e-6)
            if a.recon_mse is None:
                assert b.recon_mse is None
            else:
                assert b.recon_mse == pytest.approx(a.recon_mse, rel=1e-6)
            assert a.actual_overhead == b.actual_overhead

    def test_parse_errors_carry_line_numbers(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(
            "scenario,n_div,snr_db,evm_percent,n_blocks,seed,recon_mse,paper_factor,actual_overhead\n"
            "full_bw_centralized,,abc,1.0,1,0,,,\n"
        )
        with pytest.raises(ValueError) as err:
            parse_csv(str(path))
        assert "line 2" in str(err.value)

    def test_missing_column_named(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("scenario,n_div,snr_db\n")
        with pytest.raises(ValueError) as err:
            parse_csv(str(path))
        assert "evm_percent" in str(err.value)


class TestReport:
    def _full_records(self):
        scenarios = [
            Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED),
            Scenario(kind=ScenarioKind.AE_CENTRALIZED, n_div=8),
            Scenario(kind=ScenarioKind.ARRAY_REDUCED, n_div=4),
            Scenario(kind=ScenarioKind.DECENTRALIZED_ADMM, clusters=2),
        ]
        return sweep(TOY, scenarios, [-5.0, 0.0, 10.0], 2, FAST_PROFILE)

    def test_report_contains_checks_and_factor_note(self):
        report = emit_report(self._full_records(), TOY)
        assert report.count("[PASS]") + report.count("[FAIL]") + report.count("[SKIP]") == 3
        assert "7.466" in report
        assert "factor=7.000" in report
        assert "pooled error power" in report

    def test_checks_skip_when_scenarios_missing(self):
        records = sweep(
            TOY, [Scenario(kind=ScenarioKind.FULL_BW_CENTRALIZED)], [0.0], 1
        )
        checks = evaluate_checks(records)
        assert all(c.passed is None for c in checks)

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            emit_report([], TOY)
