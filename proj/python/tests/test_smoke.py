import numpy as np
import pytest

import ceropt

SMOKE = {"transcription": {"n": 2, "T": 0.01}, "optimize": {"starts": 1, "min_speed": 0.0}}


def test_default_config_round_trips():
    config = ceropt.default_config()
    assert config["transcription"]["n"] == 100
    assert ceropt.config_hash(config) == ceropt.config_hash()
    assert ceropt.config_hash(SMOKE) != ceropt.config_hash()


def test_bad_config_raises():
    with pytest.raises(ceropt.ConfigError):
        ceropt.config_hash({"transcription": {"alpha": 0}})
    with pytest.raises(ValueError):
        ceropt.config_hash({"plant": {"stiffness": 1.0}})


def test_checks_pass():
    results = ceropt.run_checks()
    assert len(results) == 8
    assert all(r["passed"] for r in results), results


def test_mass_matrix_is_symmetric_positive_definite():
    m = ceropt.mass_matrix(0.3, -1.1)
    assert m.shape == (4, 4)
    np.testing.assert_allclose(m, m.T, atol=1e-15)
    assert np.linalg.eigvalsh(m).min() > 0


def test_switch_penalty_counts_transitions():
    zeta = np.zeros((20, 4))
    zeta[10:, 0] = 1.0
    assert abs(ceropt.switch_penalty(zeta) - 1.0) <= 0.1


def test_optimize_simulate_track_smoke():
    result = ceropt.optimize(SMOKE)
    assert result["found"]
    assert result["states"].shape == (3, 10)
    assert result["max_defect"] <= 1e-8
    sim = ceropt.simulate(result["schedule"], result["controls"], result["dt"], SMOKE)
    np.testing.assert_allclose(sim["states"][-1], result["states"][-1], atol=1e-2)
    tracked = ceropt.track(result["schedule"], result["controls"], result["dt"], SMOKE)
    assert tracked["closed_final_error"] >= 0.0
    assert len(tracked["times"]) == len(tracked["closed_error"])
