import math

import numpy as np
import pytest

from dpsgd_dc.accountant import MechanismConfig
from dpsgd_dc.errors import ConfigurationError, ParameterError
from dpsgd_dc.mia import (
    REPORT_COLUMNS,
    AttackConfig,
    LogisticSource,
    best_threshold,
    error_rates,
    mia_epsilon,
    run_attack,
    theoretical_eps_dp,
)
from dpsgd_dc.optimizer import TrainConfig


def test_mia_epsilon_examples():
    assert mia_epsilon(0.5, 0.5, 0.0) == 0.0
    assert mia_epsilon(0.05, 0.2, 0.01) == pytest.approx(math.log(15.8), rel=1e-12)
    assert mia_epsilon(0.05, 0.2, 0.01) == pytest.approx(2.7600, abs=1e-4)
    assert mia_epsilon(0.9, 0.9, 0.0) == 0.0
    assert mia_epsilon(0.0, 0.3, 0.0) == math.inf
    assert mia_epsilon(1.0, 1.0, 0.0) == 0.0
    for bad in ((-0.1, 0.5, 0.0), (0.5, 1.1, 0.0), (0.5, 0.5, 1.0)):
        with pytest.raises(ParameterError):
            mia_epsilon(*bad)


def test_mia_epsilon_symmetric():
    rng = np.random.default_rng(0)
    for fpr, fnr in rng.uniform(0.01, 0.99, size=(50, 2)):
        assert mia_epsilon(fpr, fnr, 1e-5) == mia_epsilon(fnr, fpr, 1e-5)


def test_best_threshold_separable_and_tied():
    members = np.array([0.1, 0.2, 0.3])
    nonmembers = np.array([0.5, 0.6, 0.7])
    tau = best_threshold(members, nonmembers)
    assert tau == 0.3
    assert error_rates(members, nonmembers, tau) == (0.0, 0.0)
    # identical pools: no threshold beats calling everything a non-member
    same = np.array([0.4, 0.4, 0.4])
    assert best_threshold(same, same) == -math.inf
    assert error_rates(same, same, -math.inf) == (0.0, 1.0)


def _train_cfg(n=60, b=6, sigma=0.05, seed=0, dim=10):
    return TrainConfig(MechanismConfig(n=n, b=b, eta=0.5, clip_c=1.0, sigma_dp=sigma, t_iters=0, dim=dim), seed=seed)


def test_run_attack_report_shape_and_determinism():
    src = LogisticSource(dim=10, seed=1)
    attack = AttackConfig(epochs=3, trials=2, shadows=2)
    rep = run_attack(src, _train_cfg(), attack)
    assert rep.eps_hat.shape == (2, 3)
    assert list(rep.epochs) == [1, 2, 3]
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS) and len(lines) == 4
    assert rep.to_csv() == run_attack(src, _train_cfg(), attack).to_csv()
    assert rep.to_csv() != run_attack(src, _train_cfg(seed=5), attack).to_csv()
    assert np.all((rep.fpr >= 0) & (rep.fpr <= 1) & (rep.fnr >= 0) & (rep.fnr <= 1))


def test_large_noise_attack_at_chance():
    rep = run_attack(LogisticSource(dim=50), _train_cfg(n=200, b=8, sigma=1000.0, dim=50),
                     AttackConfig(epochs=5, trials=10))
    assert np.all(np.abs(rep.median_eps()) <= 0.2)


def test_shuffled_labels_near_zero():
    rep = run_attack(LogisticSource(dim=50), _train_cfg(n=200, b=8, dim=50),
                     AttackConfig(epochs=5, trials=10, shuffle_labels=True))
    assert np.all(rep.median_eps() <= 0.2)


def test_attack_validation():
    with pytest.raises(ConfigurationError):
        AttackConfig(epochs=0)
    with pytest.raises(ConfigurationError):
        AttackConfig(kind="likelihood_ratio")
    with pytest.raises(ConfigurationError):
        AttackConfig(delta=1.0)
    with pytest.raises(ConfigurationError):
        run_attack(LogisticSource(dim=5), _train_cfg(dim=10), AttackConfig(epochs=1, trials=1))
    with pytest.raises(ConfigurationError):
        run_attack(LogisticSource(dim=10), _train_cfg(n=1, b=1), AttackConfig(epochs=1, trials=1))


def test_theoretical_eps_uses_epoch_count():
    cfg = _train_cfg(n=200, b=8, dim=50)
    e5 = theoretical_eps_dp(cfg, 5, 1e-5)
    e10 = theoretical_eps_dp(cfg, 10, 1e-5)
    assert 0 < e5 < e10
    bounded = TrainConfig(MechanismConfig(n=200, b=8, eta=0.5, clip_c=1.0, sigma_dp=0.05, t_iters=0,
                                          dim=50, smooth_l=1.0, diameter_d=1.0))
    assert theoretical_eps_dp(bounded, 10, 1e-5) <= e10
