import numpy as np
import pytest

from slimnav.energy import (DEFAULT_PROFILE_CSV, EnergyProfile, bench_table, cost, episode_energy,
                            reward_energy_penalty)
from slimnav.errors import ContractViolation

TABLE = [
    (256, 17740, 117.1, 2078.1),
    (128, 18351, 30.0, 550.0),
    (64, 17808, 11.0, 196.4),
    (32, 12961, 6.5, 83.9),
    (16, 7375, 7.0, 51.6),
    (8, 6123, 6.7, 41.1),
    (4, 5224, 6.5, 34.1),
    (2, 4968, 6.0, 29.8),
    (1, 4788, 6.0, 28.7),
]


@pytest.fixture(scope="module")
def profile():
    return EnergyProfile.default()


@pytest.mark.parametrize("size,power,latency,energy", TABLE)
def test_table_rows_exact(profile, size, power, latency, energy):
    assert cost(profile, size).as_tuple() == (power, latency, energy)


def test_table_consistency(profile):
    implied = profile.power_mw * profile.latency_ms / 1000
    assert np.all(np.abs(profile.energy_mj - implied) <= 0.01 * profile.energy_mj)


def test_bypass_and_bounds(profile):
    assert cost(profile, 0).as_tuple() == (0.0, 0.0, 0.0)
    with pytest.raises(ContractViolation):
        cost(profile, 257)
    with pytest.raises(ContractViolation):
        cost(profile, -1)


def test_interpolation_is_log_linear(profile):
    c = cost(profile, np.sqrt(2) * 64)  # halfway between 64 and 128 in log2
    assert c.power_mw == pytest.approx((17808 + 18351) / 2, rel=1e-12)
    assert c.latency_ms == pytest.approx((11.0 + 30.0) / 2, rel=1e-12)
    assert c.energy_mj == pytest.approx(c.power_mw * c.latency_ms / 1000, rel=0.01)


def test_energy_continuous_at_rows(profile):
    for size, _, _, energy in TABLE[:-1]:
        assert cost(profile, size * (1 - 1e-9)).energy_mj == pytest.approx(energy, rel=1e-6)


def test_energy_monotone_over_range(profile):
    sizes = np.geomspace(1, 256, 2001)
    e = [cost(profile, s).energy_mj for s in sizes]
    assert np.all(np.diff(e) >= 0)


def test_latency_not_monotone_in_table(profile):
    # 32 -> 16 rises from 6.5 to 7.0 ms; latency monotonicity is deliberately not an invariant
    assert cost(profile, 16).latency_ms > cost(profile, 32).latency_ms


def test_reward_penalty(profile):
    assert reward_energy_penalty(profile, 256, 0.5) == pytest.approx(2 * 550.0 / 2078.1)
    assert round(reward_energy_penalty(profile, 256, 0.5), 4) == 0.5293
    assert reward_energy_penalty(profile, 256, 0) == 0.0
    assert reward_energy_penalty(profile, 64, 1.0) == 2.0


def test_episode_energy(profile):
    s = episode_energy(profile, [256, 0, 256])
    assert s.energy_mj == pytest.approx(4156.2, abs=1e-9) and s.acquisitions == 2
    assert s.mean_power_mw == 17740 and s.mean_latency_ms == 117.1
    z = episode_energy(profile, [0] * 50)
    assert z.energy_mj == 0 and z.acquisitions == 0


def test_profile_csv_byte_stable(profile, tmp_path):
    assert profile.to_csv_text() == DEFAULT_PROFILE_CSV
    p = tmp_path / "p.csv"
    p.write_text(profile.to_csv_text())
    back = EnergyProfile.load(p)
    assert np.array_equal(back.energy_mj, profile.energy_mj)


def test_inconsistent_profile_rejected():
    bad = DEFAULT_PROFILE_CSV.replace("2078.1", "2500.0")
    with pytest.raises(ContractViolation):
        EnergyProfile.from_csv_text(bad)


def test_bench_table_reproduces_rows(profile):
    rows = [bench_table(profile, s, [1.0])[0] for s, *_ in TABLE]
    assert [(r["power_mw"], r["latency_ms"], r["energy_mj"]) for r in rows] == [t[1:] for t in TABLE]
