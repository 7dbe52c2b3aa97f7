import numpy as np
import pytest

from railchannel.analysis import MEASURED_TRANSITION_MATRIX, stationary_distribution
from railchannel.clusters import AOA, AOD, EOA, EOD, SmallScaleParams, generate_cluster_set
from railchannel.evolution import (
    BdState,
    EvolutionLog,
    EvolutionParams,
    angle_increments,
    displacement,
    evolve,
    expected_new_clusters,
    normalize_delays,
    run_birth_death,
    step_birth_death_markov,
    survival_probability,
    update_angles,
    update_delay,
)
from railchannel.geometry import SPEED_OF_LIGHT, link_geometry, spherical_unit_vectors
from railchannel.scenario import Lognormal, LspSample

LSP = LspSample(ds_ns=76.0, asa_deg=6.0, esa_deg=1.6, asd_deg=6.0, esd_deg=1.6, k_db=0.66, sf_db=0.0)
GEOMETRY = link_geometry((0, 0, 26.0), (-600.0, 30.0, 4.2), wavelength=SPEED_OF_LIGHT / 2160e6)
SPEED = 22.22


def _set(rng, **kwargs):
    return generate_cluster_set(LSP, rng, SmallScaleParams(**kwargs), GEOMETRY)


def test_displacement_examples():
    assert displacement(0.0, 0.1) == 0.0
    assert displacement(SPEED, 0.1) == pytest.approx(2.222)
    assert displacement(2 * SPEED, 0.1) == pytest.approx(2 * displacement(SPEED, 0.1))
    with pytest.raises(ValueError):
        displacement(1.0, 0.0)


def test_survival_probability_examples():
    assert survival_probability(0.0, 0.3, 10.0) == 1.0
    assert survival_probability(5.0, 0.0, 10.0) == 1.0
    assert survival_probability(10.0, 1.0, 10.0) == pytest.approx(np.exp(-1))
    with pytest.raises(ValueError):
        survival_probability(1.0, 0.1, 0.0)


def test_expected_new_clusters_examples():
    assert expected_new_clusters(2.0, 0.1, 0.0, 10.0) == 0.0
    # lambda_G = 20 lambda_R and lambda_R delta / D_c = 1
    assert expected_new_clusters(20 * 0.5, 0.5, 20.0, 10.0) == pytest.approx(20 * (1 - np.exp(-1)))
    assert expected_new_clusters(20 * 0.5, 0.5, 20.0, 10.0) == pytest.approx(12.642, abs=1e-3)
    assert expected_new_clusters(6.0, 0.3, 1e6, 10.0) == pytest.approx(20.0)
    with pytest.raises(ValueError):
        expected_new_clusters(1.0, 0.0, 1.0, 10.0)


def test_params_validation_and_lambda_default():
    p = EvolutionParams(lambda_r=0.2, n_expected=7)
    assert p.lambda_g == pytest.approx(1.4)
    for kwargs in ({"dt_bd": 0}, {"dt": 0.2}, {"lambda_r": -1}, {"d_c": 0}, {"driver": "other"}):
        with pytest.raises(ValueError):
            EvolutionParams(**kwargs)
    with pytest.raises(ValueError):
        EvolutionParams(transition_matrix=np.full((4, 4), 0.3))


def test_bd_state_flags():
    assert not BdState.S0.births and not BdState.S0.deaths
    assert BdState.S1.births and not BdState.S1.deaths
    assert BdState.S2.deaths and not BdState.S2.births
    assert BdState.S3.births and BdState.S3.deaths


def test_update_delay_examples():
    r = np.array([1.0, 0.0, 0.0])
    assert update_delay(1e-6, r, [0.0, SPEED, 0.0], 0.1) == 1e-6
    assert update_delay(1e-6, r, [0.0, 0.0, 0.0], 0.1) == 1e-6
    assert 1e-6 - update_delay(1e-6, r, [SPEED, 0.0, 0.0], 0.1) == pytest.approx(7.412e-9, rel=1e-4)


def test_normalize_delays_examples(rng):
    cset = _set(rng)
    for c, d in zip(cset.alive, [5e-9, 7e-9, 9e-9, 11e-9, 20e-9, 30e-9]):
        c.abs_delay = d
    normalize_delays(cset)
    assert [c.delay for c in cset.alive][:3] == pytest.approx([0.0, 2e-9, 4e-9])
    before = [c.delay for c in cset.alive]
    normalize_delays(cset)
    assert [c.delay for c in cset.alive] == before


def test_power_update_contracts(rng):
    cset = _set(rng, zeta_db=0.0)
    for c in cset.nlos:
        c.delay, c.shadowing_db = 50e-9, 0.0
    cset.renormalize_powers()
    p = [c.power for c in cset.nlos]
    assert np.allclose(p, p[0])
    cset.nlos[0].delay = 80e-9
    cset.renormalize_powers()
    assert cset.nlos[0].power < p[0]
    assert sum(c.power for c in cset.alive) == pytest.approx(1.0, abs=1e-12)


def test_angle_increment_example():
    # theta_EOD = pi/2, v* along phi_hat, tau = 1 us, dt = 0.01 s
    angles = np.array([0.3, 1.0, 0.7, np.pi / 2])
    _, phi_hat = spherical_unit_vectors(np.pi / 2, 0.7)
    inc, guarded = angle_increments(angles, 1e-6, SPEED * phi_hat, 0.01)
    assert guarded == 0
    assert inc[AOD] == pytest.approx(SPEED / (SPEED_OF_LIGHT * 1e-6) * 0.01)
    assert inc[AOD] == pytest.approx(7.4118e-4, rel=1e-4)
    assert inc[EOD] == pytest.approx(0.0, abs=1e-15)


def test_angle_increment_zero_cases():
    angles = np.array([0.3, 1.0, 0.7, 1.2])
    assert np.all(angle_increments(angles, 1e-6, np.zeros(3), 0.01)[0] == 0)
    # velocity along the arrival and departure radial directions: both projections vanish
    same = np.array([0.3, 1.0, 0.3, 1.0])
    r = np.array([np.sin(1.0) * np.cos(0.3), np.sin(1.0) * np.sin(0.3), np.cos(1.0)])
    assert np.allclose(angle_increments(same, 1e-6, SPEED * r, 0.01)[0], 0.0, atol=1e-15)


def test_angle_guards():
    inc, guarded = angle_increments(np.array([0.3, 1.0, 0.7, 1.2]), 0.5e-9, [SPEED, 0, 0], 0.01)
    assert guarded == 4 and np.all(inc == 0)
    inc, guarded = angle_increments(np.array([0.3, 1e-8, 0.7, 1.2]), 1e-6, [SPEED, SPEED, 0], 0.01)
    assert guarded == 1 and inc[AOA] == 0.0 and inc[EOA] != 0.0


def test_update_angles_wraps_and_clamps(rng):
    c = _set(rng).nlos[0]
    c.aoa, c.eoa, c.abs_delay = 2 * np.pi - 1e-6, np.pi / 2, 1e-8
    _, phi_hat = spherical_unit_vectors(np.pi / 2, c.aoa)
    update_angles(c, 1e3 * phi_hat, 0.01)
    assert 0 <= c.aoa < 2 * np.pi
    assert 0 < c.eoa < np.pi and 0 < c.eod < np.pi


def test_markov_identity_never_changes(rng):
    cset = _set(rng)
    params = EvolutionParams(transition_matrix=np.eye(4), lifetime=None)
    ids = [c.id for c in cset.alive]
    log = run_birth_death(cset, params, 200, SPEED, rng)
    assert [c.id for c in cset.alive] == ids
    assert log.birth_counts.sum() == 0 and log.death_counts.sum() == 0


def test_markov_events_follow_state(rng):
    cset = _set(rng)
    params = EvolutionParams(lifetime=None, min_nlos=0)
    log = run_birth_death(cset, params, 2000, SPEED, rng)
    for rec in log.records:
        assert len(rec.births) == int(BdState(rec.state).births)
        assert len(rec.deaths) + rec.skipped_deaths == int(BdState(rec.state).deaths)


def test_markov_death_with_no_nlos_is_recorded_noop(rng):
    cset = _set(rng)
    cset.clusters = [c for c in cset.alive if c.los]
    params = EvolutionParams(transition_matrix=np.tile([0.0, 0.0, 1.0, 0.0], (4, 1)), lifetime=None, min_nlos=0)
    rec = step_birth_death_markov(cset, params, rng)
    assert rec.deaths == () and rec.skipped_deaths == 1
    assert cset.los_cluster is not None


def test_min_nlos_floor_and_persistent_los(rng):
    cset = _set(rng)
    los_id = cset.los_cluster.id
    params = EvolutionParams(transition_matrix=np.tile([0.0, 0.0, 1.0, 0.0], (4, 1)), lifetime=None, min_nlos=1)
    log = run_birth_death(cset, params, 50, SPEED, rng)
    assert len(cset.nlos) == 1
    assert all(los_id not in r.deaths for r in log.records)
    assert sum(r.skipped_deaths for r in log.records) > 0


def test_lifetime_deaths(rng):
    cset = _set(rng)
    for c in cset.nlos:
        c.lifetime = 0.25
    params = EvolutionParams(transition_matrix=np.eye(4), lifetime=Lognormal(0.88, 0.92), min_nlos=0)
    old = {c.id for c in cset.nlos}
    run_birth_death(cset, params, 3, SPEED, rng)
    assert not old & {c.id for c in cset.alive}


def test_poisson_lambda_r_zero_never_kills(rng):
    cset = _set(rng)
    params = EvolutionParams(driver="poisson", lambda_r=0.0, lambda_g=0.0)
    log = run_birth_death(cset, params, 500, SPEED, rng)
    assert log.death_counts.sum() == 0


def test_stationary_distribution_matches_power_iteration():
    pi = stationary_distribution(MEASURED_TRANSITION_MATRIX)
    x = np.full(4, 0.25)
    for _ in range(10_000):
        x = x @ MEASURED_TRANSITION_MATRIX
    assert np.allclose(pi, x, atol=1e-6)
    assert pi[0] == pi.max()


def test_determinism_of_logs():
    logs = []
    for _ in range(2):
        rng = np.random.default_rng(77)
        logs.append(run_birth_death(_set(rng), EvolutionParams(), 300, SPEED, rng).records)
    assert logs[0] == logs[1]


def test_evolve_static_is_time_invariant(rng):
    cset = _set(rng)
    params = EvolutionParams(driver="poisson", lambda_r=0.0, lambda_g=0.0)
    snaps = []
    for cs in evolve(cset, params, 30, 0.02, np.zeros(3), rng, lambda t: GEOMETRY, GEOMETRY.wavelength):
        snaps.append([(c.id, c.delay, c.power, c.aoa, c.eoa, c.aod, c.eod) for c in cs.alive])
    assert all(s == snaps[0] for s in snaps)


def test_evolve_invariants_and_bd_cadence(rng):
    cset = _set(rng)
    log = EvolutionLog()
    v = np.array([SPEED, 0.0, 0.0])
    n = 0
    for cs in evolve(cset, EvolutionParams(), 101, 0.02, v, rng, None, GEOMETRY.wavelength, log):
        n += 1
        assert sum(c.power for c in cs.alive) == pytest.approx(1.0, abs=1e-12)
        assert min(c.delay for c in cs.alive) == 0.0
    assert n == 101
    assert len(log) == 20
    assert np.allclose(np.diff([r.time for r in log.records]), 0.1)


def test_log_csv_round_trip(tmp_path, rng):
    log = run_birth_death(_set(rng), EvolutionParams(), 100, SPEED, rng)
    log.write_csv(tmp_path / "evolution.csv")
    back = EvolutionLog.read_csv(tmp_path / "evolution.csv")
    assert [(r.time, r.state, r.births, r.deaths, r.n_clusters) for r in back.records] == [
        (r.time, r.state, r.births, r.deaths, r.n_clusters) for r in log.records
    ]
    assert (tmp_path / "evolution.csv").read_text().splitlines()[0] == "time,state,n_clusters,births,deaths"
