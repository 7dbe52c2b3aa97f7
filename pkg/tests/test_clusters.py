import numpy as np
import pytest
from scipy import stats

from railchannel.analysis import angular_spread, rms_delay_spread
from railchannel.clusters import (
    AOA,
    EOA,
    SmallScaleParams,
    XprModel,
    cluster_power_profile,
    generate_cluster_angles,
    generate_cluster_set,
    generate_delays,
    generate_powers,
    laplacian_offset_table,
    spawn_rays,
    stacked_ray_angles,
)
from railchannel.geometry import SPEED_OF_LIGHT, link_geometry
from railchannel.scenario import LspSample

LSP = LspSample(ds_ns=76.0, asa_deg=6.0, esa_deg=1.6, asd_deg=6.0, esd_deg=1.6, k_db=0.66, sf_db=0.0)
GEOMETRY = link_geometry((0, 0, 26.0), (-600.0, 30.0, 4.2), wavelength=SPEED_OF_LIGHT / 2160e6)


def test_delays_sorted_from_zero_with_exponential_scale(rng):
    d = generate_delays(200_000, 80e-9, 2.3, rng)
    assert d[0] == 0.0 and np.all(np.diff(d) >= 0)
    # shifted exponential: mean above the minimum is r_tau * DS
    assert np.mean(d) == pytest.approx(2.3 * 80e-9, rel=0.01)


def test_power_profile_decay_constant():
    tau = np.array([0.0, 100e-9])
    p = cluster_power_profile(tau, 50e-9, 2.0, [0.0, 0.0])
    assert p[1] / p[0] == pytest.approx(np.exp(-100e-9 * 1.0 / (2.0 * 50e-9)))
    assert cluster_power_profile([0.0], 1e-9, 2.0, [10.0])[0] == pytest.approx(0.1)


def test_generated_powers_normalized(rng):
    p, z = generate_powers(generate_delays(8, 50e-9, 2.3, rng), 50e-9, 2.3, 3.0, rng, return_shadowing=True)
    assert p.sum() == pytest.approx(1.0)
    assert z.shape == (8,)


def test_offset_table_symmetric_unit_rms():
    for m in (1, 2, 5, 20):
        t = laplacian_offset_table(m)
        assert t.sum() == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(t, -t[::-1])
    t = laplacian_offset_table(2000)
    assert np.sqrt(np.mean(t**2)) == pytest.approx(1.0, rel=0.01)
    with pytest.raises(ValueError):
        laplacian_offset_table(0)


def test_offset_table_cache_is_not_shared_mutable():
    t = laplacian_offset_table(20)
    t[:] = 0.0
    assert laplacian_offset_table(20).any()


def test_ray_phases_uniform_ks(rng):
    phases = np.concatenate([spawn_rays(20, [2, 2, 2, 2], XprModel(), rng)["phases"].ravel() for _ in range(500)])
    assert np.all((phases > -np.pi) & (phases <= np.pi))
    assert stats.kstest(phases, stats.uniform(-np.pi, 2 * np.pi).cdf).pvalue > 1e-3


def test_xpr_lognormal_in_db(rng):
    x = XprModel(8.0, 3.0).sample(rng, 100_000)
    db = 10 * np.log10(x)
    assert np.mean(db) == pytest.approx(8.0, abs=0.05)
    assert np.std(db) == pytest.approx(3.0, rel=0.02)


def test_spawn_rays_shapes_and_spreads(rng):
    rays = spawn_rays(20, [2.0, 1.0, 4.0, 0.5], XprModel(), rng)
    assert rays["offsets"].shape == (20, 4) and rays["phases"].shape == (20, 4) and rays["xpr"].shape == (20,)
    rms = np.rad2deg(np.sqrt(np.mean(rays["offsets"] ** 2, axis=0)))
    expected = np.array([2.0, 1.0, 4.0, 0.5]) * np.sqrt(np.mean(laplacian_offset_table(20) ** 2))
    assert np.allclose(rms, expected)


def test_cluster_angles_hit_target_spread_with_los(rng):
    powers = generate_powers(generate_delays(6, 50e-9, 2.3, rng), 50e-9, 2.3, 3.0, rng)
    los = np.array([1.0, 1.4, 4.0, 1.7])
    ang = generate_cluster_angles(6, [6.0, 1.6, 6.0, 1.6], los, rng, powers, k_db=3.0)
    k = 10 ** 0.3
    w = np.concatenate([powers / (k + 1), [k / (k + 1)]])
    col = np.concatenate([ang[:, EOA], [los[EOA]]])
    assert angular_spread(w, col, "elevation") == pytest.approx(1.6, rel=1e-9)


def test_small_scale_params_validation():
    for kwargs in ({"n_clusters": 0}, {"n_clusters": 21}, {"rays_per_cluster": 0}, {"r_tau": 1.0}, {"zeta_db": -1}):
        with pytest.raises(ValueError):
            SmallScaleParams(**kwargs)
    spreads = SmallScaleParams(n_clusters=4, c_esa=0.5).intra_spreads(LSP)
    assert np.allclose(spreads, [3.0, 0.5, 3.0, 0.8])


def test_cluster_set_los_share_and_total_power(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    k = LSP.k_linear
    assert cset.los_cluster.power == pytest.approx(k / (k + 1))
    assert sum(c.power for c in cset.alive) == pytest.approx(1.0)
    assert cset.los_cluster.delay == 0.0
    assert cset.los_cluster.abs_delay == pytest.approx(GEOMETRY.d_3d / SPEED_OF_LIGHT)
    assert len({c.id for c in cset.alive}) == len(cset)


def test_calibrated_set_reproduces_lsps(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    m = cset.mpc_arrays()
    assert rms_delay_spread(m["power"], m["delay"]) * 1e9 == pytest.approx(LSP.ds_ns, rel=1e-9)
    assert angular_spread(m["power"], m["angles"][:, AOA], "azimuth") == pytest.approx(LSP.asa_deg, rel=1e-6)
    assert angular_spread(m["power"], m["angles"][:, EOA], "elevation") == pytest.approx(LSP.esa_deg, rel=1e-9)


def test_uncalibrated_set_still_normalized(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(calibrate=False), GEOMETRY, los=False)
    assert cset.los_cluster is None
    assert sum(c.power for c in cset.alive) == pytest.approx(1.0)
    assert cset.nlos_share == 1.0


def test_renormalize_keeps_powers_bit_identical(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    before = [c.power for c in cset.alive]
    cset.renormalize_powers()
    assert [c.power for c in cset.alive] == before


def test_spawned_cluster_is_valid(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    c = cset.spawn_cluster(rng)
    assert c.abs_delay >= cset.los_abs_delay
    assert 0 <= c.aoa < 2 * np.pi and 0 < c.eoa < np.pi
    assert c.id not in {x.id for x in cset.alive}


def test_stacked_ray_angles_match_per_cluster(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    assert np.array_equal(stacked_ray_angles(cset.alive), np.vstack([c.ray_angles() for c in cset.alive]))


def test_ray_angles_wrapped_and_clipped(rng):
    cset = generate_cluster_set(LSP, rng, SmallScaleParams(), GEOMETRY)
    c = cset.nlos[0]
    c.aoa, c.eoa = 2 * np.pi - 1e-4, 1e-5
    a = c.ray_angles()
    assert np.all((a[:, AOA] >= 0) & (a[:, AOA] < 2 * np.pi))
    assert np.all((a[:, EOA] > 0) & (a[:, EOA] < np.pi))
