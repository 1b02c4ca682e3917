import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from harrisflow.bundled import bundled_measures
from harrisflow.covariance import SmoothedKernel, comparison_function
from harrisflow.flow import (
    BLOCK_SIZE,
    CrossingRateError,
    FlowConfig,
    SheetGrid,
    Trajectory,
    path_metric,
    simulate,
    simulate_arratia,
    simulate_harris_cholesky,
    simulate_harris_sheet,
)
from harrisflow.flow import rng
from harrisflow.kernel import Mollifier
from harrisflow.lab import realized_covariation

STD = Mollifier("standard-bump")
TWO = bundled_measures()["two-atom"]


def sk_two(eps):
    return SmoothedKernel.build(STD, eps, TWO)


def within(mean, target, se, k=3.0):
    return abs(mean - target) <= k * se


def splitmix_reference(seed, count):
    """Plain-integer SplitMix64 stream."""
    out, state, mask = [], seed, (1 << 64) - 1
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


class TestRNG:
    def test_splitmix_known_values(self):
        got = rng.splitmix64(np.uint64(0), np.arange(3, dtype=np.uint64))
        assert [int(v) for v in got] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]

    @given(st.integers(0, 2**64 - 1))
    def test_splitmix_matches_integer_reference(self, key):
        got = rng.splitmix64(np.uint64(key), np.arange(5, dtype=np.uint64))
        assert [int(v) for v in got] == splitmix_reference(key, 5)

    def test_counter_normals_moments(self):
        z = rng.counter_normals(np.uint64(12345), np.arange(200_000, dtype=np.uint64))
        assert abs(z.mean()) < 3 / math.sqrt(z.size)
        assert abs(z.var() - 1.0) < 3 * math.sqrt(2 / z.size)
        assert np.all(np.isfinite(z))

    def test_counter_normals_random_access(self):
        key = np.uint64(99)
        full = rng.counter_normals(key, np.arange(50, dtype=np.uint64))
        some = rng.counter_normals(key, np.array([49, 3, 17], dtype=np.uint64))
        np.testing.assert_array_equal(some, full[[49, 3, 17]])

    def test_streams_differ(self):
        a = rng.replica_generators(5, [0], rng.NORMALS)[0].standard_normal(4)
        b = rng.replica_generators(5, [1], rng.NORMALS)[0].standard_normal(4)
        c = rng.replica_generators(5, [0], rng.NORMALS, group=1)[0].standard_normal(4)
        assert not np.array_equal(a, b) and not np.array_equal(a, c)
        again = rng.replica_generators(5, [0], rng.NORMALS)[0].standard_normal(4)
        np.testing.assert_array_equal(a, again)


class TestFlowConfig:
    def test_defaults(self):
        cfg = FlowConfig((0.0, 1.0), 2.0)
        assert cfg.time_step == pytest.approx(2e-3)
        assert cfg.n_steps == 1000 and cfg.n == 2
        assert cfg.times[0] == 0.0 and cfg.times[-1] == 2.0 and len(cfg.times) == 1001

    def test_stride(self):
        cfg = FlowConfig((0.0,), 1.0, 1e-3, record_stride=250)
        np.testing.assert_allclose(cfg.times, [0, 0.25, 0.5, 0.75, 1.0])

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(start_points=(1.0, 0.0), horizon=1.0),
            dict(start_points=(), horizon=1.0),
            dict(start_points=(0.0,), horizon=0.0),
            dict(start_points=(0.0,), horizon=1.0, time_step=0.3),
            dict(start_points=(0.0,), horizon=1.0, scheme="euler"),
            dict(start_points=(0.0,), horizon=1.0, record_stride=3),
            dict(start_points=(0.0,), horizon=1.0, sheet_space_step=-0.1),
            dict(start_points=(math.nan,), horizon=1.0),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            FlowConfig(**kwargs)


@pytest.fixture(scope="module")
def ens():
    cfg = FlowConfig((0.0, 0.3, 1.0), 1.0, 1e-3)
    return simulate_arratia(cfg, 3000, 17)


class TestArratia:
    def test_start_and_order(self, ens):
        np.testing.assert_array_equal(ens.paths[:, 0, :], np.tile([0.0, 0.3, 1.0], (ens.replicas, 1)))
        assert np.all(np.diff(ens.paths, axis=2) >= 0)

    def test_coalescence_is_permanent(self, ens):
        gaps = np.diff(ens.paths, axis=2)
        merged = np.cumsum(gaps == 0, axis=1) > 0
        assert np.array_equal(merged, gaps == 0)
        for k, (i, j) in enumerate(ens.pairs):
            if j != i + 1:
                continue
            first = np.where(merged[:, :, i].any(axis=1), merged[:, :, i].argmax(axis=1), -1)
            np.testing.assert_array_equal(first, ens.coalescence_step[:, k])

    def test_gap_quadratic_variation(self, ens):
        # before meeting the gap has quadratic variation 2t, afterwards none
        gap = ens.paths[:, :, 1] - ens.paths[:, :, 0]
        qv = np.cumsum(np.diff(gap, axis=1) ** 2, axis=1)
        never = ens.coalescence_step[:, 0] < 0
        r = qv[never, -1]
        assert within(r.mean(), 2.0, r.std(ddof=1) / math.sqrt(r.size) + 1e-3)
        for rep in np.flatnonzero(~never)[:100]:
            s = ens.coalescence_step[rep, 0]
            assert np.all(np.diff(gap[rep, s:]) == 0)

    def test_tau_flattens_after_merge(self, ens):
        cov = realized_covariation(ens, (0, 1))
        step = ens.coalescence_step[:, 0]
        hit = step >= 0
        tau = cov.tau
        inc = tau[hit, -1] - tau[hit, step[hit]]
        assert within(inc.mean(), 0.0, inc.std(ddof=1) / math.sqrt(inc.size))

    def test_single_particle_marginal(self):
        ens = simulate_arratia(FlowConfig((0.7,), 1.0), 10_000, 3)
        x = ens.final()[:, 0]
        assert within(x.mean(), 0.7, math.sqrt(1.0 / x.size))
        assert within(x.var(ddof=1), 1.0, math.sqrt(2.0 / (x.size - 1)))

    def test_coincident_starts(self):
        ens = simulate_arratia(FlowConfig((0.2, 0.2), 0.5), 50, 1)
        np.testing.assert_array_equal(ens.paths[:, :, 0], ens.paths[:, :, 1])
        assert np.all(ens.coalescence_step == 0)

    def test_empty(self):
        ens = simulate_arratia(FlowConfig((0.0, 1.0), 1.0), 0, 1)
        assert ens.replicas == 0 and ens.paths.shape == (0, 1001, 2)

    def test_bridge_detects_more(self):
        cfg = FlowConfig((0.0, 1.0), 1.0, 1e-2)
        on = simulate_arratia(cfg, 4000, 21).coalesced_by().mean()
        off = simulate_arratia(FlowConfig((0.0, 1.0), 1.0, 1e-2, bridge_refinement=False), 4000, 21)
        assert on > off.coalesced_by().mean()
        p = 2 * norm.cdf(-1 / math.sqrt(2))
        assert within(on, p, math.sqrt(p * (1 - p) / 4000))

    def test_coalescence_nondecreasing_in_time(self, ens):
        fr = [ens.coalesced_by(t).mean() for t in (0.1, 0.25, 0.5, 1.0)]
        assert fr == sorted(fr)


class TestCholesky:
    def test_merged_particles_stay_merged(self):
        sk = sk_two(0.2)
        cfg = FlowConfig((0.1, 0.1, 0.4), 0.5, scheme="harris-cholesky")
        ens = simulate_harris_cholesky(sk, cfg, 200, 4)
        np.testing.assert_array_equal(ens.paths[:, :, 0], ens.paths[:, :, 1])

    def test_single_particle(self):
        cfg = FlowConfig((0.0,), 1.0, scheme="harris-cholesky")
        x = simulate(cfg, 10_000, 9, sk=sk_two(0.1)).final()[:, 0]
        assert within(x.mean(), 0.0, math.sqrt(1.0 / x.size))
        assert within(x.var(ddof=1), 1.0, math.sqrt(2.0 / (x.size - 1)))

    def test_far_apart_increments_uncorrelated(self):
        sk = sk_two(0.1)
        T = 0.25
        d = float(TWO.max_difference()) + 2 * 0.1 + 12 * math.sqrt(T) + 0.5
        cfg = FlowConfig((0.0, d), T, scheme="harris-cholesky")
        x = simulate(cfg, 4000, 5, sk=sk).final() - np.array([0.0, d])
        r = np.corrcoef(x[:, 0], x[:, 1])[0, 1]
        assert abs(r) <= 3 / math.sqrt(x.shape[0])
        assert np.all(simulate(cfg, 200, 5, sk=sk).gamma_integral == 0.0)

    def test_order_after_every_step(self):
        cfg = FlowConfig((0.0, 0.05, 0.1, 0.15), 0.2, 2e-4, scheme="harris-cholesky")
        ens = simulate(cfg, 300, 8, sk=sk_two(0.1))
        assert np.all(np.diff(ens.paths, axis=2) >= 0)
        assert ens.crossing_count >= 0 and ens.crossing_rate < 0.01

    def test_crossing_guard(self):
        cfg = FlowConfig((0.0, 0.001), 1.0, 0.1, scheme="harris-cholesky")
        with pytest.raises(CrossingRateError):
            simulate(cfg, 400, 1, sk=sk_two(0.05))

    def test_wrong_scheme_rejected(self):
        with pytest.raises(ValueError):
            simulate_harris_cholesky(sk_two(0.2), FlowConfig((0.0,), 1.0), 5, 1)
        with pytest.raises(ValueError):
            simulate(FlowConfig((0.0,), 1.0, scheme="harris-cholesky"), 5, 1)

    def test_covariation_increment_bounds(self):
        # 0 <= covariation increments <= int h_delta(gap) dr, and tau grows at most at rate 2
        sk = sk_two(0.2)
        cfg = FlowConfig((0.0, 0.3), 0.5, scheme="harris-cholesky")
        ens = simulate(cfg, 2000, 31, sk=sk)
        cov = realized_covariation(ens, (0, 1))
        gap = ens.paths[:, :-1, 1] - ens.paths[:, :-1, 0]
        h = comparison_function(TWO, STD.scaled(0.4), gap) * ens.time_step
        h_int = np.concatenate([np.zeros((ens.replicas, 1)), np.cumsum(h, axis=1)], axis=1)
        for s, t in ((0, 250), (250, 1000), (0, 1000)):
            inc = cov.values[:, t] - cov.values[:, s]
            se = inc.std(ddof=1) / math.sqrt(inc.size)
            bound = h_int[:, t] - h_int[:, s]
            assert inc.mean() >= -3 * se
            assert inc.mean() <= bound.mean() + 3 * se
            dtau = cov.tau[:, t] - cov.tau[:, s]
            span = 2 * (ens.times[t] - ens.times[s])
            assert -3 * se * 2 <= dtau.mean() <= span + 3 * se * 2


class TestSheet:
    def test_grid_extent(self):
        sk = sk_two(0.2)
        cfg = FlowConfig((0.0, 0.3), 0.5, scheme="harris-sheet")
        g = SheetGrid(cfg, sk, 0.025)
        reach = 6 * math.sqrt(0.5)
        assert g.q_lo <= -reach - 1.0 - 0.2
        assert g.q_lo + g.n_cells * g.h >= 0.3 + reach + 0.2
        assert g.width == int(2 * 0.2 / 0.025) + 1

    def test_cell_variance(self):
        sk = sk_two(0.2)
        cfg = FlowConfig((0.0,), 1.0, scheme="harris-sheet")
        g = SheetGrid(cfg, sk, 0.025)
        keys = rng.sheet_keys(1, range(64))
        cells = np.tile(np.arange(g.n_cells), (64, 1))
        dw = np.concatenate([g.increments(keys, k, cells, 1e-3).ravel() for k in range(20)])
        assert within(dw.var(), 0.025 * 1e-3, 0.025e-3 * math.sqrt(2 / dw.size))

    def test_space_step_limit(self):
        cfg = FlowConfig((0.0,), 0.1, scheme="harris-sheet", sheet_space_step=0.05)
        with pytest.raises(ValueError):
            simulate_harris_sheet(sk_two(0.2), cfg, 4, 1)

    def test_covariation_self_consistency(self):
        sk = sk_two(0.4)
        cfg = FlowConfig((0.0, 0.1), 0.5, scheme="harris-sheet")
        ens = simulate(cfg, 1024, 2, sk=sk)
        diff = ens.covariation[:, -1, 0] - ens.gamma_integral[:, -1, 0]
        assert within(diff.mean(), 0.0, diff.std(ddof=1) / math.sqrt(diff.size))
        assert np.all(np.diff(ens.paths, axis=2) >= 0)

    def test_single_particle(self):
        cfg = FlowConfig((0.4,), 0.5, scheme="harris-sheet")
        x = simulate(cfg, 2048, 6, sk=sk_two(0.2)).final()[:, 0]
        assert within(x.mean(), 0.4, math.sqrt(0.5 / x.size))
        assert within(x.var(ddof=1), 0.5, 0.5 * math.sqrt(2.0 / (x.size - 1)))


class TestDeterminism:
    @pytest.mark.parametrize("scheme", ["arratia", "harris-cholesky", "harris-sheet"])
    def test_worker_count_invariance(self, scheme):
        cfg = FlowConfig((0.0, 0.3), 0.05, 1e-3, scheme=scheme)
        sk = None if scheme == "arratia" else sk_two(0.2)
        a = simulate(cfg, BLOCK_SIZE + 200, 42, sk=sk, workers=1)
        b = simulate(cfg, BLOCK_SIZE + 200, 42, sk=sk, workers=2)
        np.testing.assert_array_equal(a.paths, b.paths)
        np.testing.assert_array_equal(a.covariation, b.covariation)
        np.testing.assert_array_equal(a.coalescence_step, b.coalescence_step)
        assert a.crossing_count == b.crossing_count

    def test_replica_prefix_stable(self):
        cfg = FlowConfig((0.0, 0.3), 0.1, scheme="harris-cholesky")
        a = simulate(cfg, 10, 5, sk=sk_two(0.2))
        b = simulate(cfg, 30, 5, sk=sk_two(0.2))
        np.testing.assert_array_equal(a.paths, b.paths[:10])

    def test_seed_changes_paths(self):
        cfg = FlowConfig((0.0, 0.3), 0.1)
        assert not np.array_equal(simulate(cfg, 5, 1).paths, simulate(cfg, 5, 2).paths)
        assert simulate(cfg, 5, 1).seed_record == {"master_seed": 1, "group": 0, "replicas": 5}


class TestPathMetric:
    def test_identical(self):
        t = np.linspace(0, 3, 31)
        f = Trajectory(t, np.random.default_rng(0).normal(size=(31, 2)))
        assert path_metric(f, f) == 0.0

    def test_constant_offset_geometric_series(self):
        t = np.linspace(0, 25, 251)
        f = Trajectory(t, np.zeros((251, 1)))
        g = Trajectory(t, np.ones((251, 1)))
        assert path_metric(f, g, terms=20) == pytest.approx(0.5 - 2.0**-21, abs=1e-15)

    def test_truncation_at_horizon(self):
        t = np.linspace(0, 2, 21)
        f = Trajectory(t, np.zeros((21, 1)))
        g = Trajectory(t, np.ones((21, 1)))
        assert path_metric(f, g) == pytest.approx(0.5 * (0.5 + 0.25))

    def test_mismatched_grid(self):
        f = Trajectory(np.linspace(0, 1, 11), np.zeros((11, 1)))
        g = Trajectory(np.linspace(0, 1, 12), np.zeros((12, 1)))
        with pytest.raises(ValueError):
            path_metric(f, g)

    @given(st.integers(0, 10_000))
    def test_triangle_and_symmetry(self, seed):
        r = np.random.default_rng(seed)
        t = np.linspace(0, 4, 41)
        f, g, h = (Trajectory(t, np.cumsum(r.normal(size=(41, 2)), axis=0)) for _ in range(3))
        assert path_metric(f, g) == pytest.approx(path_metric(g, f), abs=1e-15)
        assert path_metric(f, h) <= path_metric(f, g) + path_metric(g, h) + 1e-12


class TestPathDump:
    def test_csv_columns(self, tmp_path):
        ens = simulate(FlowConfig((0.0, 0.5), 0.01, 1e-3, record_stride=5), 2, 3)
        out = tmp_path / "paths.csv"
        ens.write_csv(out)
        lines = out.read_text().splitlines()
        assert lines[0] == "replica,t,x_1,x_2"
        assert len(lines) == 1 + 2 * 3
        first = lines[1].split(",")
        assert first[:4] == ["0", "0.0", "0.0", "0.5"]
