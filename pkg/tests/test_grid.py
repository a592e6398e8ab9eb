import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from columnbench.errors import InvalidArgument
from columnbench.grid import (COLD_ROSTER, WARM_ROSTER, Mode, MoistureConfig, SourceBuffer,
                              accumulate_sources, build_grid, init_state, integrate)


class TestGrid:
    def test_twenty_thousand_columns(self):
        g = build_grid(100, 200, 60, 100)
        assert g.n_columns == 20000
        assert g.n_points == 1_200_000

    def test_single_cell(self):
        g = build_grid(1, 1, 1, 100)
        assert (g.n_columns, g.n_points) == (1, 1)

    @pytest.mark.parametrize("args", [(0, 10, 60, 100), (10, -1, 60, 100), (10, 10, 0, 100),
                                      (10, 10, 60, 0), (10, 10, 60, -5.0)])
    def test_bad_extents(self, args):
        with pytest.raises(InvalidArgument):
            build_grid(*args)

    def test_heights_are_level_centres(self):
        g = build_grid(1, 1, 3, 100)
        np.testing.assert_allclose(g.heights, [50, 150, 250])


class TestMoistureConfig:
    def test_roster_sizes(self):
        assert MoistureConfig.warm().n_fields == 5
        assert MoistureConfig.cold().n_fields == 18
        assert MoistureConfig.warm().field_roster == WARM_ROSTER
        assert len(set(COLD_ROSTER)) == 18

    def test_cold_roster_composition(self):
        kinds = {}
        from columnbench.grid import FIELD_KINDS
        for name in COLD_ROSTER:
            kinds[FIELD_KINDS[name]] = kinds.get(FIELD_KINDS[name], 0) + 1
        assert kinds == {"mass": 6, "number": 5, "shape": 3, "aerosol": 4}

    def test_unknown_field(self):
        with pytest.raises(InvalidArgument):
            MoistureConfig.warm().index("qi")

    def test_bad_roster_rejected(self):
        with pytest.raises(InvalidArgument):
            MoistureConfig(Mode.WARM, ("qv", "qc"))

    def test_slot_map(self):
        slots = MoistureConfig.warm().slot_map()
        assert slots[0] == 0 and slots[3] == -1
        assert list(MoistureConfig.cold().slot_map()) == list(range(18))


class TestInitState:
    def test_clear(self):
        s = init_state(build_grid(6, 5, 40), MoistureConfig.cold(), 0.0, 3)
        assert np.all(s.field("qc") == 0.0)
        assert np.all(s.field("qr") == 0.0)

    def test_overcast_bubble_band(self):
        nz = 40
        s = init_state(build_grid(6, 5, nz), MoistureConfig.warm(), 1.0, 3)
        qc = s.q[s.config.index("qc")]
        assert np.all(qc.max(axis=1) > 0)
        k0, k1 = nz // 4, 3 * nz // 5
        assert np.all(qc[:, :k0] == 0) and np.all(qc[:, k1 + 1:] == 0)
        assert np.all(qc[:, k0:k1 + 1] > 0)

    def test_seed_determinism(self):
        g = build_grid(7, 3, 20)
        a = init_state(g, MoistureConfig.cold(), 0.5, 42)
        b = init_state(g, MoistureConfig.cold(), 0.5, 42)
        assert a.q.tobytes() == b.q.tobytes()
        assert a.theta.tobytes() == b.theta.tobytes()

    def test_different_seeds_differ(self):
        g = build_grid(10, 10, 20)
        a = init_state(g, MoistureConfig.warm(), 0.5, 1)
        b = init_state(g, MoistureConfig.warm(), 0.5, 2)
        assert not np.array_equal(a.q, b.q)

    @pytest.mark.parametrize("f", [-0.1, 1.5])
    def test_fraction_out_of_range(self, f):
        with pytest.raises(InvalidArgument):
            init_state(build_grid(2, 2, 10), MoistureConfig.warm(), f, 0)

    @pytest.mark.parametrize("layout", ["clustered", "deck"])
    def test_clustered_layout_hits_fraction(self, layout):
        g = build_grid(32, 32, 20)
        s = init_state(g, MoistureConfig.warm(), 0.3, 5, layout=layout)
        cloudy = (s.q[s.config.index("qc")].max(axis=1) > 0).sum()
        assert cloudy == round(0.3 * g.n_columns)

    @pytest.mark.parametrize("layout", ["independent", "clustered", "deck"])
    @pytest.mark.parametrize("f", [1e-4, 0.9999])
    def test_partial_sky_has_both_kinds(self, layout, f):
        g = build_grid(4, 4, 20)
        s = init_state(g, MoistureConfig.warm(), f, 0, layout=layout)
        cloudy = (s.q[s.config.index("qc")].max(axis=1) > 0).sum()
        assert 0 < cloudy < g.n_columns

    def test_unknown_layout(self):
        with pytest.raises(InvalidArgument):
            init_state(build_grid(2, 2, 10), MoistureConfig.warm(), 0.3, 0, layout="stripes")

    def test_field_view_shape(self, warm_state):
        g = warm_state.grid
        assert warm_state.field("qv").shape == (g.nx, g.ny, g.nz)


def _buffer(state, index, value):
    b = SourceBuffer.zeros(state, index)
    b.values[:] = value
    b.theta[:] = value
    return b


class TestAccumulate:
    def test_identity(self, warm_state):
        a = _buffer(warm_state, 0, 0.25)
        total = accumulate_sources([a])
        assert np.array_equal(total.values, a.values)

    def test_ones_make_twos(self, warm_state):
        total = accumulate_sources([_buffer(warm_state, 0, 1.0), _buffer(warm_state, 1, 1.0)])
        assert np.all(total.values == 2.0)

    def test_supply_order_irrelevant(self, warm_state):
        rng = np.random.default_rng(0)
        bufs = []
        for i in range(4):
            b = SourceBuffer.zeros(warm_state, i)
            b.values[:] = rng.standard_normal(b.values.shape) * 10.0 ** rng.integers(-8, 8)
            bufs.append(b)
        ref = accumulate_sources(bufs).values.tobytes()
        for perm in ([3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]):
            assert accumulate_sources([bufs[i] for i in perm]).values.tobytes() == ref

    def test_duplicate_index(self, warm_state):
        with pytest.raises(InvalidArgument):
            accumulate_sources([_buffer(warm_state, 1, 0.0), _buffer(warm_state, 1, 0.0)])

    def test_extent_mismatch(self, warm_state, cold_state):
        with pytest.raises(InvalidArgument):
            accumulate_sources([_buffer(warm_state, 0, 0.0), _buffer(cold_state, 1, 0.0)])

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            accumulate_sources([])


class TestIntegrate:
    def test_zero_sources_leave_state_unchanged(self, cold_state):
        new, report = integrate(cold_state, SourceBuffer.zeros(cold_state, 0), 2.0)
        assert new.q.tobytes() == cold_state.q.tobytes()
        assert new.theta.tobytes() == cold_state.theta.tobytes()
        assert report.total == 0.0
        assert new.time == 2.0

    def test_growth(self):
        s = init_state(build_grid(1, 1, 1), MoistureConfig.warm(), 0.0, 0)
        s.q[:] = 1e-3
        b = SourceBuffer.zeros(s, 0)
        b.values[:] = 1e-6
        new, _ = integrate(s, b, 1.0)
        np.testing.assert_allclose(new.q, 1.001e-3, rtol=1e-14)

    def test_clip_recorded(self):
        s = init_state(build_grid(1, 1, 1), MoistureConfig.warm(), 0.0, 0)
        s.q[:] = 0.0
        s.q[1] = 1e-6
        b = SourceBuffer.zeros(s, 0)
        b.values[1] = -1e-5
        new, report = integrate(s, b, 1.0)
        assert new.q[1, 0, 0] == 0.0
        assert report.clipped["qc"] == pytest.approx(9e-6, rel=1e-12)

    def test_bad_dt(self, warm_state):
        with pytest.raises(InvalidArgument):
            integrate(warm_state, SourceBuffer.zeros(warm_state, 0), 0.0)

    def test_extent_mismatch(self, warm_state, cold_state):
        with pytest.raises(InvalidArgument):
            integrate(warm_state, SourceBuffer.zeros(cold_state, 0), 1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-1e-2, 1e-2), st.floats(0.1, 100.0), st.integers(0, 2**32 - 1))
    def test_never_negative(self, scale, dt, seed):
        s = init_state(build_grid(3, 2, 8), MoistureConfig.cold(), 0.5, 1)
        b = SourceBuffer.zeros(s, 0)
        b.values[:] = np.random.default_rng(seed).standard_normal(b.values.shape) * scale
        new, _ = integrate(s, b, dt)
        assert np.all(new.q >= 0.0)
