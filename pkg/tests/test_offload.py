import io
import math

import pytest
from hypothesis import given, strategies as st

from columnbench.errors import InvalidArgument
from columnbench.grid import Mode
from columnbench.offload import (K20X, P100, CalibrationData, CalibrationRow, DeviceSpec,
                                 KernelCostModel, LaunchConfig, LinkSpec, SearchSpace, autotune,
                                 break_even_cores, calibrate, default_inventory,
                                 device_memory_required, hybrid_step_time, kernel_arg_estimate,
                                 kernel_time, load_device, max_columns_in_memory,
                                 max_concurrent_threads, occupancy, resident_threads,
                                 transfer_time, wave_count)

MB = 1_000_000


@pytest.fixture(scope="module")
def reference():
    return CalibrationData.reference()


@pytest.fixture(scope="module")
def fitted(reference):
    return calibrate(reference)


class TestOccupancy:
    def test_k20x_128_registers(self):
        assert occupancy(K20X, 128) == (512, 0.25)

    def test_k20x_64_registers(self):
        assert occupancy(K20X, 64) == (1024, 0.5)

    def test_register_cap(self):
        assert occupancy(K20X, 1) == (2048, 1.0)

    def test_allocation_granularity(self):
        # 129 registers round up to 136: 65536 // 136 = 481, down to a warp multiple
        assert occupancy(K20X, 129)[0] == 480

    def test_zero_registers(self):
        with pytest.raises(InvalidArgument):
            occupancy(K20X, 0)

    def test_concurrency(self):
        assert max_concurrent_threads(K20X, 64) == 14336
        assert max_concurrent_threads(P100, 64) == 57344

    def test_single_sm(self):
        one = DeviceSpec("one", sm_count=1)
        assert max_concurrent_threads(one, 128) == 512

    @given(st.integers(1, 255))
    def test_occupancy_bounded(self, regs):
        threads, occ = occupancy(P100, regs)
        assert 0 < occ <= 1.0
        assert threads % 32 == 0


class TestWaves:
    def test_boundary(self):
        assert wave_count(14336, 14336) == 1
        assert wave_count(14337, 14336) == 2

    def test_zero_columns(self):
        assert wave_count(0, 100) == 0

    def test_zero_concurrency(self):
        with pytest.raises(InvalidArgument):
            wave_count(10, 0)

    def test_kernel_time_steps(self):
        launch = LaunchConfig(gangs=14 * 1024 // 128, vector_length=128, regs_per_thread=64)
        assert resident_threads(launch, K20X) == 14336
        cost = KernelCostModel(per_column_work=1e-3, launch_overhead=1e-4)
        one = kernel_time(14336, launch, K20X, cost)
        two = kernel_time(14337, launch, K20X, cost)
        assert two > one
        assert two - one == pytest.approx(cost.per_thread_time)
        assert kernel_time(1, launch, K20X, cost) == one
        assert kernel_time(0, launch, K20X, cost) == 0.0

    def test_block_too_large(self):
        launch = LaunchConfig(gangs=1, vector_length=1024, regs_per_thread=128)
        cost = KernelCostModel(per_column_work=1e-3)
        assert kernel_time(10, launch, K20X, cost) == math.inf

    def test_instruction_mix(self):
        slow_int = KernelCostModel(per_column_work=1.0, rate_int=0.5)
        # 0.46 / 0.5 + 0.20 + 0.28 over 0.94 busy
        assert slow_int.per_thread_time == pytest.approx(1.4 / 0.94)
        assert KernelCostModel(per_column_work=2.0, frac_idle=0.0).per_thread_time == pytest.approx(2.0)

    def test_bad_mix(self):
        with pytest.raises(InvalidArgument):
            KernelCostModel(per_column_work=1.0, frac_int=0.9, frac_fp=0.2)


class TestTransfer:
    link = LinkSpec(bandwidth_to_dev=10e9, bandwidth_from_dev=5e9, latency=1e-5)

    def test_zero_bytes_is_latency(self):
        assert transfer_time(0, "to_device", self.link) == 1e-5

    def test_directions(self):
        assert transfer_time(10e9, "to_device", self.link) == pytest.approx(1.0 + 1e-5)
        assert transfer_time(10e9, "from_device", self.link) == pytest.approx(2.0 + 1e-5)

    def test_half_bandwidth_doubles_variable_part(self):
        half = LinkSpec(5e9, 5e9, 1e-5)
        a = transfer_time(3e8, "to_device", self.link) - 1e-5
        b = transfer_time(3e8, "to_device", half) - 1e-5
        assert b == pytest.approx(2 * a)

    def test_negative_bytes(self):
        with pytest.raises(InvalidArgument):
            transfer_time(-1, "to_device", self.link)

    def test_unknown_direction(self):
        with pytest.raises(InvalidArgument):
            transfer_time(1, "sideways", self.link)

    def test_256mb_at_calibrated_bandwidth(self, reference):
        # bandwidth fitted to the 20000-cold row alone, where 27 fields x 60 levels
        # give 259.2 MB rather than a round 256 MB
        cal = calibrate(reference.select(columns=[20000], mode="cold"))
        assert transfer_time(256 * MB, "to_device", cal.link) == pytest.approx(22.56e-3, rel=0.02)


class TestMemory:
    inv = default_inventory(Mode.COLD)

    def _flag(self, n):
        return device_memory_required(n, self.inv.input_bytes_per_column,
                                      self.inv.temp_bytes_per_column, 0, P100).out_of_memory

    def test_temporaries_near_800kb(self):
        assert self.inv.temp_bytes_per_column == 787040
        assert self.inv.input_bytes_per_column + self.inv.temp_bytes_per_column == 800000

    def test_limit(self):
        assert not self._flag(20000)
        assert self._flag(20001)
        assert not self._flag(10000)
        assert max_columns_in_memory(self.inv, P100) == 20000

    def test_zero_columns(self):
        m = device_memory_required(0, 10, 10, fixed_bytes=1234)
        assert (m.bytes, m.out_of_memory) == (1234, False)

    def test_fixed_bytes_shrink_capacity(self):
        assert max_columns_in_memory(self.inv, P100, fixed_bytes=800000) == 19999

    def test_negative(self):
        with pytest.raises(InvalidArgument):
            device_memory_required(-1, 1, 1)


class TestHybrid:
    link = LinkSpec(1e9, 1e9, 0.0)

    def test_host_bound(self):
        # pipeline 10 + 50 + 5 = 65 ms under 100 ms of host work
        total, tl = hybrid_step_time(0.100, 10 * MB, 5 * MB, 0.050, 0.002, self.link)
        assert total == pytest.approx(0.102)
        assert tl.device_pipeline == pytest.approx(0.065)
        assert not tl.device_bound

    def test_no_host_work(self):
        total, tl = hybrid_step_time(0.0, 10 * MB, 5 * MB, 0.050, 0.002, self.link)
        assert total == pytest.approx(0.067)
        assert tl.device_bound

    def test_reference_cold_phases(self):
        link = LinkSpec(259.2 * MB / 22.56e-3, 115.2 * MB / 8.1e-3)
        total, tl = hybrid_step_time(0.010, 259.2 * MB, 115.2 * MB, 0.395, 0.002, link)
        assert tl.device_pipeline == pytest.approx(0.42566)
        assert total == pytest.approx(0.42766)
        assert tl.kernel_share == pytest.approx(0.928, abs=0.001)

    def test_negative(self):
        with pytest.raises(InvalidArgument):
            hybrid_step_time(-1.0, 0, 0, 0.0, 0.0, self.link)

    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_total_covers_both_sides(self, cpu, kernel, combine):
        total, tl = hybrid_step_time(cpu, 1000, 1000, kernel, combine, self.link)
        assert total >= cpu + combine
        assert total >= tl.device_pipeline + combine


class TestCalibration:
    def test_reference_table(self, reference):
        assert len(reference) == 6
        assert {r.columns for r in reference.rows} == {2000, 10000, 20000}

    def test_six_rows_within_15_percent(self, fitted):
        assert fitted.max_relative_error <= 0.15
        assert len(fitted.residuals) == 6

    def test_cold_kernel_at_20000(self, fitted):
        assert fitted.predict(20000, Mode.COLD).t_kernel == pytest.approx(0.395, rel=0.10)

    def test_held_out_share(self, reference):
        cal = calibrate(reference.select(columns=[2000, 10000]))
        share = cal.predict(20000, Mode.COLD).kernel_share
        assert abs(share - 0.93) <= 0.05

    def test_single_row_exact(self, reference):
        row = reference.select(columns=[10000], mode="warm")
        cal = calibrate(row)
        p = cal.predict(10000, Mode.WARM)
        assert p.t_in == pytest.approx(7e-3, rel=1e-9)
        assert p.t_kernel == pytest.approx(88e-3, rel=1e-9)
        assert p.t_out == pytest.approx(4.6e-3, rel=1e-9)

    def test_least_squares_option(self, reference):
        cal = calibrate(reference, method="lstsq")
        assert cal.max_relative_error < 0.2

    def test_inconsistent_rows_do_not_raise(self):
        rows = [CalibrationRow(1000, Mode.WARM, 1e-3, 1e-2, 1e-3),
                CalibrationRow(1000, Mode.WARM, 5e-3, 5e-2, 5e-3)]
        cal = calibrate(rows)
        assert cal.max_relative_error > 0.5

    def test_empty(self):
        with pytest.raises(InvalidArgument):
            calibrate(CalibrationData([]))

    def test_missing_mode(self, reference):
        cal = calibrate(reference.select(mode="warm"))
        with pytest.raises(InvalidArgument):
            cal.predict(100, Mode.COLD)

    def test_csv_round_trip(self):
        text = "columns,config,t_in_ms,t_kernel_ms,t_out_ms\n500,cold,1,10,0.5\n"
        data = CalibrationData.from_csv(io.StringIO(text))
        assert data.rows[0] == CalibrationRow(500, Mode.COLD, 1e-3, 10e-3, 0.5e-3)

    def test_csv_bad_header(self):
        with pytest.raises(ValueError):
            CalibrationData.from_csv(io.StringIO("a,b\n1,2\n"))


class TestBreakEven:
    def test_reference_speed_ratio(self):
        assert break_even_cores(1.0, 7.4, 11 / 12) == 9

    def test_device_slower_than_one_core(self):
        assert break_even_cores(2.0, 1.0) == 1

    def test_device_free(self):
        assert break_even_cores(0.0, 1.0) is None

    def test_sharing_curve(self):
        # device shared by n cores slows as 1/n: the host wins at once
        assert break_even_cores(1.0, 7.4, 1.0, lambda n: 1.0 / n) == 3

    def test_never(self):
        assert break_even_cores(1.0, 100.0, 1.0, max_cores=50) is None

    @given(st.floats(0.01, 100.0), st.floats(0.01, 100.0))
    def test_monotone_in_host_cost(self, device, host):
        inf = float("inf")
        a = break_even_cores(device, host) or inf
        b = break_even_cores(device, host * 2) or inf
        assert b >= a


class TestAutotune:
    cost = KernelCostModel(per_column_work=1e-3)

    def test_singleton(self):
        space = SearchSpace((64,), (128,), (64,))
        r = autotune(20000, P100, self.cost, space)
        assert r.best == r.worst and r.spread == 1.0 and r.evaluated == 1

    def test_deterministic(self):
        a = autotune(20000, P100, self.cost)
        b = autotune(20000, P100, self.cost)
        assert a == b

    def test_default_space(self):
        r = autotune(20000, P100, self.cost)
        assert r.evaluated == 8960
        assert r.spread > 1
        assert r.best != r.worst

    def test_ties_prefer_smaller(self):
        space = SearchSpace((64, 32), (256, 128), (64,))
        r = autotune(100, P100, self.cost, space)
        assert r.best == LaunchConfig(32, 128, 64)

    def test_empty_space(self):
        with pytest.raises(InvalidArgument):
            autotune(10, P100, self.cost, SearchSpace((), (32,), (32,)))


class TestArguments:
    def test_unpacked_inventory_warns(self):
        est = kernel_arg_estimate([26, 34])
        assert est.count == 600 and est.warning

    def test_packed(self):
        est = kernel_arg_estimate([26, 34], n_scalars=5, packed=True)
        assert est.count == 15 and not est.warning

    def test_empty(self):
        assert kernel_arg_estimate(0, n_scalars=7).count == 7


class TestDevices:
    def test_presets(self):
        assert load_device("K20X") is K20X
        assert load_device({"name": "x", "sm_count": 2}).sm_count == 2

    def test_unknown_key(self):
        with pytest.raises(InvalidArgument):
            load_device({"name": "x", "sm_count": 2, "cores": 9})

    def test_bad_value(self):
        with pytest.raises(InvalidArgument):
            DeviceSpec("x", sm_count=0)
