import math

import numpy as np
import pytest
from scipy import stats

from swapsampler import clocks
from swapsampler.clocks import (ClockEnsemble, PrngState, SharedClock,
                                build_ensemble, exponential_draw, mix64,
                                shared_clock_init, stream_output)
from swapsampler.errors import ParameterError


class TestPrng:
    def test_same_seed_same_stream(self):
        a = PrngState(123)
        b = PrngState(123)
        assert [a.next_u64() for _ in range(100)] == [b.next_u64() for _ in range(100)]

    def test_different_seeds_diverge(self):
        a = PrngState(1)
        b = PrngState(2)
        assert [a.next_u64() for _ in range(4)] != [b.next_u64() for _ in range(4)]

    def test_uniform_in_unit_interval(self):
        rng = PrngState(5)
        draws = [rng.uniform() for _ in range(10000)]
        assert all(0.0 <= u < 1.0 for u in draws)
        assert abs(sum(draws) / len(draws) - 0.5) < 0.02

    def test_vector_matches_scalar(self):
        # the batch runner relies on bit-identical vectorized hashing
        xs = np.arange(1000, dtype=np.uint64) * np.uint64(0x1234567)
        vec = clocks.mix64_array(xs)
        assert all(int(v) == mix64(int(x)) for v, x in zip(vec, xs))

    def test_uniform_matrix_matches_stream(self):
        seeds = np.array([7, 99], dtype=np.uint64)
        mat = clocks.uniform_matrix(seeds, 8)
        for row, seed in zip(mat, (7, 99)):
            rng = PrngState(seed)
            assert [rng.uniform() for _ in range(8)] == list(row)

    def test_block_u64_matches_stream(self):
        rng = PrngState(31)
        block = rng.block_u64(16)
        assert list(block) == [stream_output(31, k) for k in range(1, 17)]
        assert rng.next_u64() == stream_output(31, 17)

    def test_substream_seeds_distinct(self):
        seeds = {clocks.substream_seed(9, space, i)
                 for space in (clocks.CLOCK_SPACE, clocks.SAMPLE_SPACE,
                               clocks.DELAY_SPACE, clocks.RUN_SPACE)
                 for i in range(50)}
        assert len(seeds) == 200


class TestExponentialDraw:
    def test_rejects_bad_rate(self):
        with pytest.raises(ParameterError):
            exponential_draw(PrngState(1), 0.0)
        with pytest.raises(ParameterError):
            exponential_draw(PrngState(1), -2.0)

    def test_inverse_cdf_endpoints(self):
        # u = 0 -> duration 0
        assert -math.log1p(-0.0) / 3.0 == 0.0
        # u = 1 - e^-1 at rate 1 -> duration 1
        assert -math.log1p(-(1.0 - math.exp(-1.0))) / 1.0 == pytest.approx(1.0, abs=1e-15)

    def test_mean_of_many_draws(self):
        # law of large numbers oracle: mean ~ 1/rate
        rng = PrngState(11)
        n = 10 ** 6
        total = sum(exponential_draw(rng, 2.0) for _ in range(n))
        assert total / n == pytest.approx(0.5, abs=0.005)

    def test_memorylessness(self):
        # (Z - s | Z > s) should look like a fresh draw at the same rate
        rate = 1.5
        s = 1.0 / rate
        rng = PrngState(17)
        draws = np.array([exponential_draw(rng, rate) for _ in range(10 ** 5)])
        conditional = draws[draws > s] - s
        fresh = np.array([exponential_draw(rng, rate) for _ in range(10 ** 5)])
        assert stats.ks_2samp(conditional, fresh).pvalue > 0.01


class TestSharedClock:
    def test_symmetric_seed_combination(self):
        a = shared_clock_init(5, 7, 1.0)
        b = shared_clock_init(7, 5, 1.0)
        assert [a.ring_time(k) for k in range(1001)] == \
               [b.ring_time(k) for k in range(1001)]

    def test_ring_times_strictly_increase(self):
        c = SharedClock(99, 2.0)
        times = [c.ring_time(k) for k in range(500)]
        assert times[0] == 0.0
        assert all(t1 < t2 for t1, t2 in zip(times, times[1:]))

    def test_ring_zero_is_time_zero(self):
        assert SharedClock(1, 1.0).ring_time(0) == 0.0

    def test_out_of_order_queries(self):
        c = SharedClock(42, 1.0)
        t10 = c.ring_time(10)
        c2 = SharedClock(42, 1.0)
        for k in range(11):
            c2.ring_time(k)
        assert c.ring_time(3) == c2.ring_time(3)
        assert t10 == c2.ring_time(10)

    def test_partial_sums_match_sequential_draws(self):
        # ring time n is the running sum of the stream's exponential draws
        c = SharedClock(7, 0.5)
        rng = PrngState(7)
        total = 0.0
        for k in range(1, 50):
            total += exponential_draw(rng, 0.5)
            assert c.ring_time(k) == total

    def test_first_ring_mean(self):
        rate = 4.0
        total = sum(SharedClock(seed, rate).ring_time(1) for seed in range(10 ** 5))
        assert total / 10 ** 5 == pytest.approx(1.0 / rate, rel=0.02)

    def test_rejects_bad_rate(self):
        with pytest.raises(ParameterError):
            SharedClock(1, 0.0)


class TestClockEnsemble:
    def test_single_clock_pass_through(self):
        ensemble = ClockEnsemble([SharedClock(3, 1.0)])
        reference = SharedClock(3, 1.0)
        for k in range(1, 50):
            slot, t = ensemble.next_event()
            assert slot == 0
            assert t == reference.ring_time(k)

    def test_merge_is_sorted_interleaving(self):
        # oracle: merge-sort the individual sequences, compare
        count = 200
        seeds = [11, 22, 33, 44]
        individual = []
        for s, seed in enumerate(seeds):
            c = SharedClock(seed, 1.0)
            individual.extend((c.ring_time(k), s) for k in range(1, count + 1))
        individual.sort()
        ensemble = ClockEnsemble([SharedClock(seed, 1.0) for seed in seeds])
        merged = [ensemble.next_event() for _ in range(len(seeds) * count // 2)]
        for (t_ref, s_ref), (s_got, t_got) in zip(individual, merged):
            assert (t_got, s_got) == (t_ref, s_ref)

    def test_nondecreasing_times(self):
        ensemble = build_ensemble(10, 2.0, master_seed=5)
        times = [ensemble.next_event()[1] for _ in range(2000)]
        assert all(a <= b for a, b in zip(times, times[1:]))

    def test_poisson_event_count(self):
        m, rate, horizon = 12, 1.5, 40.0
        ensemble = build_ensemble(m, rate, master_seed=8)
        count = 0
        while ensemble.peek_time() <= horizon:
            ensemble.next_event()
            count += 1
        expected = m * rate * horizon
        assert abs(count - expected) <= 3.0 * math.sqrt(expected)

    def test_decentralized_agreement(self):
        # both endpoints derive the same clock from exchanged seeds
        edges = [(0, 1), (1, 2), (0, 2)]
        e1 = clocks.decentralized_ensemble(edges, 1.0, master_seed=4)
        e2 = clocks.decentralized_ensemble(edges, 1.0, master_seed=4)
        for _ in range(300):
            assert e1.next_event() == e2.next_event()
        # viewpoint symmetry per edge
        si = clocks.peer_seed(4, 0)
        sj = clocks.peer_seed(4, 1)
        from_i = shared_clock_init(si, sj, 1.0)
        from_j = shared_clock_init(sj, si, 1.0)
        assert [from_i.ring_time(k) for k in range(100)] == \
               [from_j.ring_time(k) for k in range(100)]

    def test_deterministic_stream(self):
        a = build_ensemble(6, 1.0, master_seed=77)
        b = build_ensemble(6, 1.0, master_seed=77)
        assert [a.next_event() for _ in range(500)] == \
               [b.next_event() for _ in range(500)]
