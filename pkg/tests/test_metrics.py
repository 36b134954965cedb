import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sbam.errors import DegenerateSweepError, ParameterError
from sbam.masking import MaskingConfig
from sbam.metrics import (
    PERFORMANCE_HEADER,
    SweepRecord,
    format_sweep_csv,
    global_pimr,
    parse_sweep_csv,
    pimr,
    records_from_rows,
    sweep,
    sweep_rows,
)
from sbam.synthetic import planted_object_images
from sbam.trainer import TrainConfig


def rec(name, perfs, ratios=None):
    ratios = ratios or [0.1 * (i + 1) for i in range(len(perfs))]
    return SweepRecord(name, tuple(zip(ratios, perfs)))


def values(curve):
    return [v for _, v in curve]


class TestPimr:
    def test_endpoints(self):
        v = values(pimr(rec("m", [83.0, 80.0, 85.0, 84.0])))
        assert v[1] == 0.0 and v[2] == 1.0

    def test_midpoint(self):
        assert values(pimr(rec("m", [80.0, 82.0, 84.0]))) == [0.0, 0.5, 1.0]

    @given(
        st.lists(st.integers(-1000, 1000), min_size=2, max_size=8, unique=True),
        st.floats(0.1, 10),
        st.floats(-100, 100),
    )
    def test_affine_invariance(self, perfs, a, b):
        perfs = [p / 10 for p in perfs]
        base = values(pimr(rec("m", perfs)))
        moved = values(pimr(rec("m", [a * p + b for p in perfs])))
        np.testing.assert_allclose(moved, base, atol=1e-9)
        assert min(base) == 0 and max(base) == 1

    def test_degenerate(self):
        with pytest.raises(DegenerateSweepError):
            pimr(rec("m", [1.0, 1.0, 1.0]))

    def test_needs_two_points(self):
        with pytest.raises(ParameterError):
            pimr(rec("m", [1.0]))

    def test_lowest_ratio_reference(self):
        v = values(pimr(rec("m", [82.0, 80.0, 84.0]), reference="lowest_ratio"))
        assert v == [0.0, -1.0, 1.0]

    def test_ratios_must_increase(self):
        with pytest.raises(ParameterError):
            SweepRecord("m", ((0.5, 1.0), (0.3, 2.0)))


class TestGlobalPimr:
    def test_two_record_example(self):
        a = rec("mae", [80.0, 84.0])
        b = rec("sbam", [82.0, 86.0])
        ga, gb = global_pimr([a, b])
        assert values(ga) == [0.0, 4 / 6]
        assert values(gb) == [2 / 6, 1.0]
        assert gb[0][1] == pytest.approx(0.3333, abs=1e-4)

    def test_single_record_matches_pimr(self):
        r = rec("m", [3.0, 7.0, 5.0])
        assert global_pimr([r])[0] == pimr(r)

    def test_degenerate(self):
        with pytest.raises(DegenerateSweepError):
            global_pimr([rec("a", [1.0, 1.0]), rec("b", [1.0, 1.0])])

    def test_affine_invariance(self):
        recs = [rec("a", [1.0, 3.0, 2.0]), rec("b", [0.5, 4.0, 2.5])]
        moved = [rec(r.model_name, [2 * p - 9 for p in r.performances]) for r in recs]
        for x, y in zip(global_pimr(recs), global_pimr(moved)):
            np.testing.assert_allclose(values(x), values(y))


class TestCsv:
    def test_roundtrip_bit_exact(self):
        rng = np.random.default_rng(0)
        recs = [rec("random", list(rng.normal(size=4))), rec("sbam", list(rng.normal(size=4)))]
        rows = sweep_rows(recs)
        text = format_sweep_csv(rows)
        assert text.splitlines()[0] == PERFORMANCE_HEADER
        assert text.splitlines()[1] == "model,ratio,performance,pimr,global_pimr"
        back = parse_sweep_csv(text)
        assert back == rows
        assert records_from_rows(back) == recs


@pytest.fixture(scope="module")
def small_data():
    images, _ = planted_object_images(16, seed=3)
    return images


class TestSweep:
    def test_lr_zero_is_degenerate(self, small_data):
        cfg = TrainConfig(lr=0.0, epochs=2)
        recs = sweep([MaskingConfig(strategy="random")], [0.5, 0.75], small_data, cfg, threads=1)
        assert recs[0].performances[0] == recs[0].performances[1]
        with pytest.raises(DegenerateSweepError):
            pimr(recs[0])

    def test_needs_two_ratios(self, small_data):
        with pytest.raises(ParameterError):
            sweep([MaskingConfig()], [0.5], small_data, TrainConfig(epochs=1))

    def test_valid_curves_and_thread_invariance(self, small_data):
        strategies = [MaskingConfig(strategy="random"), MaskingConfig(strategy="sbam")]
        cfg = TrainConfig(epochs=15, seed=7)
        ratios = [0.3, 0.5, 0.75, 0.9]
        serial = sweep(strategies, ratios, small_data, cfg, threads=1)
        parallel = sweep(strategies, ratios, small_data, cfg, threads=4)
        assert serial == parallel
        assert [r.model_name for r in serial] == ["random", "sbam"]
        glob = global_pimr(serial)
        pooled = [v for curve in glob for v in values(curve)]
        assert max(pooled) == 1.0 and min(pooled) == 0.0
        for r in serial:
            v = values(pimr(r))
            assert min(v) == 0 and max(v) == 1

    def test_amr_strategy_keeps_delta_r(self, small_data):
        cfg = TrainConfig(epochs=1)
        amr = MaskingConfig(strategy="sbam_amr", base_ratio=0.5, delta_r=0.15)
        sweep([amr], [0.3, 0.5], small_data, cfg, threads=1)
        with pytest.raises(ParameterError):
            sweep([amr], [0.5, 0.9], small_data, cfg, threads=1)
