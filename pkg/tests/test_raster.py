import math
import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fringephase.raster import (KINDS, PixelCoord, Raster, RasterDimensionError, RasterError,
                                RasterHeaderError, RasterTruncatedError, ceil_int, decode_raster,
                                quantize8, read_png8, read_raster, round_half_away, wrap,
                                write_png8, write_raster)


class TestWrap:
    @pytest.mark.parametrize("x, expected", [(0.0, 0.0), (3 * math.pi, math.pi),
                                             (-3 * math.pi, math.pi), (math.pi, math.pi),
                                             (-math.pi, math.pi)])
    def test_examples(self, x, expected):
        assert wrap(x) == pytest.approx(expected, abs=1e-12)

    def test_non_finite(self):
        with pytest.raises(ValueError):
            wrap(float("nan"))
        with pytest.raises(ValueError):
            wrap(np.array([0.0, np.inf]))

    @given(st.floats(-1e6, 1e6))
    def test_range_and_congruence(self, x):
        w = wrap(x)
        assert -math.pi < w <= math.pi
        k = (x - w) / (2 * math.pi)
        assert abs(k - round(k)) < 1e-9

    @given(st.floats(-1e6, 1e6))
    def test_idempotent(self, x):
        assert wrap(wrap(x)) == wrap(x)

    @given(st.floats(-1e6, 1e6), st.integers(-10**6, 10**6))
    def test_period(self, x, k):
        a, b = wrap(x + 2 * math.pi * k), wrap(x)
        # both ends of (-pi, pi] are the same angle
        d = min(abs(a - b), 2 * math.pi - abs(a - b))
        assert d < 1e-9


class TestRounding:
    @pytest.mark.parametrize("x, k", [(2.4, 2), (2.5, 3), (-2.5, -3), (-2.4, -2), (0.5, 1), (0.0, 0)])
    def test_round_examples(self, x, k):
        assert round_half_away(x) == k
        assert isinstance(round_half_away(x), int)

    @pytest.mark.parametrize("x, k", [(1.01, 2), (-1.01, -1), (3.0, 3), (-0.0, 0)])
    def test_ceil_examples(self, x, k):
        assert ceil_int(x) == k

    @given(st.floats(-1e12, 1e12))
    def test_round_odd_symmetry(self, x):
        assert round_half_away(-x) == -round_half_away(x)

    def test_arrays(self):
        np.testing.assert_array_equal(round_half_away(np.array([-1.5, 1.5, 0.49])), [-2, 2, 0])
        np.testing.assert_array_equal(ceil_int(np.array([-0.5, 0.5])), [0, 1])

    @pytest.mark.parametrize("f", [round_half_away, ceil_int])
    def test_non_finite(self, f):
        with pytest.raises(ValueError):
            f(float("inf"))


class TestRasterType:
    def test_kinds(self):
        assert len(KINDS) == 9
        with pytest.raises(ValueError):
            Raster(np.zeros((2, 2)), "colour")

    def test_immutable_copy(self):
        a = np.zeros((2, 3))
        r = Raster(a, "intensity")
        a[0, 0] = 5
        assert r.data[0, 0] == 0
        assert (r.width, r.height) == (3, 2)
        with pytest.raises(ValueError):
            r.data[0, 0] = 1

    def test_invariants(self):
        with pytest.raises(RasterError):
            Raster(np.array([[0.0, 0.5]]), "mask").check()
        with pytest.raises(RasterError):
            Raster(np.array([[0.0, 4.0]]), "wrapped-phase").check()
        with pytest.raises(RasterError):
            Raster(np.array([[-math.pi]]), "wrapped-phase").check()
        with pytest.raises(RasterError):
            Raster(np.array([[0.5]]), "fringe-order").check()
        Raster(np.array([[math.pi, 1.0, 0.0]]), "wrapped-phase").check()
        # invalid pixels (mask 0) are exempt
        Raster(np.array([[0.0, 4.0]]), "wrapped-phase").check(np.array([[True, False]]))

    def test_pixel_coord(self):
        p = PixelCoord(3, 4)
        assert (p.u, p.v) == (3, 4)


class TestFPR1:
    def test_zeros_2x2(self, tmp_path):
        path = tmp_path / "z.fpr"
        write_raster(Raster(np.zeros((2, 2)), "intensity"), path)
        blob = path.read_bytes()
        header, payload = blob.split(b"\n", 1)
        assert header == b"FPR1 2 2 intensity"
        # 4 values x 8 bytes; the 8-byte figure quoted for this case does not fit the format
        assert len(payload) == 32
        assert read_raster(path).data.tolist() == [[0.0, 0.0], [0.0, 0.0]]

    def test_pi_bit_exact(self, tmp_path):
        path = tmp_path / "pi.fpr"
        write_raster(Raster(np.array([[math.pi]]), "unwrapped-phase"), path)
        assert path.read_bytes().endswith(struct.pack("<d", math.pi))
        assert read_raster(path).data[0, 0] == math.pi

    def test_layout_row_major(self):
        r = decode_raster(b"FPR1 2 1 depth\n" + struct.pack("<2d", 1.5, -2.0))
        assert r.data.tolist() == [[1.5, -2.0]] and r.kind == "depth"

    @pytest.mark.parametrize("blob, err", [
        (b"FPR1 0 4 1\n", RasterDimensionError),
        (b"FPR1 4 0 intensity\n", RasterDimensionError),
        (b"FPR1 99999999 99999999 intensity\n", RasterDimensionError),
        (b"FPR2 1 1 intensity\n" + bytes(8), RasterHeaderError),
        (b"FPR1 1 1\n" + bytes(8), RasterHeaderError),
        (b"FPR1 1 1 colour\n" + bytes(8), RasterHeaderError),
        (b"FPR1 one 1 intensity\n" + bytes(8), RasterHeaderError),
        (b"FPR1 1 1 intensity", RasterHeaderError),
        (b"FPR1 2 2 intensity\n" + bytes(31), RasterTruncatedError),
        (b"FPR1 1 1 intensity\n" + bytes(9), RasterTruncatedError),
    ])
    def test_errors_are_distinct(self, blob, err):
        with pytest.raises(err):
            decode_raster(blob)
        assert issubclass(err, RasterError)

    @given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)),
                  elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
    def test_round_trip_property(self, data):
        import tempfile
        from pathlib import Path
        with tempfile.TemporaryDirectory() as d:
            p = Path(d) / "r.fpr"
            write_raster(Raster(data, "numerator"), p)
            back = read_raster(p).data
        assert back.tobytes() == data.tobytes()


class TestPNG:
    def test_white(self, tmp_path):
        write_png8(Raster(np.full((3, 4), 255.0), "intensity"), tmp_path / "w.png")
        back = read_png8(tmp_path / "w.png")
        assert back.data.shape == (3, 4) and np.all(back.data == 255.0)

    def test_tie_rounds_up(self):
        assert quantize8(np.array([127.5, 0.49, 254.5])).tolist() == [128, 0, 255]

    def test_range_error(self, tmp_path):
        with pytest.raises(ValueError):
            write_png8(np.array([[-1.0]]), tmp_path / "x.png")
        with pytest.raises(ValueError):
            quantize8(np.array([255.6]))

    def test_grayscale_no_alpha(self, tmp_path):
        from PIL import Image
        write_png8(np.array([[0.0, 100.2]]), tmp_path / "g.png")
        with Image.open(tmp_path / "g.png") as im:
            assert im.mode == "L"
        assert read_png8(tmp_path / "g.png").data.tolist() == [[0.0, 100.0]]
