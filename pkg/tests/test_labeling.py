from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from weaktext import labeling
from weaktext.errors import ConfigError, DataError
from weaktext.imgproc import WordBox
from weaktext.labeling import LFClass, LFSpec, PatternHistogram

import oracles


def page(h, w, rects, ink=20, bg=230):
    img = np.full((h, w), bg, np.uint8)
    for x, y, bw, bh in rects:
        img[y : y + bh, x : x + bw] = ink
    return img


def edge_pipeline_oracle(edges, thickness):
    return [WordBox(*b) for b in oracles.boxes_of_components(oracles.thicken(edges, thickness))]


class TestContourLF:
    def test_blank_page(self):
        assert labeling.run_contour_lf(np.full((20, 20), 255, np.uint8), 4) == []

    def test_close_blobs_merge(self):
        # blobs at columns 1..4 and 7..10 of a 4x12 strip; thickening radius 2
        # bridges the 2 px gap and the box stays tight on the ink
        img = page(4, 12, [(1, 0, 4, 4), (7, 0, 4, 4)])
        assert labeling.run_contour_lf(img, 4) == [WordBox(1, 0, 10, 4)]

    def test_distant_blobs_stay_apart(self):
        img = page(4, 16, [(1, 0, 4, 4), (11, 0, 4, 4)])
        assert labeling.run_contour_lf(img, 4) == [WordBox(1, 0, 4, 4), WordBox(11, 0, 4, 4)]

    @pytest.mark.parametrize("thickness", [1, 2, 4, 7])
    def test_isolated_blob(self, thickness):
        img = page(20, 30, [(8, 5, 9, 6)])
        assert labeling.run_contour_lf(img, thickness) == [WordBox(8, 5, 9, 6)]


class TestCannyLF:
    def test_constant(self):
        assert labeling.run_canny_lf(np.full((12, 12), 128, np.uint8), 50, 150, 2) == []

    def test_single_glyph(self):
        img = page(12, 12, [(4, 3, 4, 6)])
        img[5, 8:10] = 20
        edges = oracles.canny(img.astype(float).tolist(), 50, 150)
        expected = edge_pipeline_oracle(edges, 2)
        got = labeling.run_canny_lf(img, 50, 150, 2)
        assert got == expected
        assert len(got) == 1
        b = got[0]
        assert b.x <= 4 and b.y <= 3 and b.x1 >= 10 and b.y1 >= 9

    def test_separated_glyphs(self):
        img = page(14, 30, [(3, 4, 5, 6), (17, 4, 5, 6)])
        edges = oracles.canny(img.astype(float).tolist(), 50, 150)
        got = labeling.run_canny_lf(img, 50, 150, 2)
        assert got == edge_pipeline_oracle(edges, 2)
        assert len(got) == 2

    def test_bad_thresholds(self):
        with pytest.raises(ConfigError):
            labeling.run_canny_lf(page(8, 8, []), 10, 5, 2)


class TestSobelLF:
    def test_blank(self):
        assert labeling.run_sobel_lf(np.full((10, 10), 240, np.uint8), 2) == []

    def test_filled_rectangle(self):
        # gradient ring spans one pixel either side of the rectangle edge,
        # thickening (radius 1) adds one more: (4,4,4,4) grows to (2,2,8,8)
        img = page(12, 12, [(4, 4, 4, 4)])
        assert labeling.run_sobel_lf(img, 2) == [WordBox(2, 2, 8, 8)]

    def test_filled_rectangle_matches_oracle(self):
        img = page(12, 12, [(4, 4, 4, 4)])
        ink = (img < 128).astype(float) * 255
        mag, _, _ = oracles.sobel_magnitude(ink.tolist())
        edges = [[v > 0 for v in row] for row in mag]
        assert labeling.run_sobel_lf(img, 2) == edge_pipeline_oracle(edges, 2)

    def test_dot_grid(self):
        dots = [(x, y, 1, 1) for y in (3, 12, 21) for x in (3, 12, 21)]
        img = page(25, 25, dots)
        boxes = labeling.run_sobel_lf(img, 2)
        assert len(boxes) == 9
        ink = (img < 128).astype(float) * 255
        mag, _, _ = oracles.sobel_magnitude(ink.tolist())
        assert boxes == edge_pipeline_oracle([[v > 0 for v in row] for row in mag], 2)


class TestSidecars:
    def test_two_boxes(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("10 10 50 20\n70 10 40 20")
        assert labeling.load_external_boxes(p, 200, 100) == [WordBox(10, 10, 50, 20), WordBox(70, 10, 40, 20)]

    def test_clamp_to_image(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("# detector output\n90 40 50 30\n200 0 5 5\n")
        assert labeling.load_external_boxes(p, 100, 50) == [WordBox(90, 40, 10, 10)]

    def test_zero_area_dropped(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("1 1 0 5\n2 2 3 3\n")
        assert labeling.load_external_boxes(p, 10, 10) == [WordBox(2, 2, 3, 3)]

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("")
        assert labeling.load_external_boxes(p, 10, 10) == []

    def test_missing_file_policy(self, tmp_path):
        with pytest.raises(DataError):
            labeling.load_external_boxes(tmp_path / "nope.txt", 10, 10)
        assert labeling.load_external_boxes(tmp_path / "nope.txt", 10, 10, on_missing="abstain") is None

    def test_malformed_line_reports_line_number(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("1 1 2 2\n# ok\n1 2 three 4\n")
        with pytest.raises(DataError, match=r"a\.boxes\.txt:3"):
            labeling.load_external_boxes(p, 10, 10)

    def test_negative_rejected(self, tmp_path):
        p = tmp_path / "a.boxes.txt"
        p.write_text("-1 0 2 2\n")
        with pytest.raises(DataError):
            labeling.read_boxes(p)

    def test_write_read_round_trip(self, tmp_path):
        boxes = [WordBox(0, 0, 3, 4), WordBox(5, 6, 7, 8)]
        labeling.write_boxes(tmp_path / "b.txt", boxes)
        assert labeling.read_boxes(tmp_path / "b.txt") == boxes


class TestShrink:
    def test_reference_box(self):
        assert labeling.shrink_box(WordBox(10, 10, 100, 20), 0.10, 0.20) == WordBox(15, 12, 90, 16)

    def test_identity(self):
        b = WordBox(3, 4, 17, 9)
        assert labeling.shrink_box(b, 0.0, 0.0) == b

    def test_unit_box_is_floor(self):
        assert labeling.shrink_box(WordBox(5, 5, 1, 1), 0.9, 0.9) == WordBox(5, 5, 1, 1)

    def test_round_half_up(self):
        # 5 * 0.9 = 4.5 rounds up to 5; 15 * 0.9 = 13.5 rounds to 14
        assert labeling.shrink_box(WordBox(0, 0, 5, 15), 0.1, 0.1).w == 5
        assert labeling.shrink_box(WordBox(0, 0, 5, 15), 0.1, 0.1).h == 14

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(1, 80), st.integers(1, 80),
           st.floats(0, 0.95), st.floats(0, 0.95))
    def test_shrunk_inside_original(self, x, y, w, h, sw, sh):
        b = WordBox(x, y, w, h)
        s = labeling.shrink_box(b, sw, sh)
        assert b.x <= s.x and b.y <= s.y and s.x1 <= b.x1 and s.y1 <= b.y1


class TestRasterize:
    def test_empty_fundamental(self):
        assert not labeling.rasterize([], "fundamental", 4, 3).any()

    def test_empty_complementary(self):
        assert labeling.rasterize([], "complementary", 4, 3).all()

    def test_pair_sums_to_one(self):
        boxes = [WordBox(1, 1, 2, 2)]
        f = labeling.rasterize(boxes, "fundamental", 4, 4)
        c = labeling.rasterize(boxes, "complementary", 4, 4)
        assert (f.astype(int) + c.astype(int) == 1).all()
        assert f.sum() == 4

    def test_out_of_bounds(self):
        with pytest.raises(DataError):
            labeling.rasterize([WordBox(3, 3, 2, 2)], "fundamental", 4, 4)

    @given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(1, 3), st.integers(1, 3)), max_size=6))
    def test_disjoint_boxes_round_trip(self, cells):
        # place boxes on a coarse grid so they never touch, even diagonally
        by_cell = {(cx, cy): WordBox(cx * 5, cy * 5, w, h) for cx, cy, w, h in cells}
        boxes = sorted(by_cell.values(), key=lambda b: (b.y, b.x))
        bmap = labeling.rasterize(boxes, "fundamental", 30, 30)
        from weaktext import imgproc

        got = imgproc.component_boxes(imgproc.connected_components(bmap))
        assert sorted(got, key=lambda b: (b.y, b.x)) == boxes


def spec(lf_id, polarity="fundamental", **kw):
    return LFSpec(lf_id, "external", polarity, q=kw.pop("q", 0.8), **kw)


class TestTau:
    def test_single_lf_all_ones(self):
        tau = labeling.build_tau([(spec("a"), np.ones((2, 3), bool))])
        assert tau.n == 1 and tau.m == 6
        assert tau.flat().tolist() == [[True]] * 6

    def test_pair_is_complementary(self):
        boxes = [WordBox(1, 1, 3, 2), WordBox(5, 0, 2, 4)]
        f, c = spec("a"), spec("a_c", "complementary", pair="a")
        tau = labeling.build_tau([(s, labeling.lf_map(s, boxes, 8, 5)) for s in (f, c)])
        assert (tau.fired.sum(axis=-1) == 1).all()

    def test_zero_lfs(self):
        with pytest.raises(ConfigError):
            labeling.build_tau([])

    def test_dimension_mismatch_names_lf(self):
        with pytest.raises(DataError, match="'bad'"):
            labeling.build_tau([(spec("a"), np.ones((2, 2), bool)), (spec("bad"), np.ones((3, 2), bool))])

    def test_class_discipline(self):
        rng = np.random.default_rng(0)
        specs = [spec("a"), spec("b", "complementary"), spec("c")]
        tau = labeling.build_tau([(s, rng.random((4, 5)) < 0.5) for s in specs])
        labels = tau.labels()
        for j, s in enumerate(specs):
            assert set(np.unique(labels[..., j])) <= {0, int(s.lf_class) + 1}
        assert tau.lf_classes == (LFClass.TEXT, LFClass.NONTEXT, LFClass.TEXT)

    def test_abstaining_external_lf(self):
        f, c = spec("a"), spec("a_c", "complementary")
        assert not labeling.lf_map(f, None, 4, 4).any()
        assert not labeling.lf_map(c, None, 4, 4).any()


class TestHistogram:
    def test_uniform(self):
        tau = labeling.build_tau([(spec("a"), np.ones((3, 3), bool)), (spec("b"), np.zeros((3, 3), bool))])
        h = labeling.histogram(tau)
        assert h.as_dict() == {(True, False): 9}

    def test_eight_lf_bound(self):
        rng = np.random.default_rng(1)
        tau = labeling.build_tau([(spec(f"l{j}"), rng.random((60, 70)) < 0.5) for j in range(8)])
        h = labeling.histogram(tau)
        assert len(h.counts) <= 256
        assert h.m == 60 * 70

    @given(st.integers(0, 2**32 - 1))
    def test_additive_over_concatenation(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((3, 4, 3)) < 0.4
        b = rng.random((5, 4, 3)) < 0.6
        specs = [spec(f"l{j}") for j in range(3)]
        ha = labeling.histogram(labeling.build_tau([(s, a[..., j]) for j, s in enumerate(specs)]))
        hb = labeling.histogram(labeling.build_tau([(s, b[..., j]) for j, s in enumerate(specs)]))
        both = np.concatenate([a, b], axis=0)
        hab = labeling.histogram(labeling.build_tau([(s, both[..., j]) for j, s in enumerate(specs)]))
        merged = ha.merge(hb)
        assert merged.as_dict() == hab.as_dict()
        expect = dict(ha.as_dict())
        for k, v in hb.as_dict().items():
            expect[k] = expect.get(k, 0) + v
        assert expect == hab.as_dict()

    def test_empty(self):
        assert PatternHistogram.empty(3).m == 0


class TestLFSpec:
    def test_rejects_bad_guide(self):
        with pytest.raises(ConfigError):
            LFSpec("a", "contour", q=1.0)

    def test_rejects_bad_shrink(self):
        with pytest.raises(ConfigError):
            LFSpec("a", "contour", shrink_w=1.0)

    def test_defaults_filled(self):
        assert LFSpec("a", "canny").params["edge_thickness"] == 2


def test_concurrent_lf_runs_match_sequential():
    img = page(40, 60, [(5, 5, 12, 6), (22, 5, 9, 6), (5, 20, 20, 7)])
    jobs = [("contour", lambda: labeling.run_contour_lf(img, 4)),
            ("canny", lambda: labeling.run_canny_lf(img, 50, 150, 2)),
            ("sobel", lambda: labeling.run_sobel_lf(img, 2))]
    sequential = {name: fn() for name, fn in jobs}
    with ThreadPoolExecutor(3) as pool:
        futures = {name: pool.submit(fn) for name, fn in jobs}
        concurrent = {name: f.result() for name, f in futures.items()}
    assert concurrent == sequential
