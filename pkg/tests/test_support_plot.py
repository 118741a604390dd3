"""Tests for support_plot — SVG rendering of a wavelet's support.

Covers:
- generate_support_svg: mesh polygons, coefficient dots, index ring, title
- Themes and the fallback to the default palette
- write_support_svg goes through artifacts
"""

import pytest

import artifacts
import support_plot
from wavelets import build_wavelets


@pytest.fixture(scope="module")
def level_two(square):
    return build_wavelets(square, 2)


class TestGenerateSupportSvg:

    def test_document(self, level_two):
        svg = support_plot.generate_support_svg(level_two, 0)
        assert svg.startswith('<?xml version="1.0"')
        assert svg.rstrip().endswith("</svg>")
        assert svg.count("<polygon") == len(level_two.hierarchy.levels[2].triangles)

    def test_one_dot_per_coefficient(self, level_two):
        k = 3
        svg = support_plot.generate_support_svg(level_two, k)
        dots = len(level_two.columns[k])
        # plus the ring around the index point
        assert svg.count("<circle") == dots + 1
        assert f"{dots} nodal coefficients" in svg

    def test_support_filled(self, level_two):
        colors = support_plot.THEMES["light"]
        svg = support_plot.generate_support_svg(level_two, 0)
        assert svg.count(f'fill="{colors["support"]}"') == len(level_two.support_triangles(0))

    def test_title_names_type(self, level_two):
        svg = support_plot.generate_support_svg(level_two, 0)
        assert f"level 2 wavelet 0 ({level_two.type_tags[0]})" in svg

    def test_index_out_of_range(self, level_two):
        with pytest.raises(IndexError):
            support_plot.generate_support_svg(level_two, len(level_two))
        with pytest.raises(IndexError):
            support_plot.generate_support_svg(level_two, -1)


class TestThemes:

    def test_terminal_theme(self, level_two):
        svg = support_plot.generate_support_svg(level_two, 0, theme="terminal")
        assert support_plot.THEMES["terminal"]["bg"] in svg

    def test_unknown_theme_falls_back(self, level_two):
        svg = support_plot.generate_support_svg(level_two, 0, theme="neon")
        assert support_plot.THEMES[support_plot.DEFAULT_THEME]["bg"] in svg


class TestWriteSupportSvg:

    def test_written_and_recorded(self, level_two, isolated_output):
        path = support_plot.write_support_svg("plots/w0.svg", level_two, 0)
        assert path == isolated_output / "plots" / "w0.svg"
        assert "<svg" in path.read_text()
        assert artifacts.read_manifest()[-1]["path"] == str(path)
