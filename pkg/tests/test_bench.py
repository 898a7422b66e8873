import json
import math

import numpy as np
import pytest

from rodsim import liegroup as lg
from rodsim.bench import error_metrics, loglog_slope, r3so3_baseline_strains
from rodsim.bench.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main
from rodsim.bench.config import DEFAULTS, EXPERIMENTS, defaults, format_defaults, load_config, parse_config
from rodsim.bench.experiments import (
    HelixGeometry,
    Figure,
    Table,
    ExperimentResult,
    liegroup_checks,
    oscillation_stats,
    SELFTEST_TOLERANCES,
)
from rodsim.bench.output import figure_svg, write_csv, write_result
from rodsim.errors import ConfigError
from rodsim.rodcore import ElementGeometry, node_pose

QUARTER = np.r_[0.0, 0.0, 0.0, 0.0, -math.pi / 2, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0]


class TestConfig:
    def test_defaults_for_every_experiment(self):
        assert set(DEFAULTS) == set(EXPERIMENTS)
        for name in EXPERIMENTS:
            assert parse_config("", name) == defaults(name)
            assert load_config(None, name) == defaults(name)

    def test_override_and_comments(self):
        text = """
        [cantilever]
        slenderness = 10, 100  # two cases
        tolerances = 1e-8, 1e-9 ; inline comment
        reference_tolerances = 1e-10, 1e-12
        increments = 5
        [helix]
        turns = 3
        """
        cfg = parse_config(text, "cantilever")
        assert cfg["slenderness"] == [10.0, 100.0]
        assert cfg["tolerances"] == [1e-8, 1e-9]
        assert cfg["reference_tolerances"] == [1e-10, 1e-12]
        assert cfg["increments"] == 5
        assert cfg["length"] == 1e3
        assert parse_config(text, "helix")["turns"] == 3.0

    def test_defaults_not_shared(self):
        a = defaults("cantilever")
        a["n_elements"].append(99)
        assert 99 not in defaults("cantilever")["n_elements"]

    @pytest.mark.parametrize(
        "text",
        [
            "[nonsense]\nx = 1\n",
            "[cantilever]\nunknown_key = 1\n",
            "[cantilever]\nincrements = many\n",
            "[cantilever]\nslenderness = 10\n",  # length mismatch with tolerances
            "[cantilever]\nreference_tolerances = 1e-8\n",
            "[cantilever]\nsamples = 1\n",
            "[heavy-top]\nvariant = Z\n",
            "[heavy-top]\nrho_inf = 2\n",
            "[liegroup-selftest]\nmax_angle = 3.2\n",
            "[objectivity]\ntolerance = -1\n",
            "no section header\n",
            "[helix]\nturns = 1\nturns = 2\n",
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text, "cantilever" if "cantilever" in text else text[1:].split("]")[0] if text.startswith("[") else "helix")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini", "helix")

    def test_format_roundtrip(self):
        for name in EXPERIMENTS:
            assert parse_config(format_defaults(name), name) == defaults(name)


class TestMetrics:
    def test_identical_fields(self):
        f = lambda xi: node_pose([xi, 0, 0, 0, 0, xi])
        rep = error_metrics(f, f, k=7)
        assert (rep.e_r, rep.e_psi, rep.k) == (0.0, 0.0, 7)

    def test_constant_offset(self):
        d = np.array([0.3, -0.4, 0.0])
        trial = lambda xi: node_pose(np.r_[xi + d[0], d[1], 0, 0, 0, 0])
        ref = lambda xi: node_pose([xi, 0, 0, 0, 0, 0])
        rep = error_metrics(trial, ref, k=100)
        # sqrt(k |d|^2) / k
        assert rep.e_r == pytest.approx(np.linalg.norm(d) / math.sqrt(100))
        assert rep.e_psi == 0.0

    def test_constant_rotation_offset(self):
        ref = lambda xi: node_pose([xi, 0, 0, 0, 0, 0])
        trial = lambda xi: node_pose([xi, 0, 0, 0.0, 0.2, 0.0])
        assert error_metrics(trial, ref, k=25).e_psi == pytest.approx(0.2 / 5)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            error_metrics(lambda x: np.eye(4), lambda x: np.eye(4), k=1)

    def test_slope(self):
        n = np.array([4, 8, 16, 32])
        assert loglog_slope(n, 3.0 * n**-2.0) == pytest.approx(-2.0)


class TestBaseline:
    def test_straight(self):
        qe = np.r_[0.0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0]
        s = r3so3_baseline_strains(qe, 0.3)
        np.testing.assert_allclose(s.gamma, [1.0, 0, 0])
        np.testing.assert_allclose(s.kappa, 0.0)

    def test_quarter_circle_couples_shear(self):
        # chord-based centerline: gamma varies along the element and shows shear
        g = np.array([r3so3_baseline_strains(QUARTER, xi).gamma for xi in np.linspace(0, 1, 5)])
        k = np.array([r3so3_baseline_strains(QUARTER, xi).kappa for xi in np.linspace(0, 1, 5)])
        assert np.ptp(g[:, 0]) > 0.1
        assert np.abs(g[:, 2]).max() > 0.1
        np.testing.assert_allclose(k, np.tile([0.0, math.pi / 2, 0.0], (5, 1)), atol=1e-12)
        # at the midpoint the chord is tangent: no shear, dilatation = chord/arc
        mid = r3so3_baseline_strains(QUARTER, 0.5).gamma
        np.testing.assert_allclose(mid, [math.sqrt(2), 0.0, 0.0], atol=1e-12)

    def test_element_scaling(self):
        el = ElementGeometry(0.5, 1.0, 2.0)
        qe = np.r_[0.0, 0, 0, 0, 0, 0, 1.0, 0, 0, 0, 0, 0]
        np.testing.assert_allclose(r3so3_baseline_strains(qe, 0.7, el).gamma, [1.0, 0, 0])


class TestHelixGeometry:
    def test_frame_is_rotation_and_tangent(self):
        g = HelixGeometry()
        for xi in (0.0, 0.3, 1.0):
            A = g.frame(xi)
            np.testing.assert_allclose(A.T @ A, np.eye(3), atol=1e-14)
            h = 1e-6
            t = (g.position(xi + h) - g.position(xi - h)) / (2 * h)
            np.testing.assert_allclose(A[:, 0], t / np.linalg.norm(t), atol=1e-8)
            assert np.linalg.norm(t) == pytest.approx(g.length, rel=1e-8)

    def test_end_points(self):
        g = HelixGeometry()
        np.testing.assert_allclose(g.position(0.0), [0.0, -g.radius, 0.0], atol=1e-12)
        np.testing.assert_allclose(g.position(1.0), [0.0, -g.radius, g.height], atol=1e-12)


class TestOscillation:
    def test_counts(self):
        z = np.array([1.0, 2.0, -3.0, -1.0, 0.5, 0.0, -0.2])
        n, amps = oscillation_stats(z)
        assert n == 3
        np.testing.assert_allclose(amps, [2.0, 3.0, 0.5, 0.2])

    def test_damped_sine(self):
        t = np.linspace(0, 10, 2001)
        n, amps = oscillation_stats(np.exp(-0.3 * t) * np.sin(2 * math.pi * t + 0.1))
        assert n == 20
        assert np.all(np.diff(amps[1:]) < 0)


class TestSelfTest:
    def test_all_within_tolerance(self):
        err = liegroup_checks(samples=10, seed=3)
        assert set(err) == set(SELFTEST_TOLERANCES)
        for k, v in err.items():
            assert v <= SELFTEST_TOLERANCES[k], k


class TestOutput:
    def test_csv(self, tmp_path):
        p = tmp_path / "t.csv"
        write_csv(p, Table("t", ["a [m]", "b [-]"], np.array([[1.0, 0.1], [2.0, 1 / 3]])))
        lines = p.read_text().splitlines()
        assert lines[0] == "a [m],b [-]"
        np.testing.assert_array_equal(np.loadtxt(p, delimiter=",", skiprows=1), [[1.0, 0.1], [2.0, 1 / 3]])

    def test_empty_csv(self, tmp_path):
        p = tmp_path / "e.csv"
        write_csv(p, Table("e", ["a [-]"], np.zeros((0, 1))))
        assert p.read_text().strip() == "a [-]"

    def test_svg(self):
        fig = Figure("f", "T & <x>", "n", "e", [("s1", [1, 10, 100], [1e-1, 1e-3, 0.0])], logx=True, logy=True)
        svg = figure_svg(fig)
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
        assert "T &amp; &lt;x&gt;" in svg and "polyline" in svg

    def test_write_result(self, tmp_path):
        res = ExperimentResult("x", [Table("tab=1", ["a [-]"], np.ones((2, 1)))],
                               [Figure("fig", "t", "x", "y", [("a", [0, 1], [0, 1])])], {"v": 1.5}, [], ["n"])
        paths = write_result(res, tmp_path / "out")
        assert sorted(p.name for p in paths) == ["fig.svg", "summary.json", "tab1.csv"]
        data = json.loads((tmp_path / "out" / "summary.json").read_text())
        assert data["summary"] == {"v": 1.5} and data["notes"] == ["n"]


class TestCLI:
    def test_list(self, capsys):
        assert main(["list"]) == EXIT_OK
        out = capsys.readouterr().out
        for name in EXPERIMENTS:
            assert f"[{name}]" in out

    def test_selftest_run(self, tmp_path, capsys):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[liegroup-selftest]\nsamples = 5\n")
        assert main(["run", "liegroup-selftest", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
        assert (tmp_path / "o" / "liegroup_selftest.csv").exists()
        assert "d_exp_so3" in capsys.readouterr().out

    def test_config_errors(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[helix]\nbogus = 1\n")
        out = str(tmp_path / "o")
        assert main(["run", "helix", "--config", str(cfg), "--out", out]) == EXIT_CONFIG
        assert main(["run", "helix", "--config", str(tmp_path / "none.ini"), "--out", out]) == EXIT_CONFIG
        assert main(["run", "no-such-experiment", "--out", out]) == EXIT_CONFIG
        assert main(["run", "helix", "--out", out, "--jobs", "0"]) == EXIT_CONFIG
        assert main(["run", "helix"]) == EXIT_CONFIG

    def test_solver_failure(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[bent-helix]\nn_elements = 2\nincrements = 1\ntolerance = 1e-30\n")
        assert main(["run", "bent-helix", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_SOLVER

    def test_deterministic_output(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[objectivity]\nload_increments = 2\nrotation_increments = 20\nturns = 1\n")
        for d in ("a", "b"):
            assert main(["run", "objectivity", "--config", str(cfg), "--out", str(tmp_path / d)]) == EXIT_OK
        for name in ("objectivity_increments.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
