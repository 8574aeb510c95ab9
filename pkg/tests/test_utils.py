import json
import logging

import numpy as np
import pytest

from utils.config_loader import BUILTIN_DEFAULTS, ConfigLoader
from utils.errors import EmptyCell, InvalidConfig, TooManyFailedReplicates
from utils.progress_tracker import ProgressTracker
from utils.report_writer import SCHEMA_VERSION, render_error, render_json, render_tsv, to_jsonable, write_report


class TestConfigLoader:
    def test_builtin_defaults_without_files(self, tmp_path, caplog):
        loader = ConfigLoader(defaults_path=tmp_path / "missing.yaml", environ={})
        with caplog.at_level(logging.WARNING):
            settings = loader.resolve({})
        assert settings == BUILTIN_DEFAULTS
        assert "Defaults file not found" in caplog.text

    def test_shipped_defaults_match_builtins(self):
        assert ConfigLoader(environ={}).resolve({}) == BUILTIN_DEFAULTS

    def test_layer_precedence(self, tmp_path):
        defaults = tmp_path / "defaults.yaml"
        defaults.write_text("seed: 2\nbootstrap: 99\nreps: 10\n")
        user = tmp_path / "user.yaml"
        user.write_text("seed: 3\nbootstrap: 50\n")
        loader = ConfigLoader(defaults_path=defaults, environ={"CIC_SEED": "4"})
        settings = loader.resolve({"bootstrap": 7, "seed": None}, config_path=str(user))
        assert settings["reps"] == 10
        assert settings["seed"] == "4"
        assert settings["bootstrap"] == 7

    def test_empty_environment_values_are_ignored(self, tmp_path):
        loader = ConfigLoader(defaults_path=tmp_path / "none.yaml", environ={"CIC_SEED": "", "CIC_N": "900"})
        assert loader.env_overrides() == {"n": "900"}

    def test_missing_user_config(self, tmp_path):
        with pytest.raises(InvalidConfig):
            ConfigLoader(environ={}).resolve({}, config_path=str(tmp_path / "nope.yaml"))

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [1, 2\n")
        with pytest.raises(InvalidConfig):
            ConfigLoader(environ={}).resolve({}, config_path=str(path))

    def test_non_mapping_yaml(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(InvalidConfig):
            ConfigLoader(environ={}).resolve({}, config_path=str(path))


class TestReportWriter:
    def test_non_finite_floats_become_null(self):
        value = {"a": float("nan"), "b": np.float64(np.inf), "c": np.int64(3), "d": np.array([1.5, np.nan])}
        assert to_jsonable(value) == {"a": None, "b": None, "c": 3, "d": [1.5, None]}

    def test_json_is_versioned_and_sorted(self):
        text = render_json({"zeta": 1, "alpha": (1, 2)})
        document = json.loads(text)
        assert document["schema_version"] == SCHEMA_VERSION
        assert document["alpha"] == [1, 2]
        assert text.index('"alpha"') < text.index('"zeta"')

    def test_tsv_sections(self):
        text = render_tsv({"first": [{"x": 1.0, "y": None}], "empty": [], "second": [{"z": "a"}]})
        assert text == "# first\nx\ty\n1\tNA\n\n# second\nz\na\n"

    def test_error_rendering(self):
        error = EmptyCell(1, 0, 1).to_dict()
        assert render_error(error, "tsv").startswith("error\tEmptyCell\t")
        assert json.loads(render_error(error, "json"))["error"]["context"] == {"d": 1, "m": 0, "t": 1}

    def test_write_report_creates_parent_directories(self, tmp_path, capsys):
        target = tmp_path / "a" / "b" / "report.tsv"
        write_report("x\n", str(target))
        assert target.read_text() == "x\n"
        write_report("y\n", "-")
        assert capsys.readouterr().out == "y\n"


class TestProgressTracker:
    def test_milestones_are_logged_once(self, caplog):
        tracker = ProgressTracker(8, label="bootstrap")
        with caplog.at_level(logging.INFO):
            assert tracker.update(1) is None
            assert tracker.update(1) == 0.25
            assert tracker.update(5, failed=1) == 0.75
            assert tracker.update(1) == 1.0
        assert caplog.text.count("bootstrap:") == 3
        assert "bootstrap: 75% (7/8, 1 failed" in caplog.text
        assert tracker.completed == 8
        assert tracker.failed == 1
        assert tracker.fraction == 1.0

    def test_empty_run_is_complete(self):
        assert ProgressTracker(0).fraction == 1.0
        with pytest.raises(ValueError):
            ProgressTracker(-1)


def test_error_codes_and_exit_codes():
    err = TooManyFailedReplicates(30, 100, 0.1)
    assert err.code == "TooManyFailedReplicates"
    assert err.exit_code == 3
    assert EmptyCell(0, 1, 0).exit_code == 2
