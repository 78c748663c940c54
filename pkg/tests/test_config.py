import pytest

from scenesel.config import build_config, parse_config_file
from scenesel.core import DataError


class TestConfigFile:
    def write(self, tmp_path, text):
        path = tmp_path / "cfg.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def test_defaults_without_file(self):
        cfg = build_config(environ={})
        assert cfg.entropy.tau == 0.3
        assert cfg.entropy.zeta == 1e-12
        assert cfg.kernel.gamma == 0.1
        assert cfg.kernel.sigma == 1.0
        assert cfg.uncertainty.eta == 0.5
        assert cfg.plan.n_r == 20
        assert cfg.plan.k1 == 3.0
        assert cfg.plan.k2 == 2.5
        assert cfg.plan.order == ("entropy", "similarity", "uncertainty")
        assert cfg.rounds == 3
        assert cfg.squared_mean_term is True
        assert cfg.catalog.classes == ("car", "pedestrian", "cyclist")

    def test_file_values_and_comments(self, tmp_path):
        path = self.write(
            tmp_path,
            "# comment line\n"
            "entropy.tau = 0.5\n"
            "plan.n_r = 7  # trailing comment\n"
            "\n"
            "plan.order = uncertainty,similarity,entropy\n",
        )
        cfg = build_config(path=path, environ={})
        assert cfg.entropy.tau == 0.5
        assert cfg.plan.n_r == 7
        assert cfg.plan.order == ("uncertainty", "similarity", "entropy")

    def test_shared_tau_propagates(self, tmp_path):
        path = self.write(tmp_path, "entropy.tau = 0.45\n")
        cfg = build_config(path=path, environ={})
        assert cfg.kernel.tau == 0.45
        assert cfg.uncertainty.tau == 0.45

    def test_unknown_key_rejected(self, tmp_path):
        path = self.write(tmp_path, "kernel.gamam = 0.1\n")
        with pytest.raises(DataError, match="unknown configuration key"):
            parse_config_file(path)

    def test_missing_equals_rejected(self, tmp_path):
        path = self.write(tmp_path, "entropy.tau 0.5\n")
        with pytest.raises(DataError, match="key = value"):
            parse_config_file(path)

    def test_custom_classes_need_anchor_coverage(self, tmp_path):
        path = self.write(tmp_path, "classes = car,truck\n")
        with pytest.raises((DataError, ValueError)):
            build_config(path=path, environ={})

    def test_custom_classes_with_anchors(self, tmp_path):
        path = self.write(tmp_path, "classes = car,truck\nanchor.truck = 10.0,2.6,3.2\n")
        cfg = build_config(path=path, environ={})
        assert cfg.catalog.classes == ("car", "truck")
        truck = cfg.anchors.for_class("truck")
        assert (truck.length, truck.width, truck.height) == (10.0, 2.6, 3.2)

    def test_invalid_value_wrapped_as_data_error(self, tmp_path):
        path = self.write(tmp_path, "plan.n_r = many\n")
        with pytest.raises(DataError, match="invalid configuration"):
            build_config(path=path, environ={})


class TestOverrides:
    def test_env_overrides_file(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("entropy.tau = 0.2\n")
        cfg = build_config(path=path, environ={"SCENESEL_ENTROPY_TAU": "0.6"})
        assert cfg.entropy.tau == 0.6

    def test_flag_overrides_env(self, tmp_path):
        cfg = build_config(
            overrides={"plan.n_r": 9}, environ={"SCENESEL_PLAN_N_R": "4"}
        )
        assert cfg.plan.n_r == 9

    def test_unknown_env_var_rejected(self):
        with pytest.raises(DataError, match="unknown configuration variable"):
            build_config(environ={"SCENESEL_PLAN_NR": "4"})

    def test_unrelated_env_ignored(self):
        cfg = build_config(environ={"PATH": "/usr/bin", "HOME": "/root"})
        assert cfg.plan.n_r == 20

    def test_env_anchor_override(self):
        cfg = build_config(environ={"SCENESEL_ANCHOR_CAR": "4.0,1.7,1.5"})
        assert cfg.anchors.for_class("car").length == 4.0

    def test_none_overrides_skipped(self):
        cfg = build_config(overrides={"plan.n_r": None}, environ={})
        assert cfg.plan.n_r == 20

    def test_bad_rounds_rejected(self):
        with pytest.raises(DataError, match="rounds"):
            build_config(overrides={"plan.rounds": 0}, environ={})

    def test_bool_parsing(self):
        cfg = build_config(overrides={"diag.squared_mean_term": "false"}, environ={})
        assert cfg.squared_mean_term is False
        with pytest.raises(DataError, match="boolean"):
            build_config(overrides={"diag.squared_mean_term": "maybe"}, environ={})
