import json
import shutil

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sbmopa.dataio import bundled
from sbmopa.delta_sbm import DmuPanel
from sbmopa.synthetic import panel_csv, roles_json, synthetic_panel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def toy_panel():
    return DmuPanel(("A", "B"), ("x",), ("y",), np.array([[1.0], [2.0]]), np.array([[2.0], [1.0]]))


@pytest.fixture
def data_dir():
    return bundled("run_config.json").parent


@pytest.fixture(scope="session")
def small(tmp_path_factory):
    """Directory with an 8-DMU synthetic panel, its roles and the bundled policies."""
    d = tmp_path_factory.mktemp("small")
    panel = synthetic_panel(8, seed=3)
    (d / "panel.csv").write_text(panel_csv(panel))
    (d / "roles.json").write_text(json.dumps(roles_json(panel)))
    shutil.copy(bundled("policies_table5.json"), d / "policies.json")
    return d


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if rep.when == "call":
                lines += [v for k, v in rep.user_properties if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
