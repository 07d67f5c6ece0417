import numpy as np
import pytest

from maskbev_kit.synthetic import write_kitti_split, write_semantickitti_sequence


@pytest.fixture(scope="session")
def kitti_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("kitti")
    write_kitti_split(str(root), n_scans=4, seed=0)
    return str(root)


@pytest.fixture(scope="session")
def sk_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("semantickitti")
    write_semantickitti_sequence(str(root), "08", n_scans=3, seed=1)
    return str(root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = []  # (criterion, passed, message) recorded by test_acceptance.py


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, msg in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"[{crit:>2}] {'PASS' if ok else 'FAIL'}  {msg}")
