import textwrap
from pathlib import Path

import pytest

from spikedfisher.config import load_config

CASE1_GAUSS = """
[model]
p = 200
n1 = 1000
n2 = 400

[spikes]
values = 20, 0.2, 0.1
multiplicities = 1, 2, 1

[sigma]
case = case1

[dist]
x = gaussian
y = gaussian

[mc]
reps = 1000
seed = 20260811

[regime]
kind = assumptionD
"""

CASE1_BINOM = CASE1_GAUSS.replace("x = gaussian", "x = rademacher").replace(
    "y = gaussian", "y = rademacher"
).replace("kind = assumptionD", "kind = diagonalBlock")

CASE2_GAUSS = CASE1_GAUSS.replace("case = case1", "case = case2\nrho = 0.5")

CASE2_BINOM = CASE1_BINOM.replace("case = case1", "case = case2\nrho = 0.5")


def write_config(tmp_path: Path, text: str, name: str = "config.ini") -> Path:
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


@pytest.fixture(scope="session")
def config_dir(tmp_path_factory) -> Path:
    d = tmp_path_factory.mktemp("configs")
    for name, text in [
        ("case1_gauss.ini", CASE1_GAUSS),
        ("case1_binom.ini", CASE1_BINOM),
        ("case2_gauss.ini", CASE2_GAUSS),
        ("case2_binom.ini", CASE2_BINOM),
    ]:
        (d / name).write_text(textwrap.dedent(text))
    return d


@pytest.fixture(scope="session")
def fc_case1_gauss(config_dir):
    return load_config(str(config_dir / "case1_gauss.ini"))


@pytest.fixture(scope="session")
def fc_case1_binom(config_dir):
    return load_config(str(config_dir / "case1_binom.ini"))


@pytest.fixture(scope="session")
def fc_case2_gauss(config_dir):
    return load_config(str(config_dir / "case2_gauss.ini"))


@pytest.fixture(scope="session")
def fc_case2_binom(config_dir):
    return load_config(str(config_dir / "case2_binom.ini"))


@pytest.fixture(scope="session")
def theory_case1_gauss(fc_case1_gauss):
    from spikedfisher.cli import theory_results

    return theory_results(fc_case1_gauss)


@pytest.fixture(scope="session")
def theory_case1_binom(fc_case1_binom):
    from spikedfisher.cli import theory_results

    return theory_results(fc_case1_binom)
