import pathlib

import pytest

from hbgsim import compile_graph, parse_model
from hbgsim.threetank import TankParams, build_three_tank

REPO = pathlib.Path(__file__).resolve().parent.parent
MODELS = REPO / "models"

ONE_TANK = """
bondgraph one_tank {
  signal Inflow = piecewise(0.0: 0.0, 1.0: 1.0)
  element Sf Sf1 { value = signal(Inflow) }
  element C C1 { value = 1.0 }
  element R R1 { value = 1.0 }
  junction 0 j
  bond b1 from Sf1 to j
  bond b2 from j to C1
  bond b3 from j to R1
}
"""

DECAY = """
bondgraph decay {
  element C C1 { value = 1.0 }
  element R R1 { value = 1.0 }
  junction 0 j
  bond b1 from j to C1
  bond b2 from j to R1
}
"""


@pytest.fixture(scope="session")
def one_tank():
    return parse_model(ONE_TANK)


@pytest.fixture(scope="session")
def decay():
    return parse_model(DECAY)


@pytest.fixture(scope="session")
def three_tank():
    return build_three_tank(TankParams())


@pytest.fixture(scope="session")
def three_tank_ibd(three_tank):
    return compile_graph(three_tank)
