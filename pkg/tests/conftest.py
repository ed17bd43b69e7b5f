from pathlib import Path

import pytest

from msmu_forge.ingest import load_scene
from msmu_forge.scene_graph import build_scene_graph
from msmu_forge.synthetic import SCENE_ID, make_scene

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def synthetic_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scenes") / SCENE_ID
    make_scene(d)
    return d


@pytest.fixture(scope="session")
def synthetic(synthetic_dir):
    cloud, views = load_scene(synthetic_dir)
    return cloud, views, build_scene_graph(cloud, SCENE_ID)
