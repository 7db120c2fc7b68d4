import os
import shutil

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("CONCEPTSEG_CLI") or shutil.which("conceptseg")
    if not path:
        pytest.skip("conceptseg executable not available")
    return path
