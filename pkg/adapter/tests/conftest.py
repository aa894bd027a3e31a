import os
import sys

import pytest

from adapter_support import HERE

# the stub framework lives next to the tests; both this process and the
# adapter subprocess must be able to import it
if str(HERE) not in sys.path:
    sys.path.insert(0, str(HERE))


@pytest.fixture(autouse=True)
def stub_on_path(monkeypatch):
    existing = os.environ.get("PYTHONPATH", "")
    joined = str(HERE) + (os.pathsep + existing if existing else "")
    monkeypatch.setenv("PYTHONPATH", joined)
