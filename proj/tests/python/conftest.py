# SPDX-License-Identifier: Apache-2.0
import os
import pathlib

import covis


def pytest_report_header(config):
    return f"covis extension: {covis._core.__file__}"


def pytest_configure(config):
    # Under ctest the in-tree build must be the one under test; an editable
    # install would otherwise shadow it.
    stage = os.environ.get("COVIS_PY_STAGE")
    if stage:
        got = pathlib.Path(covis._core.__file__).resolve()
        want = pathlib.Path(stage).resolve()
        if want not in got.parents:
            raise RuntimeError(f"imported {got}, expected the build under {want}")
