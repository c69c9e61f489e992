from __future__ import annotations

import contextlib
import logging
import os
import pathlib
import shutil
import sys
import tempfile
from contextlib import _GeneratorContextManager
from typing import Callable
from typing import Iterator

import pytest


@pytest.fixture
def temporary_file() -> Callable[[str, str, str], _GeneratorContextManager[str]]:
    @contextlib.contextmanager
    def _fn(
        contents: str,
        directory: str = ".",
        suffix: str = ".conf",
    ) -> Iterator[str]:
        f = tempfile.NamedTemporaryFile(suffix=suffix, dir=directory, delete=False)
        try:
            f.write(contents.encode())
            f.close()
            yield f.name
        finally:
            os.remove(f.name)

    return _fn


@pytest.fixture
def temporary_directory() -> Callable[[str, str], _GeneratorContextManager[str]]:
    @contextlib.contextmanager
    def _fn(
        directory=None,
        prefix="tmp.",
    ) -> Iterator[str]:
        dir_name = tempfile.mkdtemp(prefix=prefix, dir=directory)
        try:
            yield dir_name
        finally:
            shutil.rmtree(dir_name)

    return _fn


@pytest.fixture
def root_dir() -> pathlib.Path:
    return pathlib.Path(__file__).parent.parent


@pytest.fixture
def latticeclt_command() -> list[str]:
    return [sys.executable, "-m", "latticeclt.cli"]


@pytest.fixture
def logger() -> logging.Logger:
    logger = logging.getLogger("latticeclt.tests")
    logger.addHandler(logging.NullHandler())
    return logger
