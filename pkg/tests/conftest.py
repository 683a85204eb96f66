import numpy as np
import pytest

from dgfc import form_source
from dgfc.compiler import compile_source


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CACHE = {}


def compiled(name, elements=None, constants=None):
    """Compile a bundled form once per session."""
    key = (name, tuple(sorted((elements or {}).items(), key=str)), tuple(sorted((constants or {}).items())))
    if key not in _CACHE:
        _CACHE[key] = compile_source(form_source(name), elements, constants)
    return _CACHE[key]


@pytest.fixture
def compile_bundled():
    return compiled


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(LINES):
            terminalreporter.write_line(LINES[n])
