"""Form compiler and assembly toolkit for discontinuous Galerkin methods on triangles."""
from importlib import resources


def form_source(name: str) -> str:
    """Text of a bundled form file, e.g. ``form_source("poisson")``."""
    return resources.files("dgfc.forms").joinpath(f"{name}.form").read_text()
