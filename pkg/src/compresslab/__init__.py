"""compresslab: a workbench for tracking and comparing model-compression
experiments."""

from .store import (  # noqa: F401
    MetricSpec,
    ModelNode,
    ModelStore,
    Operation,
    load_store,
    load_store_file,
    op_path,
    select_descendants,
    serialize,
)

__version__ = "0.1.0"
