"""Local-only security document classification.

A deterministic regex layer plus a local LLM backend classify documents into
a 7-category / 51-subcategory security taxonomy, with JSON, SARIF 2.1.0, and
HTML reporting, CI exit-code gating, an evaluation harness, and a dataset
curation pipeline.
"""

__version__ = "0.1.0"

from .errors import TorchsightError
from .taxonomy import Category, Severity, TaxonomyRegistry, load_registry

__all__ = [
    "Category",
    "Severity",
    "TaxonomyRegistry",
    "TorchsightError",
    "load_registry",
    "__version__",
]
