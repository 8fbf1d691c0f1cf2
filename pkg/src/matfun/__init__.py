"""matfun: matrix-function oracles, certified ReLU approximants of the
matrix exponential, numeric token codecs, dataset generation, a small
autodiff/transformer stack, and tolerance-based evaluation.

Submodules are imported lazily so that the CLI can configure threading
before numpy loads.
"""

__version__ = "0.1.0"

__all__ = [
    "oracles",
    "linalg",
    "relunet",
    "construct",
    "codec",
    "datagen",
    "autodiff",
    "models",
    "training",
    "metrics",
]


def __getattr__(name):
    if name in __all__:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
