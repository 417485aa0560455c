"""Individual user fairness evaluation for top-k recommendation runs."""

from userfair.common import UNDEFINED, DataError, UndefinedError, is_undefined

__version__ = "0.1.0"

__all__ = ["UNDEFINED", "DataError", "UndefinedError", "is_undefined", "__version__"]
