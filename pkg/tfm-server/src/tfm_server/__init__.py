"""In-context surrogate server for the bridge wire protocol."""

from .model import BACKENDS, ModelLoadError, ReferenceIclRegressor, load_backend
from .server import PROTOCOL_VERSION, serve

__version__ = "0.1.0"
