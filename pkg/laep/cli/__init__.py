from .main import main, build_parser
from .manifest import RunManifest
from .commands import COMMANDS
