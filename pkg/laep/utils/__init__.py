from . import config
from . import exceptions
from . import logging
