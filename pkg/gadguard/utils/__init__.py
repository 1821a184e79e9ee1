from . import progressbar
from .misc import *
from .time import *
