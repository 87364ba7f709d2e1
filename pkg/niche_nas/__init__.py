from .errors import *
from .utils import *
from .logging_utils import *
from .arch_space import *
from .objectives import *
from .benchmark import *
from .protocols import *
from .predictor import *
from .coevolve import *
from .config import *
from .engine import *
from .report import *
