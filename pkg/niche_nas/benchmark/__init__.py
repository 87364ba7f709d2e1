from .store import *
from .local_database import *
from .synthetic import *
