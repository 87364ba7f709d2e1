from .proposals import *
from .knowledge_base import *
from .operator_base import *
from .baseline import *
from .prompts import *
from .text_service import *
from .llm_operator import *
