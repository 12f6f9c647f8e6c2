"""
Decorators shared by the command layer.
"""
from .timing import get_time
