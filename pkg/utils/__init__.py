"""
Utilities package.
"""

from utils.export import write_json, write_rows, write_table

__all__ = ["write_json", "write_rows", "write_table"]
