"""Top-k semantic search over knowledge graphs.

A query graph is decomposed into path sub-queries around a pivot node; each
sub-query is answered by an A* search over semantically weighted graph paths,
and the per-sub-query matches are joined at the pivot with a threshold
algorithm. A time-bounded mode returns the best answer found before a deadline.
"""

from .const import DOMAIN
from .engine import QueryMode, QueryRequest, QueryResult, RunReport, run_query

__all__ = ["DOMAIN", "QueryMode", "QueryRequest", "QueryResult", "RunReport", "run_query"]
