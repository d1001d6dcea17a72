"""convsql: evaluation harness and agent runtime for conversational text-to-SQL.

Scores multi-turn, multi-type dialogue predictions (EM, EX, IEX, TDEX, RQS,
per-type P/R/F1) and runs a four-agent answering pipeline over pluggable
LLM backends, with deterministic record/replay for offline testing.
"""

__version__ = "0.1.0"
