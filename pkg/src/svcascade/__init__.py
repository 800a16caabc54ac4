"""Speaker-verification cascade toolkit: synthetic multilingual corpus,
TD/TI d-vector models with GE2E training, cosine scoring, score fusion,
and triage analytics (EER, trigger rate, latency, flops)."""

__version__ = "0.1.0"
