from .distributions import (
    ShareSchedule,
    UniformSchedule,
    ZipfSchedule,
    TwoPhaseSchedule,
    DISTRIBUTIONS,
    zipf_shares,
)
from .generator import TraceGenSpec, generate, load_gen_spec, sample_routing
from .io import write_trace, read_trace, TRACE_HEADER
