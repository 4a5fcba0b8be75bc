"""Two-party error reconciliation toolkit for discrete-variable QKD
post-processing."""

from .bitcore import (
    CRC64_VARIANT,
    KeyString,
    block_parities,
    crc64,
    flip,
    hamming_distance,
    parity,
)
from .hamming import HammingParams, decode_flip, matrix_element, syndrome
from .lfsr import (
    LfsrSpec,
    PermutationPlan,
    SeparationReport,
    apply_permutation,
    lfsr_stream,
    one_lfsr_permutation,
    position_sequence,
    separation_score,
    two_lfsr_permutation,
)
from .protocol import (
    LeakLedger,
    ReconOutcome,
    SessionConfig,
    efficiency,
    estimate_error_rate,
    initial_block_length,
    reconcile,
    shannon_h,
)
from .baselines import CascadeConfig, binary_locate, cascade_reconcile
from .harness import inject_errors, run_session_pair

__version__ = "0.1.0"
