"""alignprep: streaming CTC forced alignment and speech-corpus preparation."""

from .bench import BenchCase, BenchReport, run_scaling_bench
from .corpus import (
    CANONICAL_BOOKS,
    ManifestRecord,
    SamplingSpec,
    fallback_split,
    read_manifest,
    sampling_weights,
    split_by_book,
    split_random,
    two_stage_weights,
    write_manifest,
)
from .emissions import (
    EmissionFormatError,
    EmissionMatrix,
    TokenTable,
    concat_chunks,
    load_emissions,
    load_token_table,
    save_emissions,
    save_token_table,
    synth_emissions,
)
from .labels import STAR, LabelSequence, LabelToken
from .pipeline import PipelineConfig, StageError, run_pipeline
from .quality import (
    AlignmentScore,
    DegenerateAlignmentError,
    FilterReport,
    alignment_score,
    cer,
    edit_distance,
    filter_by_score,
    filter_recordings,
    filter_samples,
)
from .segment import LabeledSegment, join_segments, partition_sample
from .textnorm import (
    StarredText,
    bracket_rate,
    destarify,
    destarify_text,
    load_romanization_table,
    normalize,
    romanize,
    starify,
    strip_brackets,
)
from .trellis import (
    FramePath,
    SpanSet,
    StateChain,
    TrellisCounter,
    UnalignableError,
    build_state_chain,
    collapse,
    extract_spans,
    viterbi_full,
    viterbi_streaming,
)

__version__ = "0.1.0"
