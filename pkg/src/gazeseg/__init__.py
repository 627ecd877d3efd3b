"""Gaze-guided micro-lesion segmentation.

Top-down attention from clinician gaze traces localizes regions of
interest; frequency-tuned plus minimum-barrier-distance saliency proposes
prompt points; a pluggable promptable segmenter produces candidate masks;
and a shape/color/texture domain filter keeps the micro-lesions.
"""

from .core import (
    ConfigError,
    EmptyMapError,
    EmptyTraceError,
    Frame,
    GazeSegError,
    GrayMap,
    InvalidParameterError,
    PipelineConfig,
    PixelPoint,
    sigma_from_geometry,
)
from .gaze import (
    AttentionDispersion,
    GazeMap,
    GazeMapAccumulator,
    GazeSample,
    GazeTrace,
    attention_dispersion_score,
    binarize_gaze,
    build_gaze_map,
    read_trace,
    write_trace,
)
from .roi import Roi, enhance, extract_rois
from .saliency import SaliencyMap, binarize_saliency, ft_saliency, fuse, mbd_saliency
from .prompts import PromptSet, grid_prompts, make_grid, salient_prompts
from .segmenter import (
    BaselineBackend,
    CandidateMask,
    SegmenterBackend,
    baseline_region_grow,
    segment,
)
from .dkf import DkfReport, apply_dkf, color_pass, roundness, smoothness
from .evaluate import EvalReport, dice, lesion_match, pr_curve, simulate_gaze
from .synth import SynthSpec, generate
from .pipeline import PipelineResult, run_pipeline
from .rle import decode_mask, encode_mask

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
