"""Topological state estimation for cables in synthetic grayscale images."""

from .crossing import (CrossingObservation, OracleClassifier, PhotometricClassifier,
                       classify_all, classify_encounter, correct_crossings, detect_crossings)
from .imitation import Demonstration, record, replay
from .predictors import AnalyticPredictor, OraclePredictor, analytic_predict, oracle_predict
from .render import augment, load_image, render, save_image
from .scene import (CablePath, Scene, generate_random_scene, ground_truth_crossings,
                    sample_cable)
from .templates import TEMPLATES, knot_template
from .topology import (TopologyState, build_sequence, cancel_crossings, detect_knots,
                       select_cage_pinch)
from .tracer import (Trace, TraceConfig, detect_retrace, init_trace, normalize_crop,
                     trace_cable)

__version__ = "0.1.0"
