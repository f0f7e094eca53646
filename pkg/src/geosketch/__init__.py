"""geosketch: streaming geometric estimation over the hypercube.

Quadtree-based approximation of Earth Mover's Distance and minimum spanning
tree cost in the turnstile model, with the underlying linear-sketch toolbox,
exact offline oracles, instance generators and a stream CLI.
"""

from .points import HypercubePoint, PointMultiset, hamming_distance
from .quadtree import NodeId, QuadtreeSpec, lca_depth, node_at_depth, sample_quadtree
from .offline import (
    Matching,
    SpanningTree,
    depth_greedy_matching,
    depth_greedy_spanning_tree,
    exact_emd,
    exact_mst,
    inspector_payment,
    matching_cost,
    spanning_tree_cost,
    total_inspector_payment,
    value_emd,
    value_mst,
)
from .sketches import (
    FAIL,
    CauchyL1Sketch,
    CountSketch,
    ExpScaler,
    L0Sketch,
    L1Sampler,
    SmallPStableSketch,
    sample_p_stable,
    stable_median,
    tail_truncated_norms,
)
from .embedding import EmbeddingFamily, embed_point, sample_embedding
from .emd_sketch import (
    CharacterSet,
    EmdOnePassSketch,
    EmdSketchConfig,
    EmdTwoPassSketch,
    TwoRoundPEstimator,
    UniverseMap,
    char_eval,
    reference_I_i,
    split_probability,
)
from .mst_sketch import (
    MstRepView,
    MstSketch,
    MstSketchConfig,
    reference_level_quantities,
)
from .streamio import (
    TurnstileUpdate,
    aggregate,
    parse_stream,
    parse_stream_binary,
    write_stream,
    write_stream_binary,
)
from .generators import GeneratedInstance, gen_instance, rm1_codewords
from .cli import EstimateReport, run_estimator

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
