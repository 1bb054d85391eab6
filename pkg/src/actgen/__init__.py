"""Act-conditioned dialog response generation with switch-gated attention heads."""

from .act_graph import (
    ActInventory,
    ActTriplet,
    Ontology,
    SwitchVector,
    aggregate,
    canonical_ontology,
    decode_switch,
    encode_act,
    flatten_tree_encoding,
)
from .act_predictor import (
    ActDistribution,
    ActPredictor,
    SideConditions,
    bce_loss,
    multi_label_f1,
    threshold_decode,
)
from .corpus import (
    Corpus,
    DialogTurn,
    SyntheticSpec,
    delexicalize,
    generate_synthetic,
    load_corpus,
    restore,
    save_corpus,
)
from .decoder import GenerationConfig, Hypothesis, ResponseGenerator, generate_response
from .dsa import DsaLayerConfig, Hdsa, HdsaConfig, LayerSwitch
from .encoder import EncodedHistory, EncoderConfig, HistoryEncoder
from .metrics import EvalReport, bleu, bucket_bleu, entity_f1, evaluate, inform_request
from .numerics import (
    GradCheckReport,
    NumericsError,
    Parameter,
    ShapeError,
    Tensor,
    adam_step,
    backward,
    check_gradients,
    no_grad,
)
from .vocab import Vocabulary, tokenize

__version__ = "0.1.0"
