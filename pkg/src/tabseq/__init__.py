"""Joint entity and relation extraction with a table encoder and a sequence encoder.

The package is self-contained on top of NumPy: ``autograd`` supplies the
tensor tape, the encoders and codec build on it, and ``cli`` wires the
pieces into train / eval / predict commands.
"""

from .autograd import Tensor, no_grad
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import CodecConfig, TagSet, decode_entities, decode_relations, encode
from .data import Corpus, load_corpus, make_splits
from .errors import TabSeqError
from .metrics import score_ner, score_re, score_report
from .model import ModelConfig, TableSequenceModel
from .schema import EntitySpan, Relation, Sentence
from .training import OptimConfig, evaluate, predict, probe, train

__version__ = "0.1.0"
