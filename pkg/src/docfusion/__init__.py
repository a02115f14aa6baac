"""Document-level language models for machine translation with a toy
n-gram / IBM-1 stack: shallow fusion with internal-LM neutralization,
scale tuning, back-translation and evaluation."""

from .core import Vocabulary, Document, ParallelDocument, build_vocab
from .ngram_lm import NGramLM, train_ngram, load_arpa, save_arpa
from .translation_model import TranslationModel, train_tm, train_ibm1
from .fusion import FusionScales, ScaleGrid, fuse_step, restricted_grid, full_grid
from .decoder import DecodeConfig, FusionModels, beam_decode, decode_document

__version__ = "0.1.0"
