"""Neural generation backend for the todkit harness.

The package trains a small byte-level causal transformer on training
records exported by ``todkit trainprep`` / ``todkit simulate`` and serves
it over the newline-delimited JSON wire protocol, where ``todkit evaluate
--backend remote`` (or the interactive chat client) can reach it.  It
depends on the record file format and the wire protocol only; it never
imports the harness.
"""

from .errors import CheckpointError, NeuralError, RecordError
from .model import ByteLM, ModelConfig, load_checkpoint, save_checkpoint
from .records import PAD_ID, VOCAB_SIZE, TrainRecord, load_records, make_batch
from .training import TrainSettings, held_out_perplexity, sequence_loss, train

__version__ = "0.1.0"

__all__ = [
    "ByteLM",
    "CheckpointError",
    "ModelConfig",
    "NeuralError",
    "PAD_ID",
    "RecordError",
    "TrainRecord",
    "TrainSettings",
    "VOCAB_SIZE",
    "__version__",
    "held_out_perplexity",
    "load_checkpoint",
    "load_records",
    "make_batch",
    "save_checkpoint",
    "sequence_loss",
    "train",
]
