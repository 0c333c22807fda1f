import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# Model dimensions. 512 is the full-scale embedding and LSTM memory size;
# desk-scale runs override them per command.
EMBED_DIM = int(os.getenv('NIC_EMBED_DIM', '512'))
HIDDEN_DIM = int(os.getenv('NIC_HIDDEN_DIM', '512'))
INIT_SCALE = float(os.getenv('NIC_INIT_SCALE', '0.08'))

# Training
LEARNING_RATE = float(os.getenv('NIC_LEARNING_RATE', '0.1'))
EPOCHS = int(os.getenv('NIC_EPOCHS', '10'))
DROPOUT_RATE = float(os.getenv('NIC_DROPOUT_RATE', '0.0'))
BATCH_SIZE = int(os.getenv('NIC_BATCH_SIZE', '1'))
GRAD_CLIP = float(os.getenv('NIC_GRAD_CLIP', '0')) or None
MIN_COUNT = int(os.getenv('NIC_MIN_COUNT', '5'))

# Decoding
BEAM_WIDTH = int(os.getenv('NIC_BEAM_WIDTH', '20'))
MAX_CAPTION_LEN = int(os.getenv('NIC_MAX_CAPTION_LEN', '30'))

# Evaluation
MAX_BLEU_N = int(os.getenv('NIC_MAX_BLEU_N', '4'))

SEED = int(os.getenv('NIC_SEED', '0'))

LOG_LEVEL = os.getenv('NIC_LOG_LEVEL', 'INFO')
# Unset keeps logs on stderr only
LOG_DIR = Path(os.environ['NIC_LOG_DIR']) if os.getenv('NIC_LOG_DIR') else None


def validate():
    """Raise ValueError describing every out-of-range setting."""
    problems = []

    for name in ('EMBED_DIM', 'HIDDEN_DIM', 'EPOCHS', 'BATCH_SIZE', 'MIN_COUNT',
                 'BEAM_WIDTH', 'MAX_CAPTION_LEN', 'MAX_BLEU_N'):
        if globals()[name] < 1:
            problems.append(f"NIC_{name} must be positive (got {globals()[name]})")

    if INIT_SCALE < 0:
        problems.append(f"NIC_INIT_SCALE must be non-negative (got {INIT_SCALE})")
    if LEARNING_RATE < 0:
        problems.append(f"NIC_LEARNING_RATE must be non-negative (got {LEARNING_RATE})")
    if not 0.0 <= DROPOUT_RATE < 1.0:
        problems.append(f"NIC_DROPOUT_RATE must lie in [0, 1) (got {DROPOUT_RATE})")
    if GRAD_CLIP is not None and GRAD_CLIP < 0:
        problems.append(f"NIC_GRAD_CLIP must be positive when set (got {GRAD_CLIP})")
    if not 0 <= SEED < 2**64:
        problems.append(f"NIC_SEED must be a 64-bit unsigned integer (got {SEED})")
    if LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR'):
        problems.append(f"NIC_LOG_LEVEL is not a logging level (got {LOG_LEVEL})")

    if problems:
        raise ValueError("; ".join(problems))
