from naturalmos.model.network import NisqaTtsModel, clamp_mos, predict_file
from naturalmos.model.checkpoint import (ModelCheckpoint, inspect_checkpoint, load_checkpoint, read_checkpoint,
                                         save_checkpoint, write_checkpoint)
