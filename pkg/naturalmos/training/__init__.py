from naturalmos.training.trainer import (SegmentCache, TrainConfig, Trainer, TrainRunRecord, compare_transfer,
                                        finetune, pretrain, select_best_run, write_training_log)
