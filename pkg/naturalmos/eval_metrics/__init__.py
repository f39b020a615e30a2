from naturalmos.eval_metrics.metrics import aggregate_per_system, pearson_r, rmse
from naturalmos.eval_metrics.report import (DatasetResult, EvaluationReport, evaluate_datasets, evaluate_predictions,
                                            format_report_table, read_report_csv, summarize_group,
                                            write_report_csv)
from naturalmos.eval_metrics.plots import plot_per_system
