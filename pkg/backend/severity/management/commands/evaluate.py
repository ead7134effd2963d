"""
Evaluate a saved fit on a crash/road dataset.

Usage:
    python manage.py evaluate --fit out/fit_rc.json --crashes test.csv --roads roads.csv
"""

from pathlib import Path

import numpy as np

from severity import artifacts, conf
from severity.datamodel import load_dataset
from severity.evaluation import THRESHOLD_MODES, evaluate, predict
from severity.management.base import SeverityCommand
from severity.mixed import PREDICTION_MODES
from severity.reporting import load_fit


class Command(SeverityCommand):
    help = "Write evaluation.json and roc_<model>.csv for one fit"
    required_options = ("fit", "crashes", "roads")

    def add_command_arguments(self, parser):
        parser.add_argument("--fit", help="A fit_<model>.json document")
        parser.add_argument("--crashes", help="Crash CSV")
        parser.add_argument("--roads", help="Road CSV")
        parser.add_argument(
            "--threshold", type=float, default=conf.get("THRESHOLD")
        )
        parser.add_argument(
            "--threshold-mode", choices=THRESHOLD_MODES, default="fixed"
        )
        parser.add_argument(
            "--prediction-mode", choices=PREDICTION_MODES, default="conditional"
        )

    def run(self, options, out_dir):
        fit = load_fit(options["fit"])
        name = Path(options["fit"]).stem.removeprefix("fit_")
        dataset = load_dataset(options["crashes"], options["roads"])
        labels = np.array([r.severity for r in dataset.records])
        scores = predict(fit, dataset, options["prediction_mode"])
        report = evaluate(
            labels, scores, options["threshold"], options["threshold_mode"]
        )
        artifacts.write_json(
            out_dir / "evaluation.json", {"model": name, **report.to_dict()}
        )
        artifacts.write_frame(out_dir / f"roc_{name}.csv", report.roc.frame(), "%.6g")
        return f"{name}: accuracy {report.accuracy:.4f}, AUC {report.auc:.4f}"
