"""
Train models on a seeded split and compare them on the held-out crashes.

Usage:
    python manage.py compare --crashes crashes.csv --roads roads.csv --models glm,rc --seed 7
"""

from pathlib import Path

from severity import conf, errors
from severity.datamodel import split
from severity.evaluation import THRESHOLD_MODES, compare_models
from severity.management.base import (
    ModelingMixin,
    NonConvergence,
    SeverityCommand,
    split_list,
)
from severity.mixed import PREDICTION_MODES
from severity.reporting import load_fit, write_fit


class Command(ModelingMixin, SeverityCommand):
    help = "Compare models on held-out crashes (comparison.json, metrics.csv, roc_<model>.csv)"

    def add_command_arguments(self, parser):
        self.add_data_arguments(parser)
        parser.add_argument(
            "--models",
            default="glm,rc",
            help="Comma-separated models to train, from glm, null, ri, rc",
        )
        parser.add_argument(
            "--fits",
            default=None,
            help="Comma-separated fit_<model>.json files to evaluate instead of training",
        )
        self.add_model_arguments(parser)
        parser.add_argument(
            "--train-fraction",
            type=float,
            default=conf.get("TRAIN_FRACTION"),
            help="Share of crashes used for training",
        )
        parser.add_argument(
            "--threshold",
            type=float,
            default=conf.get("THRESHOLD"),
            help="Classification threshold",
        )
        parser.add_argument(
            "--threshold-mode", choices=THRESHOLD_MODES, default="fixed"
        )
        parser.add_argument(
            "--prediction-mode", choices=PREDICTION_MODES, default="conditional"
        )

    def saved_fits(self, text):
        return [
            (Path(path).stem.removeprefix("fit_"), load_fit(path))
            for path in split_list(text)
        ]

    def run(self, options, out_dir):
        dataset = self.load(options)
        train, test = split(dataset, options["train_fraction"], options["seed"])
        if options.get("fits"):
            fits = self.saved_fits(options["fits"])
        else:
            names = self.model_names(options["models"])
            fits = list(self.fit_models(train, names, options).items())
            for name, fit in fits:
                write_fit(out_dir, name, fit)
        if len(fits) < 2:
            raise errors.InvalidConfig("A comparison needs at least two models")

        report = compare_models(
            fits,
            test,
            threshold=options["threshold"],
            mode=options["prediction_mode"],
            threshold_mode=options["threshold_mode"],
        )
        report.write(out_dir)
        for name, evaluation in zip(report.names, report.evaluations):
            self.stdout.write(f"   {name}: AUC {evaluation.auc:.4f}")
        stalled = [name for name, fit in fits if not fit.converged]
        if stalled:
            raise NonConvergence(f"Did not converge: {', '.join(stalled)}")
        return f"Compared {', '.join(report.names)} on {test.n} held-out crashes"
