"""
Fit single-level and multilevel crash-severity models.

Usage:
    python manage.py fit --crashes crashes.csv --roads roads.csv --model null
    python manage.py fit --crashes crashes.csv --roads roads.csv --model glm,ri,rc \
        --random-slopes education,age,light,pavement
"""

from severity.management.base import ModelingMixin, NonConvergence, SeverityCommand
from severity.reporting import write_fit


class Command(ModelingMixin, SeverityCommand):
    help = "Fit the requested models and write fit_<model>.json for each"

    def add_command_arguments(self, parser):
        self.add_data_arguments(parser)
        parser.add_argument(
            "--model",
            default="glm,null,ri,rc",
            help="Comma-separated models from glm, null, ri, rc",
        )
        self.add_model_arguments(parser)

    def run(self, options, out_dir):
        names = self.model_names(options["model"])
        dataset = self.load(options)
        fits = self.fit_models(dataset, names, options)
        for name, fit in fits.items():
            write_fit(out_dir, name, fit)
            self.stdout.write(f"   {name}: deviance {fit.deviance:.4f}")
        stalled = [name for name, fit in fits.items() if not fit.converged]
        if stalled:
            raise NonConvergence(f"Did not converge: {', '.join(stalled)}")
        return f"Fitted {', '.join(fits)} on {dataset.n} crashes"
