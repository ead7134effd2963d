"""
Intra-class correlation from a between-road variance or a saved mixed fit.

Usage:
    python manage.py icc --variance 0.8375
    python manage.py icc --fit out/fit_null.json
"""

from severity import artifacts, errors
from severity.management.base import SeverityCommand
from severity.mixed import LEVEL1_VARIANCE, MixedFit, icc
from severity.reporting import load_fit


class Command(SeverityCommand):
    help = "Compute the ICC and write icc.json"

    def add_command_arguments(self, parser):
        source = parser.add_mutually_exclusive_group()
        source.add_argument("--variance", type=float, help="Between-road variance")
        source.add_argument("--fit", help="A mixed fit_<model>.json document")

    def run(self, options, out_dir):
        if options.get("fit"):
            fit = load_fit(options["fit"])
            if not isinstance(fit, MixedFit):
                raise errors.InvalidModelSpec("The ICC needs a multilevel fit")
            variance = float(fit.cov.variances[0])
        elif options.get("variance") is not None:
            variance = options["variance"]
        else:
            raise errors.InvalidConfig("Give either --variance or --fit")
        value = icc(variance)
        artifacts.write_json(
            out_dir / "icc.json",
            {
                "variance": artifacts.sig6(variance),
                "level1_variance": artifacts.sig6(LEVEL1_VARIANCE),
                "icc": artifacts.sig6(value),
            },
        )
        return f"ICC {value:.4f} (between-road variance {variance:.4f})"
