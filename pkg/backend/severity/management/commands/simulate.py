"""
Simulate coefficient variability around a saved multilevel fit.

Usage:
    python manage.py simulate --fit out/fit_rc.json --runs 200 --seed 1
"""

from severity import conf
from severity.management.base import SeverityCommand
from severity.reporting import load_fit
from severity.simgen import simulate_coefficients


class Command(SeverityCommand):
    help = "Write roads_intercepts.csv and fixed_intervals.csv from coefficient draws"
    required_options = ("fit",)

    def add_command_arguments(self, parser):
        parser.add_argument("--fit", help="A fit_<model>.json document")
        parser.add_argument(
            "--runs",
            type=int,
            default=conf.get("SIMULATION_RUNS"),
            help="Number of draws",
        )

    def run(self, options, out_dir):
        fit = load_fit(options["fit"])
        summary = simulate_coefficients(fit, options["runs"], options["seed"])
        summary.write(out_dir)
        return f"Simulated {summary.runs} draws over {len(summary.road_ids)} roads"
