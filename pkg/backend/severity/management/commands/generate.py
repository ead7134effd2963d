"""
Generate a synthetic crash/road dataset with known parameters.

Usage:
    python manage.py generate --preset paper-like --seed 1 --out-dir data/
    python manage.py generate --preset high-icc --groups 20 --per-group 30
"""

from dataclasses import replace

from severity import artifacts, simgen
from severity.datamodel import write_dataset
from severity.management.base import SeverityCommand


class Command(SeverityCommand):
    help = "Generate synthetic crashes.csv and roads.csv from a generator preset"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--preset",
            choices=sorted(simgen.PRESETS),
            default="paper-like",
            help="Parameter preset",
        )
        parser.add_argument("--groups", type=int, default=None, help="Number of roads")
        parser.add_argument(
            "--per-group", type=int, default=None, help="Crashes on every road"
        )

    def run(self, options, out_dir):
        config = simgen.preset(options["preset"], seed=options["seed"])
        if options.get("groups") is not None or options.get("per_group") is not None:
            groups = options.get("groups") or config.n_groups
            per_group = options.get("per_group")
            if per_group is None:
                # keep the preset's typical road size
                per_group = max(config.n_per_group)
            config = replace(config, n_groups=groups, n_per_group=per_group)
        dataset = simgen.generate(config)
        write_dataset(dataset, out_dir / "crashes.csv", out_dir / "roads.csv")
        artifacts.write_json(out_dir / "truth.json", config.to_dict())
        return f"Generated {dataset.n} crashes on {dataset.J} roads in {out_dir}"
