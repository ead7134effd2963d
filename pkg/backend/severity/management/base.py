"""
Shared plumbing for the roadrisk management commands.

Every command accepts ``--seed``, ``--out-dir`` and ``--from-config``, writes
a ``run.json`` holding its resolved options, and leaves a RunRecord behind.
Errors from the severity app become CommandErrors carrying the exit code:
1 for usage, 2 for data and estimation problems, 3 when a fit did not
converge (its artifacts are still written).
"""

import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from severity import artifacts, conf, errors
from severity.conf import MixedSettings
from severity.datamodel import ModelSpec, encode_design, load_dataset, parse_terms
from severity.glm import fit_glm
from severity.mixed import STRUCTURES, fit_mixed
from severity.models import RunRecord

logger = logging.getLogger(__name__)

EXIT_NOT_CONVERGED = 3

MODELS = ("glm", "null", "ri", "rc")

# Options that describe how a command was invoked rather than what it computes
INVOCATION_OPTIONS = frozenset(
    {
        "verbosity",
        "settings",
        "pythonpath",
        "traceback",
        "no_color",
        "force_color",
        "skip_checks",
        "stdout",
        "stderr",
        "out_dir",
        "from_config",
    }
)


def split_list(text):
    return [item.strip() for item in str(text or "").split(",") if item.strip()]


class NonConvergence(Exception):
    """Raised by ``run`` after writing artifacts of a fit that did not converge"""


class SeverityCommand(BaseCommand):
    """
    Subclasses define ``add_command_arguments(parser)`` and
    ``run(options, out_dir)``; ``run`` returns a summary line, or raises
    ``NonConvergence`` once its artifacts are on disk.
    """

    # validated once --from-config has been applied
    required_options = ()

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        parser_exit = parser.exit

        def exit(status=0, message=None):
            # argparse reports usage errors with status 2
            parser_exit(1 if status == 2 else status, message)

        parser.exit = exit
        return parser

    def add_arguments(self, parser):
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Random seed (defaults to the ROADRISK SEED setting)",
        )
        parser.add_argument(
            "--out-dir",
            default=None,
            help="Directory for the artifacts (defaults to ROADRISK OUT_DIR)",
        )
        parser.add_argument(
            "--from-config",
            default=None,
            help="Replay the options recorded in a run.json",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    @property
    def command_name(self):
        return self.__module__.rsplit(".", 1)[-1]

    def resolve_options(self, options):
        if options.get("from_config"):
            document = artifacts.read_json(options["from_config"])
            if document.get("command") != self.command_name:
                raise errors.InvalidConfig(
                    f"{options['from_config']} records a '{document.get('command')}' "
                    f"run, not '{self.command_name}'"
                )
            return dict(document["options"])
        resolved = {k: v for k, v in options.items() if k not in INVOCATION_OPTIONS}
        if resolved.get("seed") is None:
            resolved["seed"] = int(conf.get("SEED"))
        missing = [o for o in self.required_options if resolved.get(o) is None]
        if missing:
            flags = ", ".join("--" + o.replace("_", "-") for o in missing)
            raise errors.InvalidConfig(f"Missing required option(s): {flags}")
        return resolved

    def record(self, options, out_dir, exit_code, message):
        if not conf.get("RECORD_RUNS"):
            return
        try:
            RunRecord.objects.create(
                command=self.command_name,
                options=artifacts.to_jsonable(options),
                out_dir=str(out_dir),
                exit_code=exit_code,
                message=message,
            )
        except DatabaseError as exc:
            logger.warning("Run registry unavailable, run not recorded: %s", exc)

    def handle(self, *args, **options):
        out_dir = Path(options.get("out_dir") or conf.get("OUT_DIR"))
        resolved = {}
        try:
            if options.get("from_config") and not Path(options["from_config"]).is_file():
                raise errors.DataFileNotFound(options["from_config"])
            resolved = self.resolve_options(options)
            artifacts.write_json(
                out_dir / "run.json", {"command": self.command_name, "options": resolved}
            )
            message = self.run(resolved, out_dir)
        except NonConvergence as exc:
            self.record(resolved, out_dir, EXIT_NOT_CONVERGED, str(exc))
            raise CommandError(str(exc), returncode=EXIT_NOT_CONVERGED) from exc
        except errors.SeverityError as exc:
            logger.error("%s failed: %s", self.command_name, exc)
            self.record(resolved, out_dir, exc.exit_code, str(exc))
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        self.record(resolved, out_dir, 0, message)
        self.stdout.write(self.style.SUCCESS(message))

    def run(self, options, out_dir):
        raise NotImplementedError


class ModelingMixin:
    """Data, model and estimator flags shared by fit and compare"""

    required_options = ("crashes", "roads")

    def add_data_arguments(self, parser):
        parser.add_argument("--crashes", help="Crash CSV")
        parser.add_argument("--roads", help="Road CSV")

    def add_model_arguments(self, parser):
        parser.add_argument(
            "--terms",
            default=",".join(conf.get("DEFAULT_TERMS")),
            help="Comma-separated fixed-effect terms",
        )
        parser.add_argument(
            "--random-slopes",
            default=",".join(conf.get("DEFAULT_SLOPES")),
            help="Comma-separated random-slope terms for the rc model",
        )
        parser.add_argument(
            "--covariance",
            choices=STRUCTURES,
            default=None,
            help="Random-effect covariance structure",
        )
        parser.add_argument(
            "--tolerance", type=float, default=None, help="Outer optimizer tolerance"
        )
        parser.add_argument(
            "--max-iter", type=int, default=None, help="Outer optimizer iteration cap"
        )

    def load(self, options):
        return load_dataset(options["crashes"], options["roads"])

    def model_names(self, text):
        names = split_list(text)
        unknown = [n for n in names if n not in MODELS]
        if unknown or not names:
            raise errors.InvalidModelSpec(
                f"Models must be chosen from {', '.join(MODELS)}, got '{text}'"
            )
        if len(set(names)) != len(names):
            raise errors.InvalidModelSpec(f"Duplicate models in '{text}'")
        return [n for n in MODELS if n in names]

    def mixed_settings(self, options):
        return MixedSettings.from_settings(
            covariance=options.get("covariance"),
            outer_tolerance=options.get("tolerance"),
            outer_max_iter=options.get("max_iter"),
        )

    def fit_models(self, dataset, names, options):
        """
        Fit the named models in the order glm, null, ri, rc. The random
        intercept model starts from the GLM and the random-coefficient model
        from the random-intercept one whenever those were fitted too.
        """
        terms = parse_terms(options["terms"])
        slopes = parse_terms(options["random_slopes"])
        settings = self.mixed_settings(options)
        fits = {}
        for name in names:
            spec = ModelSpec.preset(name, terms, slopes)
            design = encode_design(dataset, spec)
            if name == "glm":
                fits[name] = fit_glm(design)
                continue
            start = {"ri": fits.get("glm"), "rc": fits.get("ri")}.get(name)
            fits[name] = fit_mixed(design, spec, settings, start=start)
        return fits
