"""
List recent roadrisk runs from the run registry.

Usage:
    python manage.py runs
    python manage.py runs --command fit --limit 5
"""

from django.core.management.base import BaseCommand

from severity.models import RunRecord


class Command(BaseCommand):
    help = "List recent runs"

    def add_arguments(self, parser):
        parser.add_argument("--command", dest="command_name", help="Only this command")
        parser.add_argument("--limit", type=int, default=20, help="Number of runs")

    def handle(self, *args, **options):
        runs = RunRecord.objects.all()
        if options.get("command_name"):
            runs = runs.filter(command=options["command_name"])
        runs = list(runs[: options["limit"]])
        if not runs:
            self.stdout.write("No runs recorded")
            return
        for run in runs:
            style = self.style.SUCCESS if run.succeeded else self.style.ERROR
            self.stdout.write(
                style(
                    f"{run.created_at:%Y-%m-%d %H:%M:%S}  {run.command:<9} "
                    f"exit {run.exit_code}  {run.out_dir}"
                )
            )
            if run.message:
                self.stdout.write(f"   {run.message}")
