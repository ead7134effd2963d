from django.db import models


class RunRecord(models.Model):
    """One invocation of a roadrisk management command"""

    command = models.CharField(max_length=32, db_index=True)
    options = models.JSONField(default=dict)
    out_dir = models.CharField(max_length=1024)
    exit_code = models.PositiveSmallIntegerField(default=0)
    message = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        db_table = "severity_run"
        verbose_name = "Run"
        verbose_name_plural = "Runs"
        ordering = ["-created_at", "-id"]
        indexes = [
            models.Index(
                fields=["command", "created_at"], name="severity_run_command_idx"
            ),
        ]

    def __str__(self):
        return f"{self.command} -> {self.out_dir} (exit {self.exit_code})"

    @property
    def succeeded(self):
        return self.exit_code == 0
