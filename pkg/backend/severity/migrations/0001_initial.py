# Generated by Django 5.2.7 on 2026-10-19 09:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="RunRecord",
            fields=[
                (
                    "id",
                    models.BigAutoField(
                        auto_created=True,
                        primary_key=True,
                        serialize=False,
                        verbose_name="ID",
                    ),
                ),
                ("command", models.CharField(db_index=True, max_length=32)),
                ("options", models.JSONField(default=dict)),
                ("out_dir", models.CharField(max_length=1024)),
                ("exit_code", models.PositiveSmallIntegerField(default=0)),
                ("message", models.TextField(blank=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "verbose_name": "Run",
                "verbose_name_plural": "Runs",
                "db_table": "severity_run",
                "ordering": ["-created_at", "-id"],
                "indexes": [
                    models.Index(
                        fields=["command", "created_at"],
                        name="severity_run_command_idx",
                    )
                ],
            },
        ),
    ]
