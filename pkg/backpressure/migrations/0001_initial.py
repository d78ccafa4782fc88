# Generated by Django 5.2.7 on 2026-10-19 10:12

from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SimulationRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('config_hash', models.CharField(db_index=True, max_length=64)),
                ('mode', models.CharField(max_length=16)),
                ('scheduler', models.CharField(max_length=8)),
                ('seed', models.DecimalField(decimal_places=0, max_digits=20)),
                ('num_nodes', models.IntegerField()),
                ('num_samples', models.IntegerField()),
                ('num_steps', models.IntegerField()),
                ('config', models.JSONField()),
                ('summary', models.JSONField()),
                ('csv_path', models.CharField(max_length=500)),
                ('summary_path', models.CharField(max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
                'indexes': [models.Index(fields=['mode'], name='backpressur_mode_6f1d2a_idx'), models.Index(fields=['scheduler'], name='backpressur_schedul_3c8e4b_idx')],
            },
        ),
    ]
