from django.db import models
import hashlib
import json


class SimulationRun(models.Model):
    """Registry entry for one written simulation run"""

    config_hash = models.CharField(max_length=64, db_index=True)
    mode = models.CharField(max_length=16)
    scheduler = models.CharField(max_length=8)
    seed = models.DecimalField(max_digits=20, decimal_places=0)
    num_nodes = models.IntegerField()
    num_samples = models.IntegerField()
    num_steps = models.IntegerField()
    config = models.JSONField()
    summary = models.JSONField()
    csv_path = models.CharField(max_length=500)
    summary_path = models.CharField(max_length=500)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at', '-id']
        indexes = [
            models.Index(fields=['mode'], name='backpressur_mode_6f1d2a_idx'),
            models.Index(fields=['scheduler'], name='backpressur_schedul_3c8e4b_idx'),
        ]

    def __str__(self):
        return f"{self.mode}/{self.scheduler} N={self.num_nodes} seed={self.seed} ({self.config_hash[:8]})"

    @staticmethod
    def compute_config_hash(config):
        """SHA-256 of the canonical (sorted-key) config JSON"""
        canonical = json.dumps(config, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    @classmethod
    def record(cls, bundle):
        """Create a registry row from an OutputBundle"""
        config = bundle.config
        summary = {key: value for key, value in bundle.summary.items() if key != 'config'}
        return cls.objects.create(
            config_hash=cls.compute_config_hash(config),
            mode=config['mode'],
            scheduler=config['scheduler'],
            seed=config['seed'],
            num_nodes=config['N'],
            num_samples=config['M'],
            num_steps=config['K'],
            config=config,
            summary=summary,
            csv_path=str(bundle.csv_path),
            summary_path=str(bundle.summary_path),
        )

    def to_dict(self):
        return {
            'id': self.pk,
            'config_hash': self.config_hash,
            'mode': self.mode,
            'scheduler': self.scheduler,
            'seed': int(self.seed),
            'N': self.num_nodes,
            'M': self.num_samples,
            'K': self.num_steps,
            'summary': self.summary,
            'csv_path': self.csv_path,
            'summary_path': self.summary_path,
            'created_at': self.created_at.isoformat(),
        }
