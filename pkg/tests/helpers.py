import dataclasses

from blossomsim.config import ScenarioConfig


def small_config(count=4, stride=12, **run):
    """A quick scenario: few clusters and a coarse pixel sampling grid."""
    cfg = ScenarioConfig()
    return cfg.replace(
        scene=dataclasses.replace(cfg.scene, cluster_count=count),
        perception=dataclasses.replace(cfg.perception, sample_stride=stride),
        run=dataclasses.replace(cfg.run, **run),
    )
