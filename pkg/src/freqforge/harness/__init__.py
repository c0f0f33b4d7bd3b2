from . import augment, cam, data, experiments, metrics, train

__all__ = ["augment", "cam", "data", "experiments", "metrics", "train"]
