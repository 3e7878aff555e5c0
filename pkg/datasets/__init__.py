from .toy import ToyPoints, ToyPointsExtended
from .toy_images import ToyImages
from .utils import load_csv


dataset_list = {
                "toy": ToyPoints,
                "toy_extended": ToyPointsExtended,
                "toy_images": ToyImages,
                }


def build_dataset(dataset, n_features=2, classes=2, samples=500, seed=1):
    """A registered dataset by name, otherwise ``dataset`` is read as a CSV path."""
    if dataset in dataset_list:
        return dataset_list[dataset](n_features=n_features, classes=classes, samples=samples, seed=seed)
    return load_csv(dataset, n_features, classes)
