import torch
from torch.utils.data import DataLoader, Dataset

from faces.domain.exceptions import ValidationError
from faces.domain.head_model import HeadParams, unit_to_ndc
from faces.integrations.images import read_image


class FaceDataset(Dataset):
    """Images with NDC landmarks (and ground-truth parameters when known)."""

    def __init__(self, records, resolution):
        self.records = list(records)
        if not self.records:
            raise ValidationError("dataset is empty")
        self.resolution = resolution

    def __len__(self):
        return len(self.records)

    def __getitem__(self, index):
        record = self.records[index]
        item = {
            "index": record.index,
            "image": read_image(record.image, resolution=self.resolution),
            "landmarks": unit_to_ndc(record.points),
        }
        if record.params is not None:
            item["params"] = {
                name: getattr(record.params, name)[0] for name in HeadParams.FIELDS
            }
        return item


def params_from_batch(batch):
    return HeadParams(**{name: batch["params"][name] for name in HeadParams.FIELDS})


def make_loader(dataset, *, batch_size, seed, shuffle=True, num_workers=0):
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=num_workers,
        drop_last=False,
    )


def cycle_batches(loader):
    while True:
        yield from loader
