"""Turn a directory tree of labeled images into embedding files.

Layout is one subdirectory per class. Features come from the last pooling
layer of a 16-layer convolutional network (VGG16), flattened to a row per
image, and are written in the coreselect embedding format so the rest of
the pipeline can consume them directly.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from coreselect.data_model import EmbeddingMatrix, save_embeddings, save_manifest
from coreselect.errors import ConfigError, DataError

log = logging.getLogger("extract")

INPUT_SIZE = 224
# standard ImageNet channel statistics used by the pretrained weights
NORM_MEAN = (0.485, 0.456, 0.406)
NORM_STD = (0.229, 0.224, 0.225)


@dataclass
class ExtractionJob:
    input_dir: Path
    output_path: Path
    format: str = "binary"
    strict: bool = False
    batch_size: int = 16
    weights: Path | None = None

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output_path = Path(self.output_path)
        if self.format not in ("binary", "csv"):
            raise ConfigError(f"unknown output format {self.format!r}")
        if self.batch_size < 1:
            raise ConfigError("batch size must be positive")


def list_images(input_dir: Path) -> tuple[list[str], list[tuple[int, int, Path]]]:
    """Class names and (id, class_index, path) rows in directory-sorted order.

    Ids are assigned before any decoding happens, so a skipped file leaves
    a gap instead of renumbering everything after it.
    """
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise ConfigError(f"input directory not found: {input_dir}")
    class_dirs = sorted(p for p in input_dir.iterdir() if p.is_dir())
    if not class_dirs:
        raise DataError(f"{input_dir}: no class subdirectories")
    class_names = [p.name for p in class_dirs]
    rows = []
    next_id = 0
    for class_index, class_dir in enumerate(class_dirs):
        files = sorted(p for p in class_dir.iterdir() if p.is_file())
        if not files:
            raise DataError(f"class directory {class_dir} is empty")
        for path in files:
            rows.append((next_id, class_index, path))
            next_id += 1
    return class_names, rows


def build_model(weights: Path | None) -> torch.nn.Module:
    """The convolutional trunk of VGG16, weights from a local state dict
    or the torchvision pretrained download."""
    from torchvision.models import vgg16

    if weights is not None:
        model = vgg16(weights=None)
        try:
            state = torch.load(Path(weights), map_location="cpu")
        except Exception as e:
            # torch.load raises a grab bag of unpickling errors on bad files
            raise ConfigError(f"cannot load weights from {weights}: {e}") from None
        # accept either a full-model or a features-only state dict
        if any(key.startswith("features.") for key in state):
            state = {k[len("features."):]: v for k, v in state.items()
                     if k.startswith("features.")}
        try:
            model.features.load_state_dict(state)
        except RuntimeError as e:
            raise ConfigError(f"{weights}: incompatible state dict: {e}") from None
    else:
        try:
            from torchvision.models import VGG16_Weights
            model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
        except Exception as e:
            raise ConfigError(
                "pretrained weights unavailable; pass --weights with a local "
                f"state dict ({e})") from None
    trunk = model.features
    trunk.eval()
    return trunk


def load_image(path: Path) -> torch.Tensor:
    """Decode, resize bilinearly to the network input size (no crop),
    and normalize. Returns a 3x224x224 float tensor."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((INPUT_SIZE, INPUT_SIZE), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - np.array(NORM_MEAN, dtype=np.float32)) / np.array(NORM_STD, dtype=np.float32)
    return torch.from_numpy(arr.transpose(2, 0, 1))


def extract(job: ExtractionJob) -> Path:
    """Run the job and return the path of the manifest written next to the
    embedding file."""
    class_names, rows = list_images(job.input_dir)
    trunk = build_model(job.weights)

    kept_ids, kept_labels, tensors = [], [], []
    for sample_id, class_index, path in rows:
        try:
            tensors.append(load_image(path))
        except (UnidentifiedImageError, OSError) as e:
            if job.strict:
                raise DataError(f"cannot decode {path}: {e}") from None
            log.warning("skipping undecodable image %s: %s", path, e)
            continue
        kept_ids.append(sample_id)
        kept_labels.append(class_index)
    if not kept_ids:
        raise DataError("no decodable images found")

    feats = []
    with torch.no_grad():
        for start in range(0, len(tensors), job.batch_size):
            batch = torch.stack(tensors[start:start + job.batch_size])
            out = trunk(batch)
            feats.append(out.reshape(out.shape[0], -1).double().numpy())
    data = np.concatenate(feats, axis=0)

    m = EmbeddingMatrix(ids=np.array(kept_ids), labels=np.array(kept_labels),
                        data=data, class_names=class_names)
    job.output_path.parent.mkdir(parents=True, exist_ok=True)
    save_embeddings(m, job.output_path, format=job.format)
    manifest_path = job.output_path.parent / "manifest.json"
    save_manifest(
        manifest_path, dataset=job.input_dir.name, class_names=class_names,
        embedding_path=job.output_path.name, dim=m.dim, n=m.n,
        provenance=f"extracted from {job.input_dir}",
        extra={"extractor": {
            "model-id": "vgg16" if job.weights is None
                        else f"vgg16:{Path(job.weights).name}",
            "input-size": [INPUT_SIZE, INPUT_SIZE],
            "preprocessing": {
                "resize": "bilinear",
                "crop": "none",
                "normalize_mean": list(NORM_MEAN),
                "normalize_std": list(NORM_STD),
            },
        }})
    log.info("wrote %d rows of dimension %d to %s", m.n, m.dim, job.output_path)
    return manifest_path
